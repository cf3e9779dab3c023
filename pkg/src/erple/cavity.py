"""Purcell-enhancement design numbers at the weak/strong coupling boundary.

With cavity damping ``kappa = 4 g`` the Purcell factor ``F = 2 g / gamma_bulk``
fixes the coupling, and the mode volume needed to reach it is

    V_m = 3 lambda^2 c / (2 pi n^3 F^2 gamma_bulk)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

from .model import C_LIGHT, dataclass_from_dict

SILICON_INDEX = 3.48


def _check_positive(**kw):
    for k, v in kw.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValueError(f"{k} must be positive, got {v!r}")


def mode_volume(wavelength_nm, refractive_index, purcell_factor, gamma_bulk_hz):
    """Mode volume for a target Purcell factor.

    Returns
    -------
    (float, float)
        Volume in m^3 and in units of ``(lambda/n)^3``.
    """
    _check_positive(wavelength_nm=wavelength_nm, refractive_index=refractive_index,
                    purcell_factor=purcell_factor, gamma_bulk_hz=gamma_bulk_hz)
    lam = wavelength_nm * 1e-9
    v = 3 * lam**2 * C_LIGHT / (2 * math.pi * refractive_index**3 * purcell_factor**2 * gamma_bulk_hz)
    return v, v / (lam / refractive_index) ** 3


def purcell_from_mode_volume(volume_m3, wavelength_nm, refractive_index, gamma_bulk_hz):
    """Inverse of :func:`mode_volume` for the Purcell factor."""
    _check_positive(volume_m3=volume_m3, wavelength_nm=wavelength_nm, refractive_index=refractive_index,
                    gamma_bulk_hz=gamma_bulk_hz)
    lam = wavelength_nm * 1e-9
    return math.sqrt(3 * lam**2 * C_LIGHT / (2 * math.pi * refractive_index**3 * volume_m3 * gamma_bulk_hz))


@dataclass(frozen=True)
class CavityDesign:
    wavelength_nm: float = 1540.0
    refractive_index: float = SILICON_INDEX
    gamma_bulk_hz: float = 1e3
    purcell_factor: float = 1e6

    def __post_init__(self):
        _check_positive(**asdict(self))

    @classmethod
    def from_quality_factor(cls, q, wavelength_nm=1540.0, refractive_index=SILICON_INDEX, gamma_bulk_hz=1e3):
        """Design whose damping ``kappa = f / Q`` sits at ``kappa = 4 g``."""
        _check_positive(q=q)
        kappa = C_LIGHT / (wavelength_nm * 1e-9) / q
        return cls(wavelength_nm, refractive_index, gamma_bulk_hz, 2 * (kappa / 4) / gamma_bulk_hz)

    @property
    def frequency_hz(self):
        return C_LIGHT / (self.wavelength_nm * 1e-9)

    @property
    def coupling_hz(self):
        return self.purcell_factor * self.gamma_bulk_hz / 2

    @property
    def kappa_hz(self):
        return 4 * self.coupling_hz

    @property
    def quality_factor(self):
        return self.frequency_hz / self.kappa_hz

    @property
    def mode_volume_m3(self):
        return mode_volume(self.wavelength_nm, self.refractive_index, self.purcell_factor, self.gamma_bulk_hz)[0]

    @property
    def mode_volume_cubic_wavelengths(self):
        """Mode volume in units of ``(lambda/n)^3``."""
        return mode_volume(self.wavelength_nm, self.refractive_index, self.purcell_factor, self.gamma_bulk_hz)[1]

    def as_dict(self):
        d = asdict(self)
        d.update(
            coupling_hz=self.coupling_hz,
            kappa_hz=self.kappa_hz,
            quality_factor=self.quality_factor,
            mode_volume_m3=self.mode_volume_m3,
            mode_volume_cubic_wavelengths=self.mode_volume_cubic_wavelengths,
        )
        return d

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        derived = {"coupling_hz", "kappa_hz", "quality_factor", "mode_volume_m3", "mode_volume_cubic_wavelengths"}
        return dataclass_from_dict(cls, {k: v for k, v in d.items() if k not in derived})
