import json
import math

import pytest

from erple.cavity import CavityDesign, SILICON_INDEX, mode_volume, purcell_from_mode_volume
from erple.model import C_LIGHT


def test_design_point():
    v, v_units = mode_volume(1540, 3.48, 1e6, 1e3)
    lam = 1540e-9
    assert v == pytest.approx(3 * lam**2 * C_LIGHT / (2 * math.pi * 3.48**3 * 1e12 * 1e3), rel=1e-14)
    assert v_units == pytest.approx(0.093, abs=5e-4)
    assert 0.085 <= v_units <= 0.105


def test_inverse_square_in_purcell_factor():
    assert mode_volume(1540, 3.48, 2e6, 1e3)[0] == pytest.approx(mode_volume(1540, 3.48, 1e6, 1e3)[0] / 4, rel=1e-14)


def test_units_consistent():
    for lam, n in ((1540, 3.48), (1520, 2.0), (900, 1.45)):
        v, u = mode_volume(lam, n, 3e5, 2e3)
        assert v == pytest.approx(u * (lam * 1e-9 / n) ** 3, rel=1e-12)


def test_round_trip():
    for f in (1e3, 1e6, 7.3e7):
        v, _ = mode_volume(1540, 3.48, f, 1e3)
        assert purcell_from_mode_volume(v, 1540, 3.48, 1e3) == pytest.approx(f, rel=1e-12)


def test_derived_rates():
    d = CavityDesign()
    assert d.refractive_index == SILICON_INDEX
    assert d.coupling_hz == 1e6 * 1e3 / 2
    assert d.kappa_hz == 4 * d.coupling_hz
    assert d.quality_factor == pytest.approx(C_LIGHT / 1540e-9 / d.kappa_hz)
    q = CavityDesign.from_quality_factor(1e5)
    assert 1.9e9 <= q.kappa_hz <= 2.0e9
    assert q.quality_factor == pytest.approx(1e5, rel=1e-12)


def test_validation_and_json():
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(ValueError):
            mode_volume(1540, 3.48, bad, 1e3)
        with pytest.raises(ValueError):
            CavityDesign(refractive_index=bad)
    d = CavityDesign(purcell_factor=3e5)
    assert CavityDesign.from_dict(json.loads(d.to_json())) == d
