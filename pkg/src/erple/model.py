"""Domain types shared across the package, unit conversion and the line catalog.

Internally every frequency is in Hz and every time in seconds.  Wavelengths
(vacuum, nm) only appear at file boundaries and as the catalog key.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, asdict, replace
from importlib import resources
from typing import Mapping

import numpy as np

C_LIGHT = 299792458.0  # m/s, exact

CATALOG_COLUMNS = ("wavelength_nm", "fwhm_ghz", "lifetime_ms", "amplitude", "flags")
KNOWN_FLAGS = ("biexp", "weiss")


class CatalogParseError(ValueError):
    """Raised for a malformed or inconsistent catalog row.

    ``row`` is the zero-based index of the offending data row (header excluded).
    """

    def __init__(self, row, message):
        super().__init__(f"row {row}: {message}")
        self.row = row


def wavelength_to_frequency(wavelength_nm):
    """Vacuum wavelength in nm to optical frequency in Hz (scalar or array)."""
    lam = np.asarray(wavelength_nm, dtype=float)
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValueError("wavelength must be positive and finite")
    f = C_LIGHT / (lam * 1e-9)
    return float(f) if f.ndim == 0 else f


def frequency_to_wavelength(frequency_hz):
    """Optical frequency in Hz to vacuum wavelength in nm (scalar or array)."""
    f = np.asarray(frequency_hz, dtype=float)
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise ValueError("frequency must be positive and finite")
    lam = C_LIGHT / f * 1e9
    return float(lam) if lam.ndim == 0 else lam


@dataclass(frozen=True)
class SiteResonance:
    """One inhomogeneously broadened optical line.

    ``amplitude`` is the net peak height of the line in the survey spectrum in
    counts per excitation pulse, i.e. photons emitted inside the survey
    integration window per pulse, before detector efficiency.
    """

    wavelength_nm: float
    fwhm_hz: float
    amplitude: float
    lifetime_s: float | None = None
    second_lifetime_s: float | None = None
    second_fraction: float | None = None
    homogeneous_fwhm_hz: float | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("wavelength_nm", "fwhm_hz", "lifetime_s"):
            v = getattr(self, name)
            if v is None and name == "lifetime_s":
                continue
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise ValueError(f"amplitude must be nonnegative, got {self.amplitude!r}")
        if (self.second_lifetime_s is None) != (self.second_fraction is None):
            raise ValueError("second_lifetime_s and second_fraction go together")
        if self.second_lifetime_s is not None:
            if not self.second_lifetime_s > 0:
                raise ValueError("second_lifetime_s must be positive")
            if not 0 < self.second_fraction < 1:
                raise ValueError("second_fraction must lie in (0, 1)")
        if self.homogeneous_fwhm_hz is not None:
            if not 0 < self.homogeneous_fwhm_hz < self.fwhm_hz:
                raise ValueError("homogeneous_fwhm_hz must be positive and below fwhm_hz")
        bad = set(self.flags) - set(KNOWN_FLAGS)
        if bad:
            raise ValueError(f"unknown flags {sorted(bad)}")
        object.__setattr__(self, "flags", tuple(sorted(set(self.flags))))

    @property
    def frequency_hz(self):
        return wavelength_to_frequency(self.wavelength_nm)

    @property
    def biexponential(self):
        return "biexp" in self.flags

    def with_second_component(self, lifetime_s, fraction):
        return replace(self, second_lifetime_s=lifetime_s, second_fraction=fraction)


@dataclass(frozen=True)
class Catalog:
    """Ordered set of resonances, longest wavelength first."""

    resonances: tuple[SiteResonance, ...] = ()
    note: str = ""

    def __post_init__(self):
        res = tuple(sorted(self.resonances, key=lambda r: -r.wavelength_nm))
        f = np.array([r.frequency_hz for r in res])
        if len(f) > 1 and np.min(np.diff(f)) < 1e6:
            i = int(np.argmin(np.diff(f)))
            raise ValueError(
                f"centers {res[i].wavelength_nm} and {res[i + 1].wavelength_nm} nm closer than 1 MHz"
            )
        object.__setattr__(self, "resonances", res)

    def __len__(self):
        return len(self.resonances)

    def __iter__(self):
        return iter(self.resonances)

    def __getitem__(self, i):
        return self.resonances[i]

    @property
    def frequencies_hz(self):
        return np.array([r.frequency_hz for r in self.resonances])

    def nearest(self, wavelength_nm):
        """Resonance closest in wavelength to ``wavelength_nm``."""
        if not self.resonances:
            raise LookupError("empty catalog")
        return min(self.resonances, key=lambda r: abs(r.wavelength_nm - wavelength_nm))

    def subset(self, predicate):
        return Catalog(tuple(r for r in self.resonances if predicate(r)), self.note)


@dataclass(frozen=True)
class ScanProtocol:
    """Laser stepping and gating of the PLE survey."""

    start_nm: float = 1516.0
    stop_nm: float = 1550.0
    step_hz: float = 50e6
    fm_broadening_hz: float = 60e6
    pulse_duration_s: float = 100e-6
    window_start_s: float = 10e-6
    window_end_s: float = 1e-3
    repetitions: int = 1000

    def __post_init__(self):
        if not self.step_hz > 0:
            raise ValueError("step_hz must be positive")
        if self.fm_broadening_hz < 0:
            raise ValueError("fm_broadening_hz must be nonnegative")
        if not self.pulse_duration_s > 0:
            raise ValueError("pulse_duration_s must be positive")
        if self.window_start_s < 0 or not self.window_end_s > self.window_start_s:
            raise ValueError("integration window must satisfy 0 <= start < end")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValueError("repetitions must be a positive integer")
        if not (self.start_nm > 0 and self.stop_nm > 0):
            raise ValueError("wavelength bounds must be positive")

    @property
    def window_s(self):
        return self.window_end_s - self.window_start_s

    @property
    def frequency_bounds_hz(self):
        a = wavelength_to_frequency(self.start_nm)
        b = wavelength_to_frequency(self.stop_nm)
        return min(a, b), max(a, b)

    def frequency_grid(self):
        lo, hi = self.frequency_bounds_hz
        n = int(math.floor((hi - lo) / self.step_hz + 1e-9)) + 1
        return lo + self.step_hz * np.arange(n)


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon detector plus the wavelength-independent background.

    Background amplitudes are the total photons per pulse emitted by each
    component (integral from the end of the pulse to infinity) before
    detection efficiency.  Dark counts are added after the efficiency.
    """

    efficiency: float = 0.6627
    dark_count_rate_hz: float = 20.0
    background_fast_amplitude: float = 0.06
    background_fast_tau_s: float = 200e-6
    background_slow_amplitude: float = 0.06
    background_slow_tau_s: float = 800e-6

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if self.dark_count_rate_hz < 0:
            raise ValueError("dark_count_rate_hz must be nonnegative")
        if self.background_fast_amplitude < 0 or self.background_slow_amplitude < 0:
            raise ValueError("background amplitudes must be nonnegative")
        if not 0 < self.background_fast_tau_s < self.background_slow_tau_s:
            raise ValueError("need 0 < fast tau < slow tau")

    def background_components(self):
        return (
            (self.background_fast_amplitude, self.background_fast_tau_s),
            (self.background_slow_amplitude, self.background_slow_tau_s),
        )

    def without_background(self, dark=True):
        return replace(
            self,
            background_fast_amplitude=0.0,
            background_slow_amplitude=0.0,
            dark_count_rate_hz=0.0 if dark else self.dark_count_rate_hz,
        )


def exp_window_fraction(tau_s, t0, t1):
    """Fraction of an exponential decay emitted between ``t0`` and ``t1``."""
    return math.exp(-t0 / tau_s) - math.exp(-t1 / tau_s)


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``information_criterion`` is the small-sample corrected Akaike criterion
    computed from the weighted residual sum of squares.
    """

    names: tuple[str, ...]
    units: tuple[str, ...]
    values: np.ndarray
    standard_errors: np.ndarray
    residual_sum_of_squares: float
    information_criterion: float
    converged: bool
    iterations: int
    n_points: int
    gradient_norm: float = float("nan")
    message: str = ""
    covariance: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def error(self, name):
        return float(self.standard_errors[self.names.index(name)])

    def as_dict(self):
        return {
            "parameters": {n: float(v) for n, v in zip(self.names, self.values)},
            "units": dict(zip(self.names, self.units)),
            "standard_errors": {n: float(e) for n, e in zip(self.names, self.standard_errors)},
            "residual_sum_of_squares": float(self.residual_sum_of_squares),
            "information_criterion": float(self.information_criterion),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "n_points": int(self.n_points),
            "gradient_norm": float(self.gradient_norm),
            "message": self.message,
        }

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        names = tuple(d["parameters"])
        return cls(
            names=names,
            units=tuple(d["units"][n] for n in names),
            values=np.array([d["parameters"][n] for n in names], dtype=float),
            standard_errors=np.array([d["standard_errors"][n] for n in names], dtype=float),
            residual_sum_of_squares=d["residual_sum_of_squares"],
            information_criterion=d["information_criterion"],
            converged=d["converged"],
            iterations=d["iterations"],
            n_points=d["n_points"],
            gradient_norm=d.get("gradient_norm", float("nan")),
            message=d.get("message", ""),
        )


# ---------------------------------------------------------------------------
# catalog I/O


def _parse_flags(text, row):
    text = (text or "").strip()
    if not text:
        return ()
    flags = tuple(t.strip() for t in text.split("|"))
    for fl in flags:
        if fl not in KNOWN_FLAGS:
            raise CatalogParseError(row, f"unknown flag {fl!r}")
    return flags


def _records(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            yield from csv.DictReader(fh)
    elif hasattr(source, "read"):
        yield from csv.DictReader(source)
    else:
        yield from source


def load_catalog(source, note=""):
    """Build a :class:`Catalog` from a CSV path, a text stream, or an
    iterable of mappings keyed by the catalog column names.

    Raises
    ------
    CatalogParseError
        On a missing column, an unparseable or nonpositive number, an unknown
        flag, or a center duplicating an earlier row to within 1 MHz.
    """
    resonances = []
    seen = []
    for i, rec in enumerate(_records(source)):
        if not isinstance(rec, Mapping):
            raise CatalogParseError(i, "record is not a mapping")
        try:
            lam = float(rec["wavelength_nm"])
            fwhm = float(rec["fwhm_ghz"]) * 1e9
            tau_text = (rec["lifetime_ms"] or "").strip()
            tau = float(tau_text) * 1e-3 if tau_text else None
            amp = float(rec["amplitude"])
        except KeyError as exc:
            raise CatalogParseError(i, f"missing column {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise CatalogParseError(i, f"malformed number ({exc})") from None
        flags = _parse_flags(rec.get("flags"), i)
        try:
            r = SiteResonance(lam, fwhm, amp, tau, flags=flags)
        except ValueError as exc:
            raise CatalogParseError(i, str(exc)) from None
        f = r.frequency_hz
        for j, g in seen:
            if abs(f - g) < 1e6:
                raise CatalogParseError(i, f"center duplicates row {j}")
        seen.append((i, f))
        resonances.append(r)
    return Catalog(tuple(resonances), note)


def _fmt(x, digits=6):
    return f"{round(x, digits):.{digits}g}"


def catalog_rows(catalog):
    for r in catalog:
        yield {
            "wavelength_nm": f"{r.wavelength_nm:.3f}",
            "fwhm_ghz": _fmt(r.fwhm_hz / 1e9),
            "lifetime_ms": "" if r.lifetime_s is None else _fmt(r.lifetime_s * 1e3),
            "amplitude": _fmt(r.amplitude),
            "flags": "|".join(r.flags),
        }


def write_catalog(catalog, dest=None):
    """Write ``catalog`` as CSV to a path or stream; return the text if ``dest`` is None."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CATALOG_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in catalog_rows(catalog):
        w.writerow(row)
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        atomic_write_text(dest, text)
    return text


def atomic_write_text(path, text):
    """Write via a temporary sibling file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    tmp = os.path.join(d, f".{os.path.basename(path)}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _data_path(name):
    return resources.files("erple").joinpath("data", name)


def table1_catalog():
    """The bundled 70-line survey table."""
    with _data_path("table1.csv").open("r", encoding="utf-8", newline="") as fh:
        return load_catalog(fh, note="bundled survey table (70 lines)")


def table1_path():
    return str(_data_path("table1.csv"))


def offresonant_pairs(catalog=None, tolerance_nm=0.006):
    """Pair the tabulated off-resonant reference wavelengths with catalog lines.

    The reference table spells some centers a few pm differently from the main
    table; each row is matched one-to-one to the nearest catalog line within
    ``tolerance_nm``.  Returns ``{catalog wavelength: offresonant wavelength}``.
    Rows whose reference lies more than 1 nm from the line are dropped as
    transcription errors.
    """
    catalog = table1_catalog() if catalog is None else catalog
    with _data_path("offresonant_pairs.csv").open("r", encoding="utf-8") as fh:
        rows = [(float(r["resonant_nm"]), float(r["offresonant_nm"])) for r in csv.DictReader(fh)]
    lams = np.array([r.wavelength_nm for r in catalog])
    cand = []
    for k, (on, off) in enumerate(rows):
        for j, lam in enumerate(lams):
            d = abs(lam - on)
            if d <= tolerance_nm + 1e-9:
                cand.append((d, k, j))
    cand.sort()
    used_rows, used_lines, out = set(), set(), {}
    for d, k, j in cand:
        if k in used_rows or j in used_lines:
            continue
        used_rows.add(k)
        used_lines.add(j)
        on, off = rows[k]
        if abs(off - on) <= 1.0:
            out[float(lams[j])] = off
    return out


def lifetime_uncertainty_table():
    """Published per-line lifetime fitting error and spread, in seconds."""
    with _data_path("lifetime_uncertainty.csv").open("r", encoding="utf-8") as fh:
        return [
            (float(r["resonant_nm"]), float(r["average_fit_error_us"]) * 1e-6,
             float(r["lifetime_spread_us"]) * 1e-6)
            for r in csv.DictReader(fh)
        ]


def dataclass_to_dict(obj):
    return asdict(obj)


def dataclass_from_dict(cls, d, *, strict=True):
    """Instantiate a flat dataclass from ``d``, rejecting unknown keys."""
    names = set(cls.__dataclass_fields__)
    unknown = set(d) - names
    if unknown and strict:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: v for k, v in d.items() if k in names})
