"""Time-domain pulse physics: decay traces, two-level saturation, hole burning and Zeeman lines.

The excited-state fraction of a two-level ion driven at rate ``r`` obeys

    d rho / dt = r (1 - 2 rho) - rho / tau

so every stage of a pulse sequence with constant rate is an affine map
``rho -> a rho + b``.  Hole profiles compose these maps per ion detuning and
integrate over a locally flat inhomogeneous distribution.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, asdict, field, replace

import numpy as np
from scipy import constants
from scipy.integrate import trapezoid

from .model import (
    DetectorModel,
    ScanProtocol,
    atomic_write_text,
    dataclass_from_dict,
)
from .synth import line_profile, poisson_counts

BOHR_HZ_PER_T = constants.physical_constants["Bohr magneton in Hz/T"][0]
MERGE_HZ = 1e3
FAR_DETUNING_FACTOR = 20.0  # far-detuned limit of the reference formula, in units of gamma_D


class DomainError(ValueError):
    """Input outside the domain where the model is valid."""


# ---------------------------------------------------------------------------
# decay traces


@dataclass
class TimeTrace:
    """Counts in consecutive bins; t = 0 is the end of the excitation pulse.

    ``difference`` marks a background-subtracted trace, which may go negative.
    """

    counts: np.ndarray
    bin_width_s: float = 10e-6
    protocol: ScanProtocol = field(default_factory=ScanProtocol)
    seed: int | None = None
    label: str = ""
    difference: bool = False

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1:
            raise ValueError("counts must be 1-d")
        if not self.bin_width_s > 0:
            raise ValueError("bin width must be positive")
        if not self.difference and np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    def __len__(self):
        return len(self.counts)

    @property
    def t_start_s(self):
        return np.arange(len(self.counts)) * self.bin_width_s

    @property
    def t_center_s(self):
        return self.t_start_s + 0.5 * self.bin_width_s

    @property
    def duration_s(self):
        return len(self.counts) * self.bin_width_s

    def with_counts(self, counts, seed=None, label=None):
        return replace(self, counts=np.asarray(counts), seed=seed,
                       label=self.label if label is None else label)

    def __sub__(self, other):
        if len(other) != len(self) or abs(other.bin_width_s - self.bin_width_s) > 1e-15:
            raise ValueError("traces differ in binning")
        return replace(self, counts=np.asarray(self.counts, float) - np.asarray(other.counts, float),
                       seed=None, label=f"{self.label}-{other.label}", difference=True)


def _site_components(site, protocol):
    """(initial rate in photons/s, tau) per exponential of the site signal.

    The site amplitude is the photon count per pulse inside the survey window,
    so each component is scaled to integrate to its share of it there.
    """
    if site.amplitude == 0:
        return []
    if site.lifetime_s is None:
        raise ValueError("site needs a lifetime to generate a decay trace")
    parts = [(1.0, site.lifetime_s)]
    if site.second_lifetime_s is not None:
        f = site.second_fraction
        parts = [(1.0 - f, site.lifetime_s), (f, site.second_lifetime_s)]
    t0, t1 = protocol.window_start_s, protocol.window_end_s
    out = []
    for w, tau in parts:
        frac = math.exp(-t0 / tau) - math.exp(-t1 / tau)
        out.append((site.amplitude * w / (tau * frac), tau))
    return out


def _bin_integral(rate0, tau, t, dt):
    return rate0 * tau * np.exp(-t / tau) * -math.expm1(-dt / tau)


def decay_trace(site, detector=None, pulse=None, duration_s=5e-3, bin_width_s=10e-6,
                detuning_hz=0.0, include_site=True):
    """Expected counts per bin after the excitation pulse.

    Parameters
    ----------
    site : SiteResonance
        Line whose decay is recorded.  Its amplitude sets the photons emitted
        inside the survey window per pulse.
    detector : DetectorModel, optional
        Efficiency, dark counts and the biexponential background.
    pulse : ScanProtocol, optional
        Supplies repetitions and the survey window.
    duration_s, bin_width_s : float
        Record length and bin width.
    detuning_hz : float
        Laser offset from the line center; the site signal is scaled by the
        line's FM-averaged profile at this offset.
    include_site : bool
        ``False`` gives the background-only trace.
    """
    detector = DetectorModel() if detector is None else detector
    pulse = ScanProtocol() if pulse is None else pulse
    if duration_s < pulse.window_end_s:
        raise ValueError("trace must cover the integration window")
    n = int(round(duration_s / bin_width_s))
    t = np.arange(n) * bin_width_s
    emitted = np.zeros(n)
    if include_site:
        scale = float(line_profile(detuning_hz, site.fwhm_hz, pulse.fm_broadening_hz)) if detuning_hz else 1.0
        for r0, tau in _site_components(site, pulse):
            emitted += scale * _bin_integral(r0, tau, t, bin_width_s)
    for amp, tau in detector.background_components():
        emitted += _bin_integral(amp / tau, tau, t, bin_width_s)
    counts = pulse.repetitions * (detector.efficiency * emitted + detector.dark_count_rate_hz * bin_width_s)
    label = f"{site.wavelength_nm:.3f}nm{detuning_hz / 1e9:+.2f}GHz" if include_site else "background"
    return TimeTrace(counts, bin_width_s, pulse, None, label)


def sample_trace(trace, seed):
    return trace.with_counts(poisson_counts(trace.counts, seed), seed=int(seed))


def trace_csv_text(trace):
    buf = io.StringIO()
    buf.write("t_us,counts\n")
    integer = np.issubdtype(trace.counts.dtype, np.integer)
    for t, c in zip(trace.t_start_s, trace.counts):
        buf.write(f"{t * 1e6:.6g},{int(c)}\n" if integer else f"{t * 1e6:.6g},{c:.10g}\n")
    return buf.getvalue()


def write_trace(trace, path):
    atomic_write_text(path, trace_csv_text(trace))


def read_trace(path, protocol=None):
    """Load a ``t_us,counts`` CSV; bin width is inferred from the time column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"t_us", "counts"}:
        raise ValueError(f"{path}: expected columns t_us,counts")
    t = np.array([float(r["t_us"]) for r in rows]) * 1e-6
    raw = [r["counts"] for r in rows]
    try:
        c = np.array([int(x) for x in raw], dtype=np.int64)
    except ValueError:
        c = np.array([float(x) for x in raw])
    if len(t) < 2:
        raise ValueError(f"{path}: need at least two bins")
    dt = np.diff(t)
    if np.ptp(dt) > 1e-3 * dt[0] or abs(t[0]) > 1e-3 * dt[0]:
        raise ValueError(f"{path}: bins must be uniform and start at t = 0")
    return TimeTrace(c, float(np.round(np.mean(dt), 12)), protocol or ScanProtocol(), label=str(path))


# ---------------------------------------------------------------------------
# two-level saturation


def rho_res(t, pump_rate_hz, tau_s):
    """Excited fraction after resonant pumping for ``t`` from the ground state."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    k = 2.0 * pump_rate_hz + 1.0 / tau_s
    out = pump_rate_hz / k * -np.expm1(-k * t)
    return float(out) if out.ndim == 0 else out


def _stage(rate, t, tau):
    """Affine map (a, b) of the rate equation over a stage of length ``t``."""
    k = 2.0 * rate + 1.0 / tau
    a = np.exp(-k * t)
    b = rate / k * -np.expm1(-k * t)
    return a, b


@dataclass(frozen=True)
class HoleBurnConfig:
    """Pump-probe hole-burning sequence.

    The detuning grid is either listed explicitly or spans
    ``±detuning_span_hz`` (default ±20 gamma_D) with ``detuning_points`` points.
    ``periodic`` selects the steady state of the repeated sequence; otherwise
    each ion starts in the ground state.
    """

    pump_duration_s: float = 20e-6
    probe_duration_s: float | None = None
    delay_s: float = 0.0
    repetition_period_s: float = 3e-3
    detection_window_s: float = 1e-3
    sideband_separation_hz: float = 5e9
    pump_rate_hz: float = 50.0
    homogeneous_fwhm_hz: float = 0.75e6
    lifetime_s: float = 0.764e-3
    detuning_span_hz: float | None = None
    detuning_points: int = 401
    detunings_hz: tuple[float, ...] | None = None
    periodic: bool = True

    def __post_init__(self):
        if self.probe_duration_s is None:
            object.__setattr__(self, "probe_duration_s", self.pump_duration_s)
        if self.detunings_hz is not None:
            object.__setattr__(self, "detunings_hz", tuple(float(x) for x in self.detunings_hz))
        for name in ("pump_duration_s", "probe_duration_s", "repetition_period_s",
                     "detection_window_s", "homogeneous_fwhm_hz", "lifetime_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delay_s < 0 or self.pump_rate_hz < 0:
            raise ValueError("delay and pump rate must be nonnegative")
        if self.sequence_s > self.repetition_period_s:
            raise ValueError("pulse sequence longer than the repetition period")
        if self.detuning_points < 3:
            raise ValueError("need at least 3 detuning points")
        if self.repetition_period_s < 2 * self.lifetime_s:
            warnings.warn("repetition period shorter than two lifetimes; ions do not relax between shots",
                          stacklevel=2)

    @property
    def sequence_s(self):
        return self.pump_duration_s + self.delay_s + self.probe_duration_s

    @property
    def saturation(self):
        """Steady-state saturation parameter 2 R0 tau."""
        return 2.0 * self.pump_rate_hz * self.lifetime_s

    def detuning_grid(self):
        if self.detunings_hz is not None:
            return np.array(self.detunings_hz)
        span = FAR_DETUNING_FACTOR * self.homogeneous_fwhm_hz if self.detuning_span_hz is None \
            else self.detuning_span_hz
        return np.linspace(-span, span, self.detuning_points)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("detunings_hz") is not None:
            d["detunings_hz"] = tuple(d["detunings_hz"])
        return dataclass_from_dict(cls, d)


@dataclass
class HoleProfile:
    """Normalized post-probe fluorescence versus probe-pump detuning.

    ``meta`` carries the single-ion occupations at the two limits and the
    corresponding values of the reference formula, with their discrepancy.
    """

    detuning_hz: np.ndarray
    signal: np.ndarray
    config: HoleBurnConfig | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.detuning_hz = np.asarray(self.detuning_hz, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.detuning_hz.shape != self.signal.shape or self.signal.ndim != 1:
            raise ValueError("detuning and signal must be 1-d arrays of equal length")

    def __len__(self):
        return len(self.signal)


class _Sequence:
    """Per-ion evolution of one pump-delay-probe cycle."""

    def __init__(self, cfg):
        self.cfg = cfg
        tau = cfg.lifetime_s
        self.tau = tau
        self.delay_decay = math.exp(-cfg.delay_s / tau)
        self.rest_decay = math.exp(-(cfg.repetition_period_s - cfg.sequence_s) / tau)
        e_pump = -math.expm1(-cfg.pump_duration_s / tau)
        e_probe = -math.expm1(-cfg.probe_duration_s / tau)
        # first-order response of the end-of-probe occupation to each rate
        c1 = tau * e_pump * math.exp(-(cfg.delay_s + cfg.probe_duration_s) / tau)
        c2 = tau * e_probe
        if cfg.periodic:
            per = -math.expm1(-cfg.repetition_period_s / tau)
            c1, c2 = c1 / per, c2 / per
        self.c1, self.c2 = c1, c2

    def end_occupation(self, r1, r2):
        cfg = self.cfg
        a1, b1 = _stage(r1, cfg.pump_duration_s, self.tau)
        a2, b2 = _stage(r2, cfg.probe_duration_s, self.tau)
        A = a2 * self.delay_decay * a1
        B = a2 * self.delay_decay * b1 + b2
        if cfg.periodic:
            return B / (1.0 - A * self.rest_decay)
        return B

    def nonlinear_part(self, r1, r2):
        return self.end_occupation(r1, r2) - self.c1 * r1 - self.c2 * r2


def _lorentz(x, fwhm):
    return 1.0 / (1.0 + (2.0 * x / fwhm) ** 2)


def _hole_signals(cfg, detunings):
    """Unnormalized signals at ``detunings`` and the far-detuned plateau.

    Linear terms in the rates integrate to ``pi gamma / 2`` each and are
    added analytically; the remainder falls off as the fourth power of the
    ion detuning and is integrated by the trapezoid rule on a fine grid.
    """
    seq = _Sequence(cfg)
    g = cfg.homogeneous_fwhm_hz
    r0 = cfg.pump_rate_hz
    reach = float(np.max(np.abs(detunings))) + 60.0 * g
    step = g / 40.0
    n = int(math.ceil(reach / step))
    delta = np.arange(-n, n + 1) * step
    lin = (seq.c1 + seq.c2) * r0 * math.pi * g / 2.0
    lam_pump = r0 * _lorentz(delta, g)
    out = np.empty(len(detunings))
    for i, df in enumerate(detunings):
        rem = seq.nonlinear_part(lam_pump, r0 * _lorentz(delta - df, g))
        out[i] = lin + trapezoid(rem, delta)
    plateau = (lin + trapezoid(seq.nonlinear_part(lam_pump, 0.0), delta)
               + trapezoid(seq.nonlinear_part(0.0, lam_pump), delta))
    window = -math.expm1(-cfg.detection_window_s / cfg.lifetime_s)
    return out * window, plateau * window, seq


def simulate_hole(cfg):
    """Transient spectral hole of a flat inhomogeneous ensemble.

    Each ion at detuning ``delta`` sees the pump at rate ``R0 L(delta)`` and
    the probe at ``R0 L(delta - df)`` with ``L`` a unit-peak Lorentzian of
    FWHM gamma_D.  The signal is the photon yield of the detection window that
    opens when the probe ends, normalized to its far-detuned value.

    Raises
    ------
    DomainError
        If the detuning grid does not reach ±10 gamma_D.
    """
    df = cfg.detuning_grid()
    g = cfg.homogeneous_fwhm_hz
    if df.min() > -10 * g * (1 - 1e-9) or df.max() < 10 * g * (1 - 1e-9):
        raise DomainError("detuning grid must span at least ±10 homogeneous linewidths")
    raw, plateau, seq = _hole_signals(cfg, df)
    return HoleProfile(df, raw / plateau, cfg, _limit_meta(cfg, seq))


def _limit_meta(cfg, seq):
    r0, tp, tau = cfg.pump_rate_hz, cfg.pump_duration_s, cfg.lifetime_s
    resonant = float(seq.end_occupation(r0, r0))
    far = float(seq.end_occupation(r0, 0.0) + seq.end_occupation(0.0, r0))
    ref0 = rho_res(2 * tp, r0, tau)
    ref_far = 2 * rho_res(tp, r0, tau) * (1 - 0.5 * math.exp(-tp / tau))
    rel = lambda a, b: (a - b) / b if b else math.nan  # noqa: E731
    return {
        "resonant_occupation": resonant,
        "far_occupation": far,
        "reference_resonant": ref0,
        "reference_far": ref_far,
        "resonant_discrepancy": rel(resonant, ref0),
        "far_discrepancy": rel(far, ref_far),
        "reference_far_exceeds_resonant": bool(ref_far > ref0),
        "saturation": cfg.saturation,
        "pump_rate_times_duration": r0 * tp,
    }


def far_plateau_occupation(tp, tau, pump_rate_hz):
    """Occupation summed over the pumped and the probed ion classes when they do not overlap.

    The pumped class decays during the probe, so the total is
    ``rho_res(tp) (1 + exp(-tp/tau))`` for a single shot.
    """
    return rho_res(tp, pump_rate_hz, tau) * (1 + math.exp(-tp / tau))


def eq1_reference(tp, df, tau, pump_rate_hz, gamma_hz):
    """Two-limit reference occupation after equal pump and probe pulses.

    ``rho_res(2 tp)`` for ``df = 0`` and ``2 rho_res(tp) (1 - exp(-tp/tau)/2)``
    for ``|df| > 20 gamma``.  In between the two values are joined by the
    normalized depth of the single-shot rate-equation hole.
    """
    if not tp > 0:
        raise ValueError("tp must be positive")
    e0 = rho_res(2 * tp, pump_rate_hz, tau)
    efar = 2 * rho_res(tp, pump_rate_hz, tau) * (1 - 0.5 * math.exp(-tp / tau))
    df = abs(float(df))
    if df == 0:
        return e0
    if df > FAR_DETUNING_FACTOR * gamma_hz:
        return efar
    cfg = HoleBurnConfig(pump_duration_s=tp, pump_rate_hz=pump_rate_hz, homogeneous_fwhm_hz=gamma_hz,
                         lifetime_s=tau, periodic=False, repetition_period_s=max(3e-3, 4 * tp),
                         detunings_hz=(0.0, df))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        raw, plateau, _ = _hole_signals(cfg, np.array([0.0, df]))
    depth = 1 - raw / plateau
    h = depth[1] / depth[0] if depth[0] > 0 else 0.0
    return float(e0 + (efar - e0) * (1 - h))


def hole_csv_text(profile):
    buf = io.StringIO()
    buf.write("detuning_hz,signal_norm\n")
    for d, s in zip(profile.detuning_hz, profile.signal):
        buf.write(f"{d:.6f},{s:.12g}\n")
    return buf.getvalue()


def write_hole(profile, path):
    atomic_write_text(path, hole_csv_text(profile))


def read_hole(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"detuning_hz", "signal_norm"}:
        raise ValueError(f"{path}: expected columns detuning_hz,signal_norm")
    return HoleProfile([float(r["detuning_hz"]) for r in rows], [float(r["signal_norm"]) for r in rows])


def noisy_hole(profile, noise, seed):
    """Profile plus white Gaussian noise of standard deviation ``noise``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    return replace(profile, signal=profile.signal + noise * rng.standard_normal(len(profile)),
                   meta={**profile.meta, "noise": noise, "seed": int(seed)})


# ---------------------------------------------------------------------------
# Zeeman splitting


@dataclass(frozen=True)
class ZeemanSubsite:
    """One magnetically inequivalent orientation of a site.

    ``weights`` holds one ``(a, phi_deg, b)`` triple per branch, giving the
    intensity ``a cos^2(theta - phi) + b`` at polarization angle ``theta``.
    Branches are ordered as offsets ``+(ge+gg)``, ``-(ge+gg)``, ``+(ge-gg)``,
    ``-(ge-gg)`` in units of ``mu_B B / 2h``.
    """

    g_ground: float
    g_excited: float
    weights: tuple = ((1.0, 0.0, 0.0),) * 4

    def __post_init__(self):
        if self.g_ground < 0 or self.g_excited < 0:
            raise ValueError("g-factors must be nonnegative")
        w = tuple(tuple(float(v) for v in t) for t in self.weights)
        if len(w) != 4 or any(len(t) != 3 for t in w):
            raise ValueError("weights need four (a, phi_deg, b) triples")
        if any(a < 0 or b < 0 for a, _, b in w):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    def branch_intensities(self, polarization_deg):
        th = math.radians(polarization_deg)
        return [a * math.cos(th - math.radians(phi)) ** 2 + b for a, phi, b in self.weights]

    def branch_offsets(self, field_t):
        u = BOHR_HZ_PER_T * field_t / 2.0
        s, d = self.g_excited + self.g_ground, self.g_excited - self.g_ground
        return [s * u, -s * u, d * u, -d * u]


@dataclass(frozen=True)
class ZeemanSite:
    center_hz: float = 0.0
    subsites: tuple = (ZeemanSubsite(0.5, 1.5),)
    max_field_t: float = 0.06

    def __post_init__(self):
        subs = tuple(s if isinstance(s, ZeemanSubsite) else ZeemanSubsite(**s) for s in self.subsites)
        if not 1 <= len(subs) <= 24:
            raise ValueError("a site has between 1 and 24 subsites")
        object.__setattr__(self, "subsites", subs)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"center_hz", "subsites", "max_field_t"}
        if set(d) - known:
            raise ValueError(f"unknown ZeemanSite keys: {sorted(set(d) - known)}")
        subs = []
        for s in d.get("subsites", ()):
            if set(s) - {"g_ground", "g_excited", "weights"}:
                raise ValueError(f"unknown subsite keys: {sorted(set(s) - {'g_ground', 'g_excited', 'weights'})}")
            subs.append(ZeemanSubsite(**s))
        if subs:
            d["subsites"] = tuple(subs)
        return cls(**d)


def zeeman_lines(site, field_t, polarization_deg=0.0):
    """Offsets from the zero-field center and relative intensities, sorted by offset.

    Lines closer than 1 kHz merge into one at the intensity-weighted mean
    offset; zero-intensity branches are dropped.
    """
    if abs(field_t) > site.max_field_t:
        raise DomainError(f"|B| = {abs(field_t)} T exceeds the {site.max_field_t} T limit")
    raw = []
    for sub in site.subsites:
        raw.extend(zip(sub.branch_offsets(field_t), sub.branch_intensities(polarization_deg)))
    raw = sorted((o, w) for o, w in raw if w > 0)
    lines = []
    group = []
    for o, w in raw:
        if group and o - group[0][0] > MERGE_HZ:
            lines.append(_merge(group))
            group = []
        group.append((o, w))
    if group:
        lines.append(_merge(group))
    return lines


def _merge(group):
    w = sum(x for _, x in group)
    return (sum(o * x for o, x in group) / w, w)


def reverse_field_check(site, field_t, polarization_deg=0.0):
    """Line lists at ``+B`` and ``-B``."""
    return zeeman_lines(site, field_t, polarization_deg), zeeman_lines(site, -field_t, polarization_deg)


def six_line_example_site():
    """Six-subsite site whose branches are degenerate in pairs: six lines at 50 mT.

    Zero ground g-factor folds each subsite's four branches onto two offsets,
    and the subsites come in three pairs sharing an excited g-factor.
    """
    subs = []
    for ge in (0.8, 1.9, 3.1):
        for phi in (0.0, 90.0):
            subs.append(ZeemanSubsite(0.0, ge, ((1.0, phi, 0.2),) * 4))
    return ZeemanSite(0.0, tuple(subs))


def two_arm_example_site():
    """Single subsite with unequal arm weights and a small ground g-factor."""
    w = ((1.0, 0.0, 0.1), (0.3, 0.0, 0.1), (1.0, 0.0, 0.1), (0.3, 0.0, 0.1))
    return ZeemanSite(0.0, (ZeemanSubsite(0.2, 2.0, w),))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
