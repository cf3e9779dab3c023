"""Lifetime extraction by subtracting an off-resonant background decay."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from ..fit import BiExponential, FitError, SingleExponential, fit_decay, select_decay_model
from ..dynamics import decay_trace
from ..model import (
    FitResult,
    ScanProtocol,
    lifetime_uncertainty_table,
    offresonant_pairs,
    table1_catalog,
    wavelength_to_frequency,
)

FIT_START_S = 10e-6
MISMATCH_SIGMA = 4.0
MISMATCH_BLOCK = 10
NO_SIGNAL_SIGMA = 3.0
VARIANCE_SMOOTH_BINS = 9
REFERENCE_LINE_NM = 1527.565


@dataclass
class LifetimeResult:
    """Decay model chosen for an on-minus-off difference trace.

    ``lifetime_s`` is the single-exponential constant, or the longer-lived
    component's constant for a biexponential pick; both are in ``fit``.
    """

    model: str
    fit: FitResult | None
    lifetime_s: float
    lifetime_error_s: float
    net_counts: float
    net_counts_error: float
    no_signal: bool = False
    warnings: list = field(default_factory=list)
    label: str = ""

    def as_dict(self):
        return {
            "label": self.label,
            "model": self.model,
            "lifetime_s": self.lifetime_s,
            "lifetime_error_s": self.lifetime_error_s,
            "net_counts": self.net_counts,
            "net_counts_error": self.net_counts_error,
            "no_signal": self.no_signal,
            "warnings": list(self.warnings),
            "fit": None if self.fit is None else self.fit.as_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)


def _check_pair(on_res, off_res):
    if len(on_res) != len(off_res) or not math.isclose(on_res.bin_width_s, off_res.bin_width_s,
                                                       rel_tol=1e-9):
        raise ValueError("on- and off-resonant traces must share bin width and duration")


def extract_lifetime(on_res, off_res, weighting="poisson", t_max_s=None):
    """Fit the decay of ``on_res - off_res`` from the first bin at least 10 us after the pulse.

    Parameters
    ----------
    on_res, off_res : TimeTrace
        Traces recorded on the line and at an offset where it is absent.
    weighting : {"poisson", "uniform"}
        Poisson weights use the locally averaged ``on + off`` counts as the
        variance of the difference; uniform weights make the result depend on the difference
        alone.
    t_max_s : float, optional
        End of the fit range.

    Returns
    -------
    LifetimeResult
        ``no_signal`` is set when the net counts are within 3 standard
        errors of zero; a background-mismatch warning is attached when a
        block of the difference dips below zero by more than 4 sigma.
    """
    _check_pair(on_res, off_res)
    diff = on_res - off_res
    # variance from locally averaged counts; weighting by each bin's own count biases
    # the lifetime low where counts are few
    raw_var = np.asarray(on_res.counts, float) + np.asarray(off_res.counts, float)
    var = np.maximum(uniform_filter1d(raw_var, VARIANCE_SMOOTH_BINS, mode="nearest"), 1.0)
    t = diff.t_start_s
    sel = t >= FIT_START_S - 1e-12
    if t_max_s is not None:
        sel &= t <= t_max_s + 1e-12
    d = np.asarray(diff.counts, float)
    net = float(d[sel].sum())
    net_err = float(math.sqrt(var[sel].sum()))
    warn = []
    nb = int(sel.sum()) // MISMATCH_BLOCK
    if nb:
        idx = np.nonzero(sel)[0][: nb * MISMATCH_BLOCK]
        bs = d[idx].reshape(nb, MISMATCH_BLOCK).sum(axis=1)
        bv = var[idx].reshape(nb, MISMATCH_BLOCK).sum(axis=1)
        z = bs / np.sqrt(bv)
        if z.min() < -MISMATCH_SIGMA:
            k = int(np.argmin(z))
            warn.append(f"background mismatch: difference is {z[k]:.1f} sigma below zero near "
                        f"t = {t[idx[k * MISMATCH_BLOCK]] * 1e6:.0f} us")
    no_signal = abs(net) < NO_SIGNAL_SIGMA * net_err
    if no_signal:
        warn.append("no signal: net counts consistent with zero")
        return LifetimeResult("none", None, math.nan, math.nan, net, net_err, True, warn, on_res.label)
    if weighting == "poisson":
        v = var[sel]
    elif weighting == "uniform":
        # one variance for all bins, from bin-to-bin scatter of the difference itself
        v = np.full(int(sel.sum()), max(float(np.mean(np.diff(d[sel]) ** 2)) / 2, 1.0))
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    sub = diff.with_counts(d[sel])
    try:
        kind, fit = select_decay_model(sub, variance=v)
        if weighting == "poisson":
            # second pass with variances from smooth models of both traces
            v = _model_variance(fit, off_res, sel, var)
            kind, fit = select_decay_model(sub, variance=v)
    except FitError as exc:
        warn.append(f"{type(exc).__name__}: {exc}")
        return LifetimeResult("failed", None, math.nan, math.nan, net, net_err, False, warn, on_res.label)
    # the fit sees bins from t = 0 again; shift amplitudes back to the pulse end
    shift = float(t[sel][0])
    fit = _shift_origin(fit, shift)
    name = "tau" if kind == "single" else "tau2"
    return LifetimeResult(kind, fit, float(fit[name]), float(fit.error(name)), net, net_err, False, warn,
                          on_res.label)


def _model_variance(fit, off_res, sel, fallback):
    t = np.arange(int(sel.sum())) * off_res.bin_width_s
    off = np.asarray(off_res.counts, float)[sel]
    try:
        off_fit = fit_decay(t, off, fallback[sel] / 2, "bi")
        off_model = BiExponential()(t, off_fit.values)
        if not off_fit.converged or not np.all(np.isfinite(off_model)):
            raise FitError("background model did not converge")
    except FitError:
        off_model = uniform_filter1d(off, VARIANCE_SMOOTH_BINS, mode="nearest")
    model = SingleExponential() if len(fit.values) == 2 else BiExponential()
    return np.maximum(model(t, fit.values) + 2 * np.maximum(off_model, 0), 1.0)


def _shift_origin(fit, shift):
    if shift == 0:
        return fit
    v = fit.values.copy()
    e = fit.standard_errors.copy()
    for i, name in enumerate(fit.names):
        if name.startswith("amplitude"):
            tau = v[fit.names.index(name.replace("amplitude", "tau"))]
            v[i] *= math.exp(shift / tau)
            e[i] *= math.exp(shift / tau)
    return FitResult(fit.names, fit.units, v, e, fit.residual_sum_of_squares, fit.information_criterion,
                     fit.converged, fit.iterations, fit.n_points, fit.gradient_norm, fit.message,
                     fit.covariance)


def offresonant_detuning_hz(site, pairs=None):
    """Offset of the background trace: the tabulated partner if any, else 2 FWHM above the line."""
    pairs = offresonant_pairs() if pairs is None else pairs
    key = round(site.wavelength_nm, 3)
    if key in pairs:
        return float(wavelength_to_frequency(pairs[key]) - site.frequency_hz)
    return 2.0 * site.fwhm_hz


def expected_lifetime_error(site, detuning_hz=None, protocol=None, detector=None, duration_s=5e-3):
    """Standard error of the fitted lifetime from the Fisher information of noiseless traces."""
    protocol = ScanProtocol() if protocol is None else protocol
    detuning_hz = offresonant_detuning_hz(site) if detuning_hz is None else detuning_hz
    on = decay_trace(site, detector, protocol, duration_s)
    off = decay_trace(site, detector, protocol, duration_s, detuning_hz=detuning_hz)
    sel = on.t_start_s >= FIT_START_S - 1e-12
    d = (on.counts - off.counts)[sel]
    t = np.arange(len(d)) * on.bin_width_s
    tau = site.lifetime_s
    a = d[0]
    jac = SingleExponential().jacobian(t, [a, tau])
    info = jac.T @ (jac / (on.counts + off.counts)[sel][:, None])
    return float(math.sqrt(np.linalg.inv(info)[1, 1]))


def reference_statistics_repetitions(site=None, target_error_s=None):
    """Repetitions at which the lifetime error of ``site`` matches the tabulated average fit error.

    Defaults to the 1527.565 nm line and its 2.516 us average fitting error.
    """
    if site is None:
        site = table1_catalog().nearest(REFERENCE_LINE_NM)
    if target_error_s is None:
        table = {round(lam, 3): err for lam, err, _ in lifetime_uncertainty_table()}
        target_error_s = table[round(site.wavelength_nm, 3)]
    ref = 1000
    err = expected_lifetime_error(site, protocol=ScanProtocol(repetitions=ref))
    return int(math.ceil(ref * (err / target_error_s) ** 2))


# ---------------------------------------------------------------------------
# dependence on the choice of background trace

STUDY_OFFSETS_HZ = tuple(x * 1e9 for x in (-2.5, -1.5, -0.5, 0.5, 1.5, 2.5))


@dataclass
class BackgroundStudy:
    """Lifetimes from one on-resonance trace against six background traces."""

    offsets_hz: tuple
    entries: list
    mean_fit_error_s: float
    lifetime_spread_s: float
    ratio_of_means: float
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {
            "offsets_hz": list(self.offsets_hz),
            "entries": [e.as_dict() for e in self.entries],
            "mean_fit_error_s": self.mean_fit_error_s,
            "lifetime_spread_s": self.lifetime_spread_s,
            "ratio_of_means": self.ratio_of_means,
            "notes": list(self.notes),
        }

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)


def background_choice_study(on_res, off_traces, offsets_hz=STUDY_OFFSETS_HZ):
    """Lifetime fit against each of six background traces.

    Reports the mean fitting error, the standard deviation of the fitted
    lifetimes and their ratio.  Failed or unconverged fits are kept in
    ``entries`` but left out of the aggregates.
    """
    if len(off_traces) != 6 or len(offsets_hz) != 6:
        raise ValueError("exactly six background traces are required")
    entries = [extract_lifetime(on_res, off) for off in off_traces]
    notes = []
    good = []
    for off, e in zip(offsets_hz, entries):
        if e.fit is None or not e.fit.converged or not math.isfinite(e.lifetime_s):
            notes.append(f"offset {off / 1e9:+.1f} GHz excluded: {e.model}")
        else:
            good.append(e)
    if len(good) < 2:
        notes.append("fewer than two usable fits; aggregates undefined")
        return BackgroundStudy(tuple(offsets_hz), entries, math.nan, math.nan, math.nan, notes)
    err = float(np.mean([e.lifetime_error_s for e in good]))
    spread = float(np.std([e.lifetime_s for e in good], ddof=1))
    return BackgroundStudy(tuple(offsets_hz), entries, err, spread, spread / err if err > 0 else math.inf,
                           notes)


def aggregate_studies(studies):
    """Average spread/error over several studies, as mean of ratios and as ratio of means."""
    ok = [s for s in studies if math.isfinite(s.ratio_of_means)]
    if not ok:
        return {"mean_of_ratios": math.nan, "ratio_of_means": math.nan, "studies": 0}
    return {
        "mean_of_ratios": float(np.mean([s.lifetime_spread_s / s.mean_fit_error_s for s in ok])),
        "ratio_of_means": float(np.mean([s.lifetime_spread_s for s in ok])
                                / np.mean([s.mean_fit_error_s for s in ok])),
        "studies": len(ok),
    }
