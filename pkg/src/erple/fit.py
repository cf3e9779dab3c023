"""Damped least squares, line and decay models, and prominence peak detection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from .model import FitResult


class FitError(RuntimeError):
    pass


class RankDeficiencyError(FitError):
    """The normal matrix is singular: some parameter combination is unconstrained."""


class InsufficientDataError(FitError):
    pass


class ModelSelectionError(FitError):
    pass


# ---------------------------------------------------------------------------
# models


class ModelFunction:
    """A parametric curve ``y = f(x; p)``.

    Subclasses set ``names`` and ``units`` and implement ``__call__``.
    ``jacobian`` falls back to central finite differences.
    """

    names: tuple[str, ...] = ()
    units: tuple[str, ...] = ()

    def __call__(self, x, p):
        raise NotImplementedError

    def jacobian(self, x, p):
        return finite_difference_jacobian(self, x, p)

    @property
    def n_params(self):
        return len(self.names)


def finite_difference_jacobian(model, x, p, rel_step=1e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(len(p)):
        h = rel_step * max(abs(p[i]), 1e-3)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((model(x, up) - model(x, dn)) / (2 * h))
    return np.column_stack(cols)


class Lorentzian(ModelFunction):
    """Unit-peak Lorentzian times amplitude, plus a constant offset.

    With ``fm_width > 0`` the Lorentzian is averaged over a rectangular
    frequency-modulation kernel of that full width, so ``fwhm`` is the
    intrinsic width.
    """

    names = ("center", "fwhm", "amplitude", "offset")
    units = ("Hz", "Hz", "counts/pulse", "counts/pulse")

    def __init__(self, fm_width=0.0):
        self.fm_width = float(fm_width)

    def __call__(self, x, p):
        c, g, a, b = p
        x = np.asarray(x, dtype=float)
        w = self.fm_width
        if w <= 0:
            return a / (1.0 + (2.0 * (x - c) / g) ** 2) + b
        up = 2.0 * (x - c + w / 2) / g
        um = 2.0 * (x - c - w / 2) / g
        return a * (g / (2 * w)) * (np.arctan(up) - np.arctan(um)) + b

    def jacobian(self, x, p):
        c, g, a, b = p
        x = np.asarray(x, dtype=float)
        w = self.fm_width
        if w <= 0:
            u = 2.0 * (x - c) / g
            q = 1.0 / (1.0 + u * u)
            dc = a * q * q * 8.0 * (x - c) / g**2
            dg = a * q * q * 2.0 * u * u / g
            return np.column_stack([dc, dg, q, np.ones_like(x)])
        up = 2.0 * (x - c + w / 2) / g
        um = 2.0 * (x - c - w / 2) / g
        qp, qm = 1.0 / (1.0 + up * up), 1.0 / (1.0 + um * um)
        prof = (g / (2 * w)) * (np.arctan(up) - np.arctan(um))
        dc = a * (qm - qp) / w
        dg = a * (prof / g - (up * qp - um * qm) / (2 * w))
        return np.column_stack([dc, dg, prof, np.ones_like(x)])


class LorentzianDip(ModelFunction):
    """Plateau minus a Lorentzian hole."""

    names = ("plateau", "depth", "center", "fwhm")
    units = ("1", "1", "Hz", "Hz")

    def __call__(self, x, p):
        b, d, c, g = p
        return b - d / (1.0 + (2.0 * (np.asarray(x, float) - c) / g) ** 2)

    def jacobian(self, x, p):
        b, d, c, g = p
        x = np.asarray(x, float)
        u = 2.0 * (x - c) / g
        q = 1.0 / (1.0 + u * u)
        return np.column_stack([
            np.ones_like(x),
            -q,
            -d * q * q * 8.0 * (x - c) / g**2,
            -d * q * q * 2.0 * u * u / g,
        ])


class SingleExponential(ModelFunction):
    names = ("amplitude", "tau")
    units = ("counts/bin", "s")

    def __call__(self, t, p):
        a, tau = p
        return a * np.exp(-np.asarray(t, float) / tau)

    def jacobian(self, t, p):
        a, tau = p
        t = np.asarray(t, float)
        e = np.exp(-t / tau)
        return np.column_stack([e, a * e * t / tau**2])


class BiExponential(ModelFunction):
    names = ("amplitude1", "tau1", "amplitude2", "tau2")
    units = ("counts/bin", "s", "counts/bin", "s")

    def __call__(self, t, p):
        a1, t1, a2, t2 = p
        t = np.asarray(t, float)
        return a1 * np.exp(-t / t1) + a2 * np.exp(-t / t2)

    def jacobian(self, t, p):
        a1, t1, a2, t2 = p
        t = np.asarray(t, float)
        e1, e2 = np.exp(-t / t1), np.exp(-t / t2)
        return np.column_stack([e1, a1 * e1 * t / t1**2, e2, a2 * e2 * t / t2**2])


# ---------------------------------------------------------------------------
# engine


def aicc(chi2, n, k):
    """Corrected Akaike criterion for a fit whose weights are inverse variances."""
    if n - k - 1 <= 0:
        return math.inf
    return chi2 + 2 * k + 2 * k * (k + 1) / (n - k - 1)


def least_squares_fit(model, x, y, p0, weights=None, *, max_iter=200, xtol=1e-10,
                      gtol=1e-12, fixed=None):
    """Levenberg-Marquardt minimisation of ``sum w (y - f(x; p))**2``.

    Parameters are rescaled by the Jacobian column norms, so the damping
    (``1e-3`` times the largest diagonal of the scaled normal matrix at the
    start, /10 after an accepted step, x10 after a rejected one) acts evenly
    on parameters of very different magnitude.

    Iteration stops when every parameter moves by less than ``xtol`` relative
    to its value (or to its statistical resolution when smaller), or when the
    scaled gradient falls below ``gtol``.  Hitting ``max_iter`` returns an
    unconverged result rather than raising.

    Standard errors come from the inverse normal matrix scaled by the reduced
    chi-square.

    Raises
    ------
    InsufficientDataError
        Fewer than ``n_params + 1`` points.
    RankDeficiencyError
        Singular normal matrix at the start or at the solution.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(p0, dtype=float)
    k_all = len(p)
    free = np.ones(k_all, bool)
    if fixed:
        for name in fixed:
            free[model.names.index(name)] = False
    k = int(free.sum())
    n = len(y)
    if n < k + 1:
        raise InsufficientDataError(f"{n} points for {k} parameters")
    if not np.all(np.isfinite(p)):
        raise FitError("initial parameters must be finite")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)

    def residual(pp):
        return sw * (y - model(x, pp))

    def jac(pp):
        return sw[:, None] * model.jacobian(x, pp)[:, free]

    r = residual(p)
    if not np.all(np.isfinite(r)):
        raise FitError("model not finite at the initial parameters")
    rss = float(r @ r)
    J = jac(p)
    D = np.sqrt(np.sum(J * J, axis=0))
    if np.any(D == 0):
        raise RankDeficiencyError("a parameter has no effect on the model at the start point")
    lam = None
    converged = False
    message = "maximum iterations reached"
    it = 0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        Js = J / D
        A = Js.T @ Js
        g = Js.T @ r
        gnorm = float(np.max(np.abs(g)))
        if gnorm < gtol:
            converged, message = True, "gradient below tolerance"
            break
        if lam is None:
            lam = 1e-3 * float(np.max(np.diag(A)))
        accepted = False
        while True:
            try:
                u = np.linalg.solve(A + lam * np.eye(k), g)
            except np.linalg.LinAlgError:
                u = np.full(k, np.nan)
            step = u / D
            trial = p.copy()
            trial[free] += step
            r_new = residual(trial)
            rss_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if rss_new <= rss:
                accepted = True
                lam = max(lam / 10.0, 1e-300)
                break
            lam *= 10.0
            if lam > 1e20:
                break
        if not accepted:
            converged, message = True, "no further reduction at machine precision"
            break
        p, r, rss = trial, r_new, rss_new
        small = np.abs(step) <= xtol * np.maximum(np.abs(p[free]), 1.0 / D)
        J = jac(p)
        D = np.maximum(D, np.sqrt(np.sum(J * J, axis=0)))
        if np.all(small):
            converged, message = True, "relative parameter change below tolerance"
            break
    J = jac(p)
    Dn = np.sqrt(np.sum(J * J, axis=0))
    if np.any(Dn == 0):
        raise RankDeficiencyError("a parameter has no effect on the model at the solution")
    Js = J / Dn
    A = Js.T @ Js
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-14:
        raise RankDeficiencyError("normal matrix is singular at the solution")
    cov_s = np.linalg.inv(A)
    cov_free = cov_s / np.outer(Dn, Dn)
    dof = n - k
    s2 = rss / dof if dof > 0 else math.nan
    cov = np.zeros((k_all, k_all))
    cov[np.ix_(free, free)] = cov_free * s2
    errors = np.sqrt(np.clip(np.diag(cov), 0, None))
    g = Js.T @ r
    return FitResult(
        names=tuple(model.names),
        units=tuple(model.units),
        values=p,
        standard_errors=errors,
        residual_sum_of_squares=rss,
        information_criterion=aicc(rss, n, k),
        converged=converged,
        iterations=it,
        n_points=n,
        gradient_norm=float(np.max(np.abs(g))) if k else 0.0,
        message=message,
        covariance=cov,
    )


# ---------------------------------------------------------------------------
# peaks


@dataclass(frozen=True)
class PeakCandidate:
    index: int
    center_hz: float
    prominence: float
    left_base: int
    right_base: int
    height: float = float("nan")


def detect_peaks(spectrum, min_prominence=0.15, smooth_sigma_steps=0.0, values=None):
    """Local maxima with topographic prominence of at least ``min_prominence``.

    Prominence is measured in counts per pulse (counts divided by
    repetitions times efficiency).  ``values`` overrides the spectrum's own
    counts-per-pulse array (used for deblended spectra); ``smooth_sigma_steps``
    applies a Gaussian filter of that width in grid steps before the search.
    """
    y = spectrum.counts_per_pulse() if values is None else np.asarray(values, float)
    if len(y) == 0:
        raise ValueError("empty spectrum")
    if smooth_sigma_steps > 0:
        y = gaussian_filter1d(y.astype(float), smooth_sigma_steps, mode="nearest")
    idx, props = find_peaks(y, prominence=min_prominence)
    out = [
        PeakCandidate(
            index=int(i),
            center_hz=float(spectrum.frequency_hz[i]),
            prominence=float(pr),
            left_base=int(lb),
            right_base=int(rb),
            height=float(y[i]),
        )
        for i, pr, lb, rb in zip(idx, props["prominences"], props["left_bases"], props["right_bases"])
    ]
    return sorted(out, key=lambda c: c.center_hz)


def half_max_width(x, y, i, baseline):
    """FWHM estimate from the half-maximum crossings around index ``i``."""
    half = baseline + 0.5 * (y[i] - baseline)
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi] > half:
        hi += 1

    def cross(a, b):
        if y[a] == y[b]:
            return x[a]
        return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    left = cross(lo, lo + 1) if lo < i else x[i]
    right = cross(hi - 1, hi) if hi > i else x[i]
    step = abs(x[1] - x[0]) if len(x) > 1 else 1.0
    return max(right - left, step)


def local_baseline(y, candidate, reach=200):
    """Lowest value between the candidate's bases, or within ``reach`` steps when no bases are known."""
    lo, hi = candidate.left_base, candidate.right_base
    if hi - lo < 2:
        lo, hi = candidate.index - reach, candidate.index + reach
    lo, hi = max(lo, 0), min(hi, len(y) - 1)
    return float(np.min(y[lo:hi + 1]))


def peak_window(spectrum, candidate, neighbors=(), width_estimate=None, values=None):
    """Index slice around ``candidate``: center +- max(5 widths, 20 steps), clipped at neighbor midpoints."""
    x = spectrum.frequency_hz
    y = spectrum.counts_per_pulse() if values is None else values
    i = candidate.index
    if width_estimate is None:
        width_estimate = half_max_width(x, y, i, local_baseline(y, candidate))
    step = spectrum.protocol.step_hz
    half = max(5.0 * width_estimate, 20.0 * step)
    lo_f, hi_f = x[i] - half, x[i] + half
    for nb in neighbors:
        if nb.index == i:
            continue
        mid = 0.5 * (nb.center_hz + x[i])
        if nb.center_hz < x[i]:
            lo_f = max(lo_f, mid)
        else:
            hi_f = min(hi_f, mid)
    lo = int(np.searchsorted(x, lo_f, side="left"))
    hi = int(np.searchsorted(x, hi_f, side="right"))
    return slice(lo, hi), width_estimate


def fit_lorentzian_peak(spectrum, candidate, neighbors=(), other_model=None, width_estimate=None):
    """Fit one FM-broadened Lorentzian plus constant to the window around ``candidate``.

    ``other_model`` (counts per pulse on the full grid) is subtracted first,
    which is how neighbouring lines are removed during deblending.  Weights
    are Poisson, ``1/max(counts, 1)`` in count units.
    """
    y_all = spectrum.counts_per_pulse()
    if other_model is not None:
        y_all = y_all - other_model
    x_all = spectrum.frequency_hz
    sl, wguess = peak_window(spectrum, candidate, neighbors, width_estimate, values=y_all)
    x = x_all[sl]
    y = y_all[sl]
    if len(x) < 5:
        raise InsufficientDataError(f"fit window has {len(x)} points")
    scale = spectrum.scale
    weights = scale**2 / np.maximum(np.asarray(spectrum.counts[sl], float), 1.0)
    i = candidate.index - sl.start
    i = int(np.clip(i, 0, len(x) - 1))
    edge = max(2, len(x) // 10)
    baseline = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    baseline = min(baseline, float(y[i]))
    width0 = wguess
    amp0 = max(float(y[i]) - baseline, 1e-6)
    x0 = x[i]
    model = Lorentzian(spectrum.protocol.fm_broadening_hz)
    p0 = [0.0, width0, amp0, baseline]
    res = least_squares_fit(model, x - x0, y, p0, weights)
    vals = res.values.copy()
    vals[0] += x0
    vals[1] = abs(vals[1])
    res.values = vals
    return res


class MultiLorentzian(ModelFunction):
    """Sum of ``n`` FM-broadened Lorentzians sharing one constant offset.

    Parameters are ``(center_i, fwhm_i, amplitude_i)`` for each line, then
    the offset.
    """

    def __init__(self, n, fm_width=0.0):
        self.n = int(n)
        self.line = Lorentzian(fm_width)
        self.names = tuple(f"{a}_{i}" for i in range(self.n) for a in ("center", "fwhm", "amplitude")) + ("offset",)
        self.units = tuple(u for _ in range(self.n) for u in ("Hz", "Hz", "counts/pulse")) + ("counts/pulse",)

    def __call__(self, x, p):
        out = np.full(np.shape(x), p[-1], dtype=float)
        for i in range(self.n):
            out += self.line(x, (p[3 * i], p[3 * i + 1], p[3 * i + 2], 0.0))
        return out

    def jacobian(self, x, p):
        cols = [self.line.jacobian(x, (p[3 * i], p[3 * i + 1], p[3 * i + 2], 0.0))[:, :3] for i in range(self.n)]
        cols.append(np.ones((np.size(x), 1)))
        return np.hstack(cols)


# ---------------------------------------------------------------------------
# decay model selection

AICC_MARGIN = 10.0


def _log_linear_start(t, y):
    ok = y > 0
    if ok.sum() < 3:
        return max(float(np.max(y)), 1.0), float(np.ptp(t)) / 3 or 1.0
    sl, ic = np.polyfit(t[ok], np.log(y[ok]), 1, w=np.sqrt(y[ok]))
    tau = -1.0 / sl if sl < 0 else float(np.ptp(t))
    return float(np.exp(ic)), tau


def fit_decay(t, y, variance, kind="single"):
    """Weighted single- or bi-exponential fit; biexponential uses several starts."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    w = 1.0 / np.maximum(np.asarray(variance, float), 1.0)
    a0, tau0 = _log_linear_start(t, y)
    if kind == "single":
        return least_squares_fit(SingleExponential(), t, y, [a0, tau0], w)
    best = None
    for r1, r2, frac in ((0.3, 1.5, 0.5), (0.5, 2.0, 0.5), (0.2, 1.1, 0.3), (0.7, 3.0, 0.7),
                         (0.1, 1.0, 0.2), (0.9, 1.3, 0.5)):
        p0 = [a0 * frac, tau0 * r1, a0 * (1 - frac), tau0 * r2]
        try:
            r = least_squares_fit(BiExponential(), t, y, p0, w)
        except FitError:
            continue
        if not np.all(np.isfinite(r.values)) or r["tau1"] <= 0 or r["tau2"] <= 0:
            continue
        if best is None or (r.converged, -r.residual_sum_of_squares) > (best.converged, -best.residual_sum_of_squares):
            best = r
    if best is None:
        raise FitError("no biexponential start converged")
    if best["tau1"] > best["tau2"]:
        v, e = best.values, best.standard_errors
        order = [2, 3, 0, 1]
        cov = None if best.covariance is None else best.covariance[np.ix_(order, order)]
        best = FitResult(best.names, best.units, v[order], e[order], best.residual_sum_of_squares,
                         best.information_criterion, best.converged, best.iterations, best.n_points,
                         best.gradient_norm, best.message, cov)
    return best


def select_decay_model(trace, variance=None, t_min_s=0.0, t_max_s=None):
    """Choose between one and two exponentials for a (background-subtracted) decay.

    Parameters
    ----------
    trace : TimeTrace
        Counts per bin; bin start times are used as abscissa, which is exact
        for bin-integrated exponentials.
    variance : array_like, optional
        Per-bin variance.  Defaults to Poisson ``max(counts, 1)``; pass the
        sum of both traces' counts for a subtracted trace.
    t_min_s, t_max_s : float
        Fit range.

    Returns
    -------
    (str, FitResult)
        ``"biexponential"`` only when its AICc is lower by more than 10 and
        both amplitudes are positive; otherwise ``"single"``.
    """
    t = trace.t_start_s
    y = np.asarray(trace.counts, float)
    var = np.maximum(y, 1.0) if variance is None else np.asarray(variance, float)
    sel = t >= t_min_s - 1e-12
    if t_max_s is not None:
        sel &= t <= t_max_s + 1e-12
    t, y, var = t[sel], y[sel], var[sel]
    if len(t) < 20:
        raise InsufficientDataError(f"{len(t)} bins, need at least 20")
    single = bi = None
    try:
        single = fit_decay(t, y, var, "single")
    except FitError:
        pass
    try:
        bi = fit_decay(t, y, var, "bi")
    except FitError:
        pass
    ok_s = single is not None and single.converged
    ok_b = bi is not None and bi.converged and bi["amplitude1"] > 0 and bi["amplitude2"] > 0
    if not ok_s and not ok_b:
        raise ModelSelectionError("neither decay model converged")
    if ok_b and (not ok_s or single.information_criterion - bi.information_criterion > AICC_MARGIN):
        return "biexponential", bi
    return "single", single
