"""Survey spectrum -> line catalog.

Lines in the survey overlap: close pairs share raised saddles, and a weak
line sitting on a strong neighbour's tail can have almost no topographic
prominence of its own.  The pipeline therefore deblends before it applies
the prominence rule:

1. Greedy search.  Repeatedly take the largest Poisson-significant maximum
   of the smoothed residual (data minus background minus lines found so far),
   fit one Lorentzian there with the other lines subtracted, then jointly
   refit the local group of overlapping lines.
2. Merge test.  Near-coincident pairs are kept as two lines only if the
   corrected Akaike criterion improves by more than 10.
3. Acceptance.  A line is kept when its prominence in the deblended spectrum
   (data minus every *other* fitted line) reaches ``min_prominence`` and its
   fitted amplitude is at least ``min_significance`` standard errors.
4. Each kept line gets a final single-line fit (window rule of
   :func:`erple.fit.fit_lorentzian_peak`) with all other components, kept or
   not, subtracted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import peak_prominences

from ..fit import (
    FitError,
    Lorentzian,
    MultiLorentzian,
    PeakCandidate,
    aicc,
    fit_lorentzian_peak,
    least_squares_fit,
)
from ..model import Catalog, SiteResonance, frequency_to_wavelength

log = logging.getLogger(__name__)

MAX_GROUP = 8


@dataclass
class SurveyLine:
    center_hz: float
    fwhm_hz: float
    amplitude: float
    amplitude_error: float
    prominence: float
    significance: float
    fit: object = None
    error: str | None = None

    @property
    def wavelength_nm(self):
        return frequency_to_wavelength(self.center_hz)

    def as_dict(self):
        return {
            "wavelength_nm": round(self.wavelength_nm, 6),
            "center_hz": self.center_hz,
            "fwhm_hz": self.fwhm_hz,
            "amplitude": self.amplitude,
            "amplitude_error": self.amplitude_error,
            "prominence": self.prominence,
            "significance": self.significance,
            "fit": None if self.fit is None else self.fit.as_dict(),
            "error": self.error,
        }


@dataclass
class SurveyResult:
    catalog: Catalog
    lines: list
    rejected: list = field(default_factory=list)
    background: float = 0.0

    def as_dict(self):
        return {
            "n_lines": len(self.lines),
            "background_counts_per_pulse": self.background,
            "lines": [ln.as_dict() for ln in self.lines],
            "rejected": [ln.as_dict() for ln in self.rejected],
        }


class _Deblender:
    def __init__(self, spectrum, smooth_sigma):
        self.sp = spectrum
        self.x = spectrum.frequency_hz
        self.y = spectrum.counts_per_pulse().astype(float)
        self.w = spectrum.scale**2 / np.maximum(np.asarray(spectrum.counts, float), 1.0)
        self.line = Lorentzian(spectrum.protocol.fm_broadening_hz)
        self.step = spectrum.protocol.step_hz
        self.sigma = smooth_sigma
        self.bg = float(np.median(self.y))
        self.params = {}
        self.errors = {}
        self.profiles = {}
        self.total = np.zeros_like(self.y)
        self._next = 0
        var = 1.0 / self.w
        if smooth_sigma > 0:
            r = int(4 * smooth_sigma) + 1
            k = np.exp(-0.5 * (np.arange(-r, r + 1) / smooth_sigma) ** 2)
            k /= k.sum()
            self.noise = np.sqrt(np.convolve(var, k * k, mode="same"))
        else:
            self.noise = np.sqrt(var)

    def smooth(self, a):
        return gaussian_filter1d(a, self.sigma, mode="nearest") if self.sigma > 0 else a

    def profile(self, p):
        return self.line(self.x, (p[0], p[1], p[2], 0.0))

    def set(self, key, p, err=math.nan):
        if key in self.profiles:
            self.total -= self.profiles[key]
        prof = self.profile(p)
        self.params[key] = tuple(float(v) for v in p)
        self.errors[key] = float(err)
        self.profiles[key] = prof
        self.total += prof

    def remove(self, key):
        self.total -= self.profiles.pop(key)
        del self.params[key]
        del self.errors[key]

    def add(self, p, err=math.nan):
        key = self._next
        self._next += 1
        self.set(key, p, err)
        return key

    def others(self, keys):
        out = self.total.copy()
        for k in keys:
            out -= self.profiles[k]
        return out

    def group(self, key):
        c, w, _ = self.params[key]
        near = [
            (abs(p[0] - c), k) for k, p in self.params.items()
            if abs(p[0] - c) < 3.0 * max(w, p[1]) + 10 * self.step
        ]
        return [k for _, k in sorted(near)[:MAX_GROUP]]

    def window(self, plist):
        lo = min(min(c - 5 * w, c - 20 * self.step) for c, w, _ in plist)
        hi = max(max(c + 5 * w, c + 20 * self.step) for c, w, _ in plist)
        return slice(int(np.searchsorted(self.x, lo)), int(np.searchsorted(self.x, hi, side="right")))

    def fit_group(self, keys, plist=None, sl=None):
        """Joint fit of ``keys`` (or of the trial parameters ``plist``) with everything else held fixed."""
        plist = [self.params[k] for k in keys] if plist is None else plist
        sl = self.window(plist) if sl is None else sl
        x = self.x[sl]
        if len(x) < 3 * len(plist) + 2:
            return None
        x0 = x[len(x) // 2]
        target = (self.y - self.bg - self.others(keys))[sl]
        p0 = [v for c, w, a in plist for v in (c - x0, w, a)] + [0.0]
        try:
            res = least_squares_fit(MultiLorentzian(len(plist), self.line.fm_width), x - x0, target, p0, self.w[sl])
        except (FitError, np.linalg.LinAlgError):
            return None
        v = res.values
        out = []
        for i in range(len(plist)):
            c, w, a = v[3 * i] + x0, abs(v[3 * i + 1]), v[3 * i + 2]
            if not (a > 0 and self.step / 10 < w < 50e9 and x[0] <= c <= x[-1]):
                return None
            out.append(((c, w, a), res.standard_errors[3 * i + 2]))
        if not res.converged:
            return None
        return out, res

    def refit(self, keys):
        got = self.fit_group(keys)
        if got is None:
            return False
        for k, (p, e) in zip(keys, got[0]):
            self.set(k, p, e)
        return True

    def try_merge(self, a, b):
        """Replace lines ``a`` and ``b`` by one when two lines are not clearly better."""
        keys = [k for k in self.group(a) if k != b]
        if a not in keys:
            keys = [a] + keys
        keys2 = keys + [b]
        sl = self.window([self.params[k] for k in keys2])
        both = self.fit_group(keys2, sl=sl)
        (ca, wa, aa), (cb, wb, ab) = self.params[a], self.params[b]
        merged_p = ((ca * aa + cb * ab) / (aa + ab), max(wa, wb) + abs(ca - cb), aa + ab)
        trial = [merged_p if k == a else self.params[k] for k in keys]
        saved_b = self.params[b]
        self.remove(b)
        one = self.fit_group(keys, plist=trial, sl=sl)
        n = sl.stop - sl.start
        if one is not None and (
            both is None
            or aicc(both[1].residual_sum_of_squares, n, 3 * len(keys2) + 1) + 10.0
            > aicc(one[1].residual_sum_of_squares, n, 3 * len(keys) + 1)
        ):
            for k, (p, e) in zip(keys, one[0]):
                self.set(k, p, e)
            return True
        self.set(b, saved_b)
        return False

    def deblended_prominence(self, key):
        c, w, _ = self.params[key]
        d = self.smooth(self.y - self.bg - self.others([key]))
        near = np.nonzero(np.abs(self.x - c) <= max(w / 2, 2 * self.step))[0]
        if len(near) == 0:
            near = np.array([int(np.argmin(np.abs(self.x - c)))])
        j = int(near[np.argmax(d[near])])
        if 0 < j < len(d) - 1 and d[j] >= d[j - 1] and d[j] >= d[j + 1]:
            return float(peak_prominences(d, [j])[0][0])
        return 0.0


def survey_pipeline(spectrum, min_prominence=0.15, min_significance=5.0, smooth_sigma_steps=2.0,
                    max_lines=400):
    """Detect, deblend and fit every line of a survey spectrum.

    Parameters
    ----------
    spectrum : Spectrum
        Survey counts (sampled or expected).
    min_prominence : float
        Deblended prominence threshold in counts per pulse.
    min_significance : float
        Minimum fitted amplitude in standard errors, and the Poisson
        significance needed for the greedy search to seed a line.
    smooth_sigma_steps : float
        Gaussian smoothing (grid steps) used for seeding and prominence.

    Returns
    -------
    SurveyResult
        Catalog of accepted lines (lifetimes unset) plus per-line records.
    """
    if len(spectrum) == 0:
        return SurveyResult(Catalog(), [], [], 0.0)
    db = _Deblender(spectrum, smooth_sigma_steps)
    blocked = np.zeros(len(db.y), bool)
    floor = 0.5 * min_prominence
    for _ in range(max_lines * 3):
        if len(db.params) >= max_lines:
            break
        rs = db.smooth(db.y - db.bg - db.total)
        ok = (rs >= min_significance * db.noise) & (rs >= floor) & ~blocked
        if not ok.any():
            break
        j = int(np.argmax(np.where(ok, rs, -np.inf)))
        cand = PeakCandidate(j, float(db.x[j]), float(rs[j]), j, j)
        try:
            f = fit_lorentzian_peak(spectrum, cand, other_model=db.total + db.bg)
        except FitError:
            f = None
        if (f is None or not f.converged or f["amplitude"] <= 0 or f["fwhm"] > 50e9
                or abs(f["center"] - db.x[j]) > max(2 * f["fwhm"], 10 * db.step)):
            blocked[max(0, j - 3):j + 4] = True
            continue
        key = db.add((f["center"], f["fwhm"], f["amplitude"]), f.error("amplitude"))
        if not db.refit(db.group(key)):
            log.debug("group refit failed around %.6g Hz", f["center"])

    for _ in range(2):
        merged = True
        while merged:
            merged = False
            keys = sorted(db.params, key=lambda k: db.params[k][0])
            for a, b in zip(keys, keys[1:]):
                if a not in db.params or b not in db.params:
                    continue
                (ca, wa, _), (cb, wb, _) = db.params[a], db.params[b]
                if abs(ca - cb) < max(wa, wb):
                    if db.try_merge(a, b):
                        merged = True
        for key in sorted(db.params, key=lambda k: -db.params[k][2]):
            if key in db.params:
                db.refit(db.group(key))
        db.bg = float(np.median(db.y - db.total))

    accepted, rejected = [], []
    for key in sorted(db.params, key=lambda k: db.params[k][0]):
        c, w, a = db.params[key]
        err = db.errors[key]
        line = SurveyLine(
            center_hz=c, fwhm_hz=w, amplitude=a, amplitude_error=err,
            prominence=db.deblended_prominence(key),
            significance=a / err if err > 0 else math.inf,
        )
        keep = line.prominence >= min_prominence and line.significance >= min_significance
        (accepted if keep else rejected).append((key, line))

    # sub-threshold components stay in the model so their flux is not absorbed by neighbours
    lines = []
    for key, line in accepted:
        i = int(np.argmin(np.abs(db.x - line.center_hz)))
        cand = PeakCandidate(i, float(db.x[i]), line.prominence, i, i)
        try:
            f = fit_lorentzian_peak(spectrum, cand, other_model=db.others([key]) + db.bg,
                                    width_estimate=line.fwhm_hz)
            line.fit = f
            if f.converged and f["amplitude"] > 0 and abs(f["center"] - line.center_hz) < line.fwhm_hz:
                line.center_hz, line.fwhm_hz, line.amplitude = f["center"], f["fwhm"], f["amplitude"]
                line.amplitude_error = f.error("amplitude")
            else:
                line.error = "final single-line fit disagreed with the deblended fit; deblended values kept"
        except FitError as exc:
            line.error = f"{type(exc).__name__}: {exc}"
        lines.append(line)

    catalog = _lines_to_catalog(lines)
    return SurveyResult(catalog, lines, [ln for _, ln in rejected], db.bg)


def _lines_to_catalog(lines):
    res = []
    for ln in lines:
        lam = round(ln.wavelength_nm, 3)
        if any(abs(r.wavelength_nm - lam) < 1e-9 for r in res):
            lam = round(ln.wavelength_nm, 4)
        res.append(SiteResonance(lam, ln.fwhm_hz, ln.amplitude))
    return Catalog(tuple(res), note="survey pipeline output")
