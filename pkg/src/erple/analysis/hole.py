"""Spectral-hole profile to an upper bound on the homogeneous linewidth."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..fit import FitError, LorentzianDip, least_squares_fit
from ..model import FitResult

NO_HOLE_SIGMA = 3.0
MIN_SPAN_WIDTHS = 5.0


class NoHoleError(FitError):
    """Dip too shallow relative to the plateau noise."""


@dataclass
class HoleResult:
    hole_fwhm_hz: float
    hole_fwhm_error_hz: float
    homogeneous_bound_hz: float
    plateau_noise: float
    fit: FitResult

    def as_dict(self):
        return {
            "hole_fwhm_hz": self.hole_fwhm_hz,
            "hole_fwhm_error_hz": self.hole_fwhm_error_hz,
            "homogeneous_bound_hz": self.homogeneous_bound_hz,
            "plateau_noise": self.plateau_noise,
            "fit": self.fit.as_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)


def _half_depth_width(x, y, plateau, j):
    half = plateau - 0.5 * (plateau - y[j])
    lo = j
    while lo > 0 and y[lo] < half:
        lo -= 1
    hi = j
    while hi < len(y) - 1 and y[hi] < half:
        hi += 1
    return max(x[hi] - x[lo], 2 * np.min(np.diff(x)))


def hole_to_homogeneous(detuning_hz, signal, expected_fwhm_hz=None):
    """Fit an inverted Lorentzian to a hole profile; the bound is half its FWHM.

    Parameters
    ----------
    detuning_hz, signal : array_like
        Probe-pump detuning and (normalized) fluorescence.
    expected_fwhm_hz : float, optional
        Used for the coverage check; the initial estimate is used otherwise.

    Raises
    ------
    NoHoleError
        Dip depth below 3 times the plateau noise.
    ValueError
        Profile narrower than ±5 hole widths.
    """
    x = np.asarray(detuning_hz, float)
    y = np.asarray(signal, float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if len(x) < 8:
        raise FitError("hole profile needs at least 8 points")
    span = min(-x[0], x[-1])
    outer = np.abs(x) >= 0.6 * np.max(np.abs(x))
    plateau = float(np.median(y[outer]))
    noise = float(np.std(y[outer], ddof=1)) if outer.sum() > 2 else 0.0
    j = int(np.argmin(y))
    depth = plateau - y[j]
    if not depth > NO_HOLE_SIGMA * noise or depth <= 0:
        raise NoHoleError(f"dip depth {depth:.3g} below {NO_HOLE_SIGMA:g} x plateau noise {noise:.3g}")
    w0 = _half_depth_width(x, y, plateau, j)
    width = expected_fwhm_hz or w0
    if span < MIN_SPAN_WIDTHS * width * (1 - 1e-9):
        raise ValueError(f"profile spans ±{span:.3g} Hz, need ±{MIN_SPAN_WIDTHS:g} hole widths")
    fit = least_squares_fit(LorentzianDip(), x, y, [plateau, depth, x[j], w0])
    if not fit.converged:
        raise FitError(f"hole fit did not converge: {fit.message}")
    w = abs(float(fit["fwhm"]))
    return HoleResult(w, float(fit.error("fwhm")), w / 2, noise, fit)
