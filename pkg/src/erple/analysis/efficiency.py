"""Detector efficiency from count rates."""

from __future__ import annotations


def detection_efficiency(count_rate_hz, dark_rate_hz, photon_rate_hz):
    """``(CR - DCR) / N``: fraction of incident photons that are counted.

    Raises
    ------
    ValueError
        For a nonpositive photon rate, a negative dark rate, or a count rate
        below the dark rate (negative efficiency).
    """
    if not photon_rate_hz > 0:
        raise ValueError("photon rate must be positive")
    if dark_rate_hz < 0:
        raise ValueError("dark rate must be nonnegative")
    if count_rate_hz < dark_rate_hz:
        raise ValueError("count rate below dark rate gives a negative efficiency")
    return (count_rate_hz - dark_rate_hz) / photon_rate_hz
