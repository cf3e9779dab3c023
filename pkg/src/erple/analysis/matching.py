"""One-to-one proximity matching of optical and electrical resonances."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MatchReport:
    """Pairs ``(optical Hz, electrical Hz, |df| Hz)`` sorted by optical frequency."""

    pairs: list = field(default_factory=list)
    matched_fraction: float = 0.0
    tolerance_hz: float = 1e9
    n_optical: int = 0
    n_electrical: int = 0

    def as_dict(self):
        return {
            "pairs": [{"optical_hz": o, "electrical_hz": e, "abs_df_hz": d} for o, e, d in self.pairs],
            "matched_fraction": self.matched_fraction,
            "tolerance_hz": self.tolerance_hz,
            "n_optical": self.n_optical,
            "n_electrical": self.n_electrical,
        }

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), **kw)


def match_resonances(optical, electrical, tolerance_hz=1e9):
    """Greedy nearest-first one-to-one matching within ``tolerance_hz``.

    Candidate pairs are taken in order of increasing separation; equal
    separations go to the lower optical, then lower electrical, frequency.

    Parameters
    ----------
    optical : Catalog or array_like
        Optical line centers (a Catalog or frequencies in Hz).
    electrical : array_like
        Electrical line frequencies in Hz.
    """
    opt = np.asarray(getattr(optical, "frequencies_hz", optical), float)
    ele = np.asarray(electrical, float)
    if opt.size == 0 or ele.size == 0:
        raise ValueError("both line lists must be nonempty")
    if tolerance_hz < 0:
        raise ValueError("tolerance must be nonnegative")
    o_sorted = np.sort(opt)
    e_sorted = np.sort(ele)
    cand = []
    for i, fo in enumerate(o_sorted):
        lo = np.searchsorted(e_sorted, fo - tolerance_hz, side="left")
        hi = np.searchsorted(e_sorted, fo + tolerance_hz, side="right")
        for j in range(lo, hi):
            d = abs(e_sorted[j] - fo)
            if d <= tolerance_hz:
                cand.append((d, i, j))
    cand.sort()
    used_o, used_e, pairs = set(), set(), []
    for d, i, j in cand:
        if i in used_o or j in used_e:
            continue
        used_o.add(i)
        used_e.add(j)
        pairs.append((float(o_sorted[i]), float(e_sorted[j]), float(d)))
    pairs.sort()
    return MatchReport(pairs, len(pairs) / len(opt), float(tolerance_hz), len(opt), len(ele))
