"""Forward model of the PLE survey: expected and Poisson-sampled counts per laser step."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, asdict, replace

import numpy as np

from .model import (
    DetectorModel,
    ScanProtocol,
    atomic_write_text,
    dataclass_from_dict,
    exp_window_fraction,
)

SAMPLING_CHUNK = 4096


def line_profile(detuning_hz, fwhm_hz, fm_width_hz=0.0):
    """Unit-peak Lorentzian averaged over a rectangular FM kernel of full width ``fm_width_hz``.

    The average is done in closed form through the Lorentzian's arctangent
    integral, so no grid convolution is involved.
    """
    x = np.asarray(detuning_hz, dtype=float)
    g = float(fwhm_hz)
    if fm_width_hz <= 0:
        return 1.0 / (1.0 + (2.0 * x / g) ** 2)
    w = float(fm_width_hz)
    return (g / (2.0 * w)) * (np.arctan(2.0 * (x + w / 2) / g) - np.arctan(2.0 * (x - w / 2) / g))


def background_per_pulse(detector, protocol):
    """Emitted background photons per pulse inside the integration window (before efficiency)."""
    t0, t1 = protocol.window_start_s, protocol.window_end_s
    return sum(a * exp_window_fraction(tau, t0, t1) for a, tau in detector.background_components())


def dark_per_pulse(detector, protocol):
    return detector.dark_count_rate_hz * protocol.window_s


@dataclass
class Spectrum:
    """Counts per laser step on a uniform ascending frequency grid."""

    frequency_hz: np.ndarray
    counts: np.ndarray
    protocol: ScanProtocol
    detector: DetectorModel
    seed: int | None = None

    def __post_init__(self):
        self.frequency_hz = np.asarray(self.frequency_hz, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.frequency_hz.shape != self.counts.shape or self.frequency_hz.ndim != 1:
            raise ValueError("frequency and counts must be 1-d arrays of equal length")
        if len(self.frequency_hz) > 1:
            d = np.diff(self.frequency_hz)
            if np.any(np.abs(d - self.protocol.step_hz) > 1.0):
                raise ValueError("frequency grid is not uniform at the protocol step")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    def __len__(self):
        return len(self.frequency_hz)

    @property
    def sampled(self):
        return self.seed is not None

    @property
    def scale(self):
        """Detected counts per step for one emitted photon per pulse."""
        return self.protocol.repetitions * self.detector.efficiency

    def counts_per_pulse(self):
        return self.counts / self.scale

    def variance(self):
        """Poisson variance per step (floored at 1 count)."""
        return np.maximum(np.asarray(self.counts, dtype=float), 1.0)

    def with_counts(self, counts, seed=None):
        return replace(self, counts=np.asarray(counts), seed=seed)

    def metadata(self):
        return {
            "protocol": asdict(self.protocol),
            "detector": asdict(self.detector),
            "seed": self.seed,
            "points": len(self),
        }


def expected_spectrum(catalog, protocol=None, detector=None):
    """Expected detected counts per laser step.

    counts(f) = reps * (eff * (B + sum_i A_i * p_i(f - f_i)) + dark * window)

    where ``p_i`` is the FM-averaged unit-peak Lorentzian of line ``i`` and
    ``B`` the background photons emitted inside the integration window.
    """
    protocol = ScanProtocol() if protocol is None else protocol
    detector = DetectorModel() if detector is None else detector
    f = protocol.frequency_grid()
    emitted = np.full(f.shape, background_per_pulse(detector, protocol))
    for r in catalog:
        emitted += r.amplitude * line_profile(f - r.frequency_hz, r.fwhm_hz, protocol.fm_broadening_hz)
    counts = protocol.repetitions * (
        detector.efficiency * emitted + dark_per_pulse(detector, protocol)
    )
    return Spectrum(f, counts, protocol, detector, seed=None)


def poisson_counts(lam, seed):
    """Independent Poisson draw per element of ``lam``.

    The array is cut into fixed chunks, each with its own counter-based stream
    spawned from ``seed``, so the result does not depend on evaluation order.
    """
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("expected counts must be finite and nonnegative")
    n = len(lam)
    nchunks = max(1, -(-n // SAMPLING_CHUNK))
    children = np.random.SeedSequence(int(seed)).spawn(nchunks)
    out = np.empty(n, dtype=np.int64)
    for k, ss in enumerate(children):
        sl = slice(k * SAMPLING_CHUNK, min(n, (k + 1) * SAMPLING_CHUNK))
        out[sl] = np.random.Generator(np.random.Philox(ss)).poisson(lam[sl])
    return out


def sample_spectrum(expected, seed):
    """Poisson-sampled copy of an expected spectrum."""
    return expected.with_counts(poisson_counts(expected.counts, seed), seed=int(seed))


# ---------------------------------------------------------------------------
# file format: CSV ``frequency_hz,counts`` plus a JSON sidecar


def sidecar_path(path):
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".json"


def spectrum_csv_text(spectrum):
    buf = io.StringIO()
    buf.write("frequency_hz,counts\n")
    integer = np.issubdtype(spectrum.counts.dtype, np.integer)
    for f, c in zip(spectrum.frequency_hz, spectrum.counts):
        buf.write(f"{f:.1f},{int(c)}\n" if integer else f"{f:.1f},{c:.10g}\n")
    return buf.getvalue()


def write_spectrum(spectrum, path):
    atomic_write_text(path, spectrum_csv_text(spectrum))
    atomic_write_text(sidecar_path(path), json.dumps(spectrum.metadata(), indent=2, sort_keys=True) + "\n")


def read_spectrum(path):
    """Load a spectrum CSV and its sidecar (defaults are used when the sidecar is absent)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    f = np.array([float(r["frequency_hz"]) for r in rows])
    raw = [r["counts"] for r in rows]
    try:
        c = np.array([int(x) for x in raw], dtype=np.int64)
    except ValueError:
        c = np.array([float(x) for x in raw])
    meta = {}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    protocol = dataclass_from_dict(ScanProtocol, meta.get("protocol", {}))
    detector = dataclass_from_dict(DetectorModel, meta.get("detector", {}))
    if len(f) > 1 and "protocol" not in meta:
        protocol = replace(protocol, step_hz=float(np.round(np.median(np.diff(f)))))
    return Spectrum(f, c, protocol, detector, seed=meta.get("seed"))
