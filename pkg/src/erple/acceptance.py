"""End-to-end acceptance checks shared by ``erple reproduce`` and the test suite."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cavity, dynamics, fit, model, synth
from .analysis import (
    detection_efficiency,
    extract_lifetime,
    hole_to_homogeneous,
    match_resonances,
    offresonant_detuning_hz,
    reference_statistics_repetitions,
    survey_pipeline,
)

SURVEY_SEED = 7
LIFETIME_SEEDS = 20


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name} ({self.seconds:.1f} s)"

    def as_dict(self):
        return {"number": self.number, "name": self.name, "passed": self.passed, "details": self.details}


def _timed(number, name, fn):
    t0 = time.perf_counter()
    passed, details = fn()
    return CriterionResult(number, name, bool(passed), details, time.perf_counter() - t0)


# ---------------------------------------------------------------------------


def survey_round_trip(seed=SURVEY_SEED):
    """Criterion 1: 70 lines back from a seeded survey of the full catalog."""
    t0 = time.perf_counter()
    cat = model.table1_catalog()
    spec = synth.sample_spectrum(synth.expected_spectrum(cat), seed)
    res = survey_pipeline(spec)
    runtime = time.perf_counter() - t0
    truth = cat.frequencies_hz
    found = np.array([ln.center_hz for ln in res.lines])
    problems = []
    used = set()
    for r, f0 in zip(cat, truth):
        if len(found) == 0:
            problems.append(f"{r.wavelength_nm:.3f}: missing")
            continue
        j = int(np.argmin(np.abs(found - f0)))
        dc = found[j] - f0
        dw = res.lines[j].fwhm_hz / r.fwhm_hz - 1
        tol = 0.10 if r.amplitude >= 1.0 else 0.20
        if abs(dc) > 100e6:
            problems.append(f"{r.wavelength_nm:.3f}: center off by {dc / 1e6:.0f} MHz")
        elif abs(dw) > tol:
            problems.append(f"{r.wavelength_nm:.3f}: FWHM off by {dw:+.1%} (tolerance {tol:.0%})")
        if j in used:
            problems.append(f"{r.wavelength_nm:.3f}: shares a fitted line with another true line")
        used.add(j)
    passed = len(res.lines) == len(cat) and not problems and runtime < 300
    return passed, {"seed": seed, "lines_found": len(res.lines), "lines_true": len(cat),
                    "problems": problems, "runtime_under_5_min": runtime < 300}


def lifetime_round_trip(n_seeds=LIFETIME_SEEDS):
    """Criterion 2: background-subtracted lifetime recovery, noiseless and seeded."""
    cat = model.table1_catalog()
    reps = reference_statistics_repetitions()
    out = {"repetitions": reps, "lines": {}}
    ok = True
    for lam in (1527.565, 1538.685):
        site = cat.nearest(lam)
        off = offresonant_detuning_hz(site)
        proto = model.ScanProtocol(repetitions=reps)
        on_t = dynamics.decay_trace(site, pulse=proto)
        off_t = dynamics.decay_trace(site, pulse=proto, detuning_hz=off)
        clean = extract_lifetime(on_t, off_t)
        rel = clean.lifetime_s / site.lifetime_s - 1
        zs, taus, errs = [], [], []
        for k in range(n_seeds):
            r = extract_lifetime(dynamics.sample_trace(on_t, 2 * k), dynamics.sample_trace(off_t, 2 * k + 1))
            taus.append(r.lifetime_s)
            errs.append(r.lifetime_error_s)
            zs.append((r.lifetime_s - site.lifetime_s) / r.lifetime_error_s)
        zs = np.array(zs)
        line_ok = abs(rel) <= 0.02 and bool(np.all(np.abs(zs) <= 3))
        ok &= line_ok
        out["lines"][f"{lam:.3f}"] = {
            "true_lifetime_s": site.lifetime_s,
            "noiseless_relative_error": rel,
            "max_abs_z": float(np.max(np.abs(zs))),
            "seeds_beyond_3_sigma": [k for k in range(n_seeds) if abs(zs[k]) > 3],
            "mean_fit_error_s": float(np.mean(errs)),
            "lifetime_std_s": float(np.std(taus, ddof=1)),
            "passed": line_ok,
        }
    return ok, out


def hole_round_trip():
    """Criterion 3: hole width from simulated profiles, and the delay null result."""
    def width(gamma, delay=0.0):
        prof = dynamics.simulate_hole(dynamics.HoleBurnConfig(homogeneous_fwhm_hz=gamma, delay_s=delay))
        return hole_to_homogeneous(prof.detuning_hz, prof.signal)

    a = width(0.75e6)
    b = width(1.4e6)
    c = width(0.75e6, 90e-6)
    checks = {
        "fwhm_0p75": (a.hole_fwhm_hz, abs(a.hole_fwhm_hz / 1.5e6 - 1) <= 0.05),
        "bound_0p75": (a.homogeneous_bound_hz, abs(a.homogeneous_bound_hz / 0.75e6 - 1) <= 0.05),
        "fwhm_1p4": (b.hole_fwhm_hz, abs(b.hole_fwhm_hz / 2.8e6 - 1) <= 0.05),
        "delay_change": (c.hole_fwhm_hz / a.hole_fwhm_hz - 1, abs(c.hole_fwhm_hz / a.hole_fwhm_hz - 1) < 0.05),
    }
    return all(v[1] for v in checks.values()), {k: {"value": v[0], "ok": v[1]} for k, v in checks.items()}


def occupation_limits():
    """Criterion 4: resonant limit against the reference, far plateau from the simulator."""
    tau, tp, gamma = 0.764e-3, 20e-6, 0.75e6
    rows = []
    ok = True
    for r0tp in (0.001, 0.01, 0.1):
        r0 = r0tp / tp
        cfg = dynamics.HoleBurnConfig(pump_duration_s=tp, pump_rate_hz=r0, homogeneous_fwhm_hz=gamma,
                                      lifetime_s=tau, periodic=False)
        prof = dynamics.simulate_hole(cfg)
        m = prof.meta
        ref0 = dynamics.eq1_reference(tp, 0.0, tau, r0, gamma)
        res_ok = abs(m["resonant_occupation"] / ref0 - 1) <= 0.01
        plateau = dynamics.far_plateau_occupation(tp, tau, r0)
        far_ok = abs(m["far_occupation"] / plateau - 1) <= 1e-9
        ok &= res_ok and far_ok
        rows.append({
            "pump_rate_times_duration": r0tp,
            "simulated_resonant": m["resonant_occupation"],
            "reference_resonant": ref0,
            "simulated_far_plateau": m["far_occupation"],
            "reference_far": m["reference_far"],
            "far_discrepancy": m["far_discrepancy"],
            "reference_far_exceeds_resonant": m["reference_far_exceeds_resonant"],
            "resonant_ok": res_ok,
            "plateau_ok": far_ok,
        })
    return ok, {"cases": rows}


def zeeman_checks():
    """Criterion 5: four symmetric lines, six resolved lines, and field reversal."""
    one = dynamics.ZeemanSite(0.0, (dynamics.ZeemanSubsite(0.5, 1.5),))
    lines = dynamics.zeeman_lines(one, 0.05)
    offs = sorted(o for o, _ in lines)
    four = len(lines) == 4 and np.allclose(offs, [-o for o in reversed(offs)], rtol=0, atol=1e-6)
    six = len(dynamics.zeeman_lines(dynamics.six_line_example_site(), 0.05)) == 6
    plus, minus = dynamics.reverse_field_check(dynamics.two_arm_example_site(), 0.05)
    pos = sorted(o for o, _ in plus) == sorted(o for o, _ in minus)
    swap = sorted((-o, w) for o, w in plus) == minus and plus != minus
    return four and six and pos and swap, {
        "single_subsite_lines": len(lines), "six_line_site_lines": six, "positions_invariant": pos,
        "intensities_swap": swap,
    }


def purcell_checks():
    """Criterion 6: mode volume and damping at the quoted operating point."""
    d = cavity.CavityDesign(1540.0, 3.48, 1e3, 1e6)
    v = d.mode_volume_cubic_wavelengths
    kappa = cavity.CavityDesign.from_quality_factor(1e5).kappa_hz
    return 0.085 <= v <= 0.105 and 1.9e9 <= kappa <= 2.0e9, {"mode_volume_cubic_wavelengths": v,
                                                               "kappa_hz_at_q1e5": kappa}


def efficiency_checks():
    """Criterion 7: (CR - DCR)/N."""
    e1 = detection_efficiency(6727.0, 100.0, 10000.0)
    e2 = detection_efficiency(250.0, 250.0, 1e5)
    return math.isclose(e1, 0.6627, rel_tol=1e-12) and e2 == 0.0, {"fixture": e1, "cr_equals_dcr": e2}


def property_checks(seed=11):
    """Criterion 8: fast versions of the property suites."""
    rng = np.random.default_rng(seed)
    res = {}
    # exact recovery and Jacobian agreement for every model
    x = np.linspace(-5e9, 5e9, 201)
    cases = [
        (fit.Lorentzian(60e6), x, [3e8, 1.4e9, 2.5, 0.3]),
        (fit.LorentzianDip(), np.linspace(-8e6, 8e6, 161), [1.0, 0.2, 1e5, 1.5e6]),
        (fit.SingleExponential(), np.arange(400) * 1e-5, [300.0, 0.807e-3]),
        (fit.BiExponential(), np.arange(400) * 1e-5, [200.0, 200e-6, 200.0, 800e-6]),
        (fit.MultiLorentzian(2, 60e6), x, [-1e9, 1.0e9, 1.0, 1.2e9, 1.5e9, 0.5, 0.2]),
    ]
    worst_rec, worst_jac = 0.0, 0.0
    for m, xx, p in cases:
        p = np.array(p, float)
        y = m(xx, p)
        for _ in range(3):
            p0 = p * (1 + rng.uniform(-0.3, 0.3, len(p)))
            r = fit.least_squares_fit(m, xx, y, p0, max_iter=500)
            worst_rec = max(worst_rec, float(np.max(np.abs(r.values / p - 1))))
        ja, jf = m.jacobian(xx, p), fit.finite_difference_jacobian(m, xx, p)
        scale = np.max(np.abs(ja), axis=0)
        worst_jac = max(worst_jac, float(np.max(np.abs(ja - jf) / scale)))
    res["exact_recovery_max_rel"] = (worst_rec, worst_rec <= 1e-6)
    res["jacobian_max_rel"] = (worst_jac, worst_jac <= 1e-6)
    # Poisson mean preservation
    lam = np.full(100000, 37.5)
    s = synth.poisson_counts(lam, seed)
    z = (s.mean() - 37.5) / math.sqrt(37.5 / len(lam))
    res["poisson_mean_z"] = (float(z), bool(abs(z) < 5))
    # prominence scale equivariance
    cat = model.table1_catalog()
    sp = synth.sample_spectrum(synth.expected_spectrum(cat), seed)
    a = fit.detect_peaks(sp, 0.15)
    b = fit.detect_peaks(sp.with_counts(sp.counts * 3.0), 0.45)
    eq = [c.index for c in a] == [c.index for c in b] and np.allclose(
        [3 * c.prominence for c in a], [c.prominence for c in b], rtol=1e-12)
    res["prominence_scale_equivariance"] = (len(a), bool(eq))
    # matching monotonicity
    elec = cat.frequencies_hz + rng.normal(0, 2e9, len(cat))
    fr = [match_resonances(cat, elec, t).matched_fraction for t in np.linspace(0, 5e9, 26)]
    res["matching_monotone"] = (fr[-1], bool(np.all(np.diff(fr) >= 0)))
    # conversion involution
    lam_nm = rng.uniform(1200, 1700, 1000)
    back = model.frequency_to_wavelength(model.wavelength_to_frequency(lam_nm))
    err = float(np.max(np.abs(back / lam_nm - 1)))
    res["conversion_involution"] = (err, err <= 1e-12)
    return all(v[1] for v in res.values()), {k: {"value": v[0], "ok": v[1]} for k, v in res.items()}


CRITERIA = (
    (1, "survey round-trip", survey_round_trip),
    (2, "lifetime round-trip", lifetime_round_trip),
    (3, "hole-burning round-trip", hole_round_trip),
    (4, "two-limit occupation checks", occupation_limits),
    (5, "Zeeman splitting and field reversal", zeeman_checks),
    (6, "Purcell design numbers", purcell_checks),
    (7, "detector efficiency formula", efficiency_checks),
    (8, "property suites", property_checks),
)


def run_all(numbers=None):
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for n, name, fn in CRITERIA:
            if numbers is None or n in numbers:
                out.append(_timed(n, name, fn))
    return out
