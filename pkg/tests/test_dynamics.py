import json
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from erple.dynamics import (
    BOHR_HZ_PER_T,
    DomainError,
    HoleBurnConfig,
    TimeTrace,
    ZeemanSite,
    ZeemanSubsite,
    decay_trace,
    eq1_reference,
    far_plateau_occupation,
    read_hole,
    read_trace,
    reverse_field_check,
    rho_res,
    sample_trace,
    simulate_hole,
    six_line_example_site,
    two_arm_example_site,
    write_hole,
    write_trace,
    zeeman_lines,
)
from erple.fit import LorentzianDip, least_squares_fit, select_decay_model
from erple.model import DetectorModel, ScanProtocol, SiteResonance


def hole_fwhm(profile):
    x, y = profile.detuning_hz, profile.signal
    g0 = profile.config.homogeneous_fwhm_hz * 2
    res = least_squares_fit(LorentzianDip(), x, y, [1.0, 1 - y.min(), 0.0, g0])
    return res["fwhm"]


# ---------------------------------------------------------------------------
# decay traces

SITE = SiteResonance(1527.565, 1.5e9, 4.0, 0.807e-3)


def test_decay_e_fold():
    dt = 0.807e-3 / 80
    tr = decay_trace(SITE, DetectorModel().without_background(), duration_s=5e-3, bin_width_s=dt)
    assert tr.counts[80] / tr.counts[0] == pytest.approx(math.exp(-1), rel=1e-12)
    # the bin integral over the first bin equals the rate at its center times the width
    r0 = tr.counts[0] / (0.807e-3 * -math.expm1(-dt / 0.807e-3))
    assert tr.counts[0] == pytest.approx(r0 * dt * math.exp(-dt / 2 / 0.807e-3) * (
        2 * 0.807e-3 / dt * math.sinh(dt / 2 / 0.807e-3)), rel=1e-12)


def test_zero_amplitude_site_is_background():
    det = DetectorModel()
    zero = SiteResonance(1527.565, 1.5e9, 0.0, 0.807e-3)
    a = decay_trace(zero, det)
    b = decay_trace(SITE, det, include_site=False)
    assert np.allclose(a.counts, b.counts, rtol=1e-14)
    t, dt = a.t_start_s, a.bin_width_s
    expect = 1000 * (det.efficiency * sum(
        amp * np.exp(-t / tau) * -np.expm1(-dt / tau) for amp, tau in det.background_components())
        + det.dark_count_rate_hz * dt)
    assert np.allclose(a.counts, expect, rtol=1e-12)


def test_site_amplitude_is_window_yield():
    tr = decay_trace(SITE, DetectorModel().without_background(), bin_width_s=1e-6)
    p = ScanProtocol()
    win = (tr.t_start_s >= p.window_start_s - 1e-12) & (tr.t_start_s < p.window_end_s - 1e-12)
    assert tr.counts[win].sum() / (1000 * 0.6627) == pytest.approx(4.0, rel=1e-9)


def test_background_subtraction_round_trip():
    det = DetectorModel()
    diff = decay_trace(SITE, det) - decay_trace(SITE, det, include_site=False)
    kind, fit = select_decay_model(diff, variance=np.ones(len(diff)))
    assert kind == "single"
    assert fit["tau"] == pytest.approx(0.807e-3, rel=0.01)


def test_trace_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        TimeTrace(np.array([1, -1]))
    with pytest.raises(ValueError):
        TimeTrace(np.array([1, 2]), bin_width_s=0)
    with pytest.raises(ValueError):
        decay_trace(SITE, duration_s=0.5e-3)
    tr = sample_trace(decay_trace(SITE), 3)
    assert np.all(tr.counts >= 0)
    write_trace(tr, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t_us,counts"
    back = read_trace(tmp_path / "t.csv")
    assert np.array_equal(back.counts, tr.counts) and back.bin_width_s == pytest.approx(10e-6)


# ---------------------------------------------------------------------------
# saturation


def _ode_rho(rate, t_end, tau):
    sol = solve_ivp(lambda t, r: rate * (1 - 2 * r) - r / tau, (0, t_end), [0.0],
                    rtol=1e-12, atol=1e-15, method="DOP853")
    return sol.y[0, -1]


def test_rho_res_examples():
    tau = 0.764e-3
    assert rho_res(0.0, 100.0, tau) == 0.0
    assert rho_res(1.0, 1e7, tau) == pytest.approx(0.5, rel=1e-4)
    r0 = 1 / tau
    k = 2 * r0 + 1 / tau
    T = 1 / k
    expect = r0 / k * (1 - math.exp(-1))
    assert rho_res(T, r0, tau) == pytest.approx(expect, rel=1e-12)
    assert rho_res(T, r0, tau) == pytest.approx(_ode_rho(r0, T, tau), rel=1e-9)
    with pytest.raises(ValueError):
        rho_res(-1.0, r0, tau)


def test_rho_res_ceiling():
    t = np.logspace(-8, 0, 50)
    for r0 in (1.0, 1e3, 1e6, 1e9):
        r = rho_res(t, r0, 1e-3)
        assert np.all((r >= 0) & (r <= 0.5))


def test_eq1_reference_limits():
    tp, tau, r0, g = 20e-6, 0.764e-3, 50.0, 0.75e6
    assert eq1_reference(tp, 0.0, tau, r0, g) == rho_res(2 * tp, r0, tau)
    far = eq1_reference(tp, 100 * g, tau, r0, g)
    assert far == 2 * rho_res(tp, r0, tau) * (1 - 0.5 * math.exp(-tp / tau))
    assert far / (2 * rho_res(tp, r0, tau)) == pytest.approx(0.513, abs=5e-4)
    mid = eq1_reference(tp, g, tau, r0, g)
    lo, hi = sorted((rho_res(2 * tp, r0, tau), far))
    assert lo <= mid <= hi
    with pytest.raises(ValueError):
        eq1_reference(0.0, 0.0, tau, r0, g)


# ---------------------------------------------------------------------------
# hole burning


def _ode_hole_fwhm(r0, tau, tp, g, n_df=61):
    """Hole FWHM from explicit ODE integration over a grid of ion detunings.

    Only the pump-probe cross term depends on df, so the hole is
    the integral of rho(pump+probe) - rho(pump) - rho(probe).
    """
    delta = np.arange(-30 * g, 30 * g + g / 40, g / 40)
    lor = lambda x: 1 / (1 + (2 * x / g) ** 2)  # noqa: E731

    def run(r1, r2):
        def f(t, r):
            rate = r1 if t < tp else r2
            return rate * (1 - 2 * r) - r / tau
        y = solve_ivp(f, (0, tp), np.zeros_like(r1), rtol=1e-12, atol=1e-18, method="DOP853").y[:, -1]
        def f2(t, r):
            return r2 * (1 - 2 * r) - r / tau
        return solve_ivp(f2, (0, tp), y, rtol=1e-12, atol=1e-18, method="DOP853").y[:, -1]

    pump = r0 * lor(delta)
    zero = np.zeros_like(delta)
    pump_only = run(pump, zero)
    dfs = np.linspace(0, 4 * g, n_df)
    depth = []
    for df in dfs:
        probe = r0 * lor(delta - df)
        cross = run(pump, probe) - pump_only - run(zero, probe)
        depth.append(-np.trapezoid(cross, delta))
    depth = np.array(depth)
    half = depth[0] / 2
    k = int(np.argmax(depth < half))
    x = dfs[k - 1] + (half - depth[k - 1]) * (dfs[k] - dfs[k - 1]) / (depth[k] - depth[k - 1])
    return 2 * x


def test_weak_pump_hole_width_against_ode():
    tau, tp, g = 0.764e-3, 20e-6, 0.75e6
    r0 = 0.01 / tau
    cfg = HoleBurnConfig(pump_rate_hz=r0, lifetime_s=tau, homogeneous_fwhm_hz=g, periodic=False,
                         detuning_points=201)
    sim = hole_fwhm(simulate_hole(cfg))
    assert 1.98 <= sim / g <= 2.02
    ode = _ode_hole_fwhm(r0, tau, tp, g)
    assert 1.98 <= ode / g <= 2.02
    assert sim == pytest.approx(ode, rel=2e-3)


def test_hole_width_gives_homogeneous_linewidth():
    prof = simulate_hole(HoleBurnConfig(homogeneous_fwhm_hz=0.75e6))
    assert hole_fwhm(prof) == pytest.approx(1.5e6, rel=0.01)


def test_hole_shape():
    prof = simulate_hole(HoleBurnConfig(detuning_points=201))
    i0 = int(np.argmin(np.abs(prof.detuning_hz)))
    assert prof.detuning_hz[i0] == 0 and int(np.argmin(prof.signal)) == i0
    assert np.allclose(prof.signal, prof.signal[::-1], rtol=1e-12)
    assert np.all(prof.signal >= 0)
    assert prof.signal[0] == pytest.approx(1.0, abs=0.01)


def test_delay_leaves_width_unchanged():
    base = hole_fwhm(simulate_hole(HoleBurnConfig(detuning_points=201)))
    for tau in (0.68e-3, 1.05e-3):
        a = hole_fwhm(simulate_hole(HoleBurnConfig(lifetime_s=tau, detuning_points=201)))
        b = hole_fwhm(simulate_hole(HoleBurnConfig(lifetime_s=tau, delay_s=90e-6, detuning_points=201)))
        assert abs(b / a - 1) < 0.05
    assert base > 0


@pytest.mark.parametrize("r0tp", [0.001, 0.01, 0.1])
def test_single_shot_limits(r0tp):
    tp, tau = 20e-6, 0.764e-3
    r0 = r0tp / tp
    prof = simulate_hole(HoleBurnConfig(pump_rate_hz=r0, periodic=False, detuning_points=41))
    m = prof.meta
    assert m["resonant_occupation"] == pytest.approx(rho_res(2 * tp, r0, tau), rel=0.01)
    assert m["far_occupation"] == pytest.approx(far_plateau_occupation(tp, tau, r0), rel=1e-9)
    assert m["reference_far_exceeds_resonant"] is False


def test_domain_errors_and_warning():
    with pytest.raises(DomainError):
        simulate_hole(HoleBurnConfig(detuning_span_hz=5 * 0.75e6))
    with pytest.warns(UserWarning):
        HoleBurnConfig(repetition_period_s=1e-3)
    with pytest.raises(ValueError):
        HoleBurnConfig(pump_duration_s=0)


def test_hole_file_round_trip(tmp_path):
    prof = simulate_hole(HoleBurnConfig(detuning_points=41))
    write_hole(prof, tmp_path / "h.csv")
    back = read_hole(tmp_path / "h.csv")
    assert np.allclose(back.signal, prof.signal, rtol=1e-9)
    cfg = HoleBurnConfig(detunings_hz=(0.0, 1e6, 2e7))
    assert HoleBurnConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# ---------------------------------------------------------------------------
# Zeeman


def test_zero_field_single_line():
    site = ZeemanSite(0.0, (ZeemanSubsite(0.4, 1.6, ((1, 0, 0.5), (2, 30, 0), (0.5, 0, 0), (1, 90, 1))),))
    lines = zeeman_lines(site, 0.0, 20.0)
    assert len(lines) == 1 and lines[0][0] == 0.0
    assert lines[0][1] == pytest.approx(sum(site.subsites[0].branch_intensities(20.0)))


def test_one_subsite_four_symmetric_offsets():
    lines = zeeman_lines(ZeemanSite(0.0, (ZeemanSubsite(0.5, 2.0),)), 0.05)
    offs = sorted(o for o, _ in lines)
    assert len(offs) == 4
    assert np.allclose(offs, [-o for o in offs[::-1]], rtol=0, atol=1e-6)
    u = BOHR_HZ_PER_T * 0.05 / 2
    assert offs[-1] == pytest.approx(2.5 * u) and offs[2] == pytest.approx(1.5 * u)


def test_six_line_site():
    assert len(zeeman_lines(six_line_example_site(), 0.05)) == 6


def test_line_count_bound():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        subs = tuple(ZeemanSubsite(*rng.uniform(0.1, 3, 2)) for _ in range(n))
        assert len(zeeman_lines(ZeemanSite(0.0, subs), 0.05)) == 4 * n


def test_field_limit():
    with pytest.raises(DomainError):
        zeeman_lines(six_line_example_site(), 0.07)


def test_field_reversal():
    sym = ZeemanSite(0.0, (ZeemanSubsite(0.5, 2.0),))
    plus, minus = reverse_field_check(sym, 0.05)
    assert np.allclose(plus, minus)
    site = two_arm_example_site()
    plus, minus = reverse_field_check(site, 0.05)
    assert sorted(round(o) for o, _ in plus) == sorted(round(o) for o, _ in minus)
    assert plus != minus
    up = dict((round(o), w) for o, w in plus)
    down = dict((round(o), w) for o, w in minus)
    for o, w in up.items():
        assert down[-o] == pytest.approx(w)
    assert max(w for o, w in plus if o > 0) != max(w for o, w in minus if o > 0)


def test_zeeman_json_round_trip():
    site = six_line_example_site()
    d = json.loads(json.dumps(site.to_dict()))
    assert ZeemanSite.from_dict(d) == site
    with pytest.raises(ValueError):
        ZeemanSite.from_dict({**d, "bogus": 1})
    with pytest.raises(ValueError):
        ZeemanSubsite(-1.0, 1.0)
