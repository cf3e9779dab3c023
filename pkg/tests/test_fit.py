import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import least_squares

from erple.dynamics import TimeTrace
from erple.fit import (
    BiExponential,
    InsufficientDataError,
    Lorentzian,
    LorentzianDip,
    ModelSelectionError,
    RankDeficiencyError,
    SingleExponential,
    detect_peaks,
    finite_difference_jacobian,
    fit_lorentzian_peak,
    least_squares_fit,
    select_decay_model,
)
from erple.model import Catalog, DetectorModel, ScanProtocol, SiteResonance
from erple.synth import expected_spectrum, poisson_counts, sample_spectrum

MODELS = [
    (Lorentzian(), np.linspace(-5e9, 5e9, 201), [0.2e9, 1.5e9, 3.0, 0.4]),
    (Lorentzian(60e6), np.linspace(-5e9, 5e9, 201), [-0.1e9, 1.02e9, 4.06, 0.1]),
    (LorentzianDip(), np.linspace(-10e6, 10e6, 201), [1.0, 0.3, 0.05e6, 1.5e6]),
    (SingleExponential(), np.arange(0, 5e-3, 10e-6), [300.0, 0.807e-3]),
    (BiExponential(), np.arange(0, 5e-3, 10e-6), [200.0, 0.2e-3, 200.0, 0.8e-3]),
]


@pytest.mark.parametrize("model,x,p", MODELS)
def test_jacobian_matches_finite_differences(model, x, p):
    a = model.jacobian(x, p)
    b = finite_difference_jacobian(model, x, p)
    scale = np.max(np.abs(b), axis=0)
    assert np.all(np.abs(a - b) <= 1e-6 * scale)


@settings(max_examples=25, deadline=None)
@given(idx=st.sampled_from(range(len(MODELS))),
       f=st.lists(st.floats(0.7, 1.3), min_size=4, max_size=4))
def test_exact_recovery_from_perturbed_start(idx, f):
    model, x, p = MODELS[idx]
    p = np.array(p, float)
    y = model(x, p)
    p0 = p * np.array(f[:len(p)])
    # a zero-valued parameter is offset by a fraction of a natural scale instead
    if isinstance(model, Lorentzian):
        p0[0] = p[0] + (f[0] - 1) * p[1]
    if isinstance(model, LorentzianDip):
        p0[2] = p[2] + (f[2] - 1) * p[3]
    res = least_squares_fit(model, x, y, p0)
    assert res.converged
    assert np.allclose(res.values, p, rtol=1e-6, atol=1e-6 * np.abs(p).max() * 1e-6)


def test_biexponential_recovery():
    t = np.arange(0, 5e-3, 10e-6)
    p = [150.0, 200e-6, 150.0, 800e-6]
    y = BiExponential()(t, p)
    res = least_squares_fit(BiExponential(), t, y, [100.0, 300e-6, 200.0, 1e-3])
    assert res["tau1"] == pytest.approx(200e-6, rel=1e-6)
    assert res["tau2"] == pytest.approx(800e-6, rel=1e-6)


def test_lorentzian_residual_rms():
    model, x, p = MODELS[0]
    y = model(x, p)
    res = least_squares_fit(model, x, y, np.array(p) * 1.1)
    r = y - model(x, res.values)
    assert np.sqrt(np.mean(r**2)) < 1e-9 * p[2]


def test_agrees_with_scipy_least_squares():
    rng = np.random.default_rng(4)
    model = Lorentzian(60e6)
    x = np.linspace(-4e9, 4e9, 161)
    p = np.array([0.1e9, 1.2e9, 2.0, 0.3])
    y = model(x, p) + rng.normal(0, 0.02, x.size)
    p0 = p * [0, 1.2, 0.8, 1.1]
    ours = least_squares_fit(model, x, y, p0)
    ref = least_squares(lambda q: model(x, q) - y, p0, x_scale=[1e9, 1e9, 1, 1], xtol=1e-14, ftol=1e-14)
    assert np.allclose(ours.values, ref.x, rtol=1e-6, atol=1e-6 * 1e9 * 1e-6)


def test_fit_errors():
    x = np.linspace(0, 1, 3)
    with pytest.raises(InsufficientDataError):
        least_squares_fit(Lorentzian(), x, x, [0.5, 0.3, 1, 0])
    x = np.linspace(-1, 1, 50)
    with pytest.raises(RankDeficiencyError):
        least_squares_fit(Lorentzian(), x, x * 0, [0.0, 0.3, 0.0, 0.0])
    res = least_squares_fit(Lorentzian(), x, Lorentzian()(x, [0.1, 0.4, 1, 0]), [0.0, 0.3, 1, 0], max_iter=1)
    assert not res.converged and res.message


def _line_spectrum(fwhm, amp, reps=1000, nm=1539.949, half_span_nm=0.1, bg=False):
    cat = Catalog((SiteResonance(nm, fwhm, amp),))
    proto = ScanProtocol(start_nm=nm - half_span_nm, stop_nm=nm + half_span_nm, repetitions=reps)
    det = DetectorModel() if bg else DetectorModel().without_background()
    return expected_spectrum(cat, proto, det), cat[0]


def test_gamma_coverage_monte_carlo():
    exp, line = _line_spectrum(1.5e9, 25.0, half_span_nm=0.06)
    hits = 0
    for seed in range(500):
        s = sample_spectrum(exp, seed)
        # shot noise at this height ripples above 0.15, so take the dominant maximum
        c = max(detect_peaks(s), key=lambda c: c.prominence)
        r = fit_lorentzian_peak(s, c)
        hits += abs(r["fwhm"] - 1.5e9) < 3 * r.error("fwhm")
    assert hits >= 495


def test_errors_scale_with_repetitions():
    errs = {}
    for reps in (100, 10000):
        exp, _ = _line_spectrum(2.82e9, 1.0, reps=reps, bg=True)
        e = []
        for seed in range(20):
            s = sample_spectrum(exp, seed)
            e.append(fit_lorentzian_peak(s, max(detect_peaks(s, 0.5), key=lambda c: c.prominence)).error("fwhm"))
        errs[reps] = np.mean(e)
    assert errs[100] / errs[10000] == pytest.approx(10.0, rel=0.1)


def test_fit_table_row():
    exp, line = _line_spectrum(2.82e9, 1.98, bg=True)
    s = sample_spectrum(exp, 1)
    c = detect_peaks(s)
    assert len(c) == 1
    r = fit_lorentzian_peak(s, c[0])
    assert abs(r["center"] - line.frequency_hz) < 50e6
    assert r["fwhm"] == pytest.approx(2.82e9, rel=0.05)


def test_inset_style_line():
    exp, line = _line_spectrum(1.5e9, 2.0, nm=1536.0, bg=True)
    r = fit_lorentzian_peak(sample_spectrum(exp, 3), detect_peaks(sample_spectrum(exp, 3))[0])
    assert abs(r["fwhm"] - 1.5e9) < 0.1e9


def test_symmetric_data_center_at_argmax():
    exp, line = _line_spectrum(1.0e9, 2.0)
    i = int(np.argmax(exp.counts))
    # mirror the right half onto the left so the data are exactly symmetric about index i
    k = min(i, len(exp) - 1 - i)
    y = exp.counts.astype(float).copy()
    y[i - k:i] = y[i + 1:i + 1 + k][::-1]
    s = exp.with_counts(y)
    r = fit_lorentzian_peak(s, detect_peaks(s)[0])
    assert abs(r["center"] - s.frequency_hz[i]) <= s.protocol.step_hz


# ---------------------------------------------------------------------------
# peak detection


def brute_prominence(y):
    """Prominence of every strict local maximum, straight from the definition."""
    out = {}
    n = len(y)
    for i in range(1, n - 1):
        if not (y[i] > y[i - 1] and y[i] >= y[i + 1]):
            continue
        mins = []
        for direction in (-1, 1):
            j, lo = i, y[i]
            while 0 <= j + direction < n:
                j += direction
                if y[j] > y[i]:
                    break
                lo = min(lo, y[j])
            mins.append(lo)
        out[i] = y[i] - max(mins)
    return out


def _values_spectrum(y):
    proto = ScanProtocol(start_nm=1530.0, stop_nm=1531.0)
    f = proto.frequency_grid()[:len(y)]
    from erple.synth import Spectrum
    return Spectrum(f, np.zeros(len(f)), proto, DetectorModel())


@pytest.mark.parametrize("a2,expected", [(0.2, 2), (0.1, 1)])
def test_resolved_pair_against_oracle(a2, expected):
    x = np.arange(200) * 50e6
    lor = lambda c, g, a: a / (1 + (2 * (x - c) / g) ** 2)
    y = 1.0 + lor(80 * 50e6, 100e6, 0.2) + lor(100 * 50e6, 100e6, a2)  # 1 GHz apart, 20 grid steps
    spec = _values_spectrum(y)
    found = detect_peaks(spec, 0.15, values=y)
    oracle = {i for i, p in brute_prominence(y).items() if p >= 0.15}
    assert {c.index for c in found} == oracle
    assert len(found) == expected
    for c in found:
        assert c.prominence == pytest.approx(brute_prominence(y)[c.index], rel=1e-12)
        assert c.left_base <= c.index <= c.right_base


def test_random_profiles_against_oracle():
    rng = np.random.default_rng(8)
    for _ in range(50):
        y = np.cumsum(rng.normal(0, 0.1, 120))
        found = {c.index for c in detect_peaks(_values_spectrum(y), 0.15, values=y)}
        oracle = {i for i, p in brute_prominence(y).items() if p >= 0.15}
        assert found == oracle


def test_flat_spectrum_has_no_peaks():
    y = np.full(100, 3.0)
    assert detect_peaks(_values_spectrum(y), values=y) == []


def test_prominence_scale_equivariance():
    rng = np.random.default_rng(2)
    y = np.cumsum(rng.normal(0, 0.2, 150))
    spec = _values_spectrum(y)
    base = detect_peaks(spec, 0.15, values=y)
    for k in (0.3, 7.0):
        scaled = detect_peaks(spec, 0.15 * k, values=k * y)
        assert [c.index for c in scaled] == [c.index for c in base]
        assert np.allclose([c.prominence for c in scaled], [k * c.prominence for c in base], rtol=1e-12)


def test_full_catalog_peaks(table1):
    """Every raw maximum is a real line; the few misses are shoulders with no maximum of their own.

    The full 70 is reached by the deblending survey, tested with the analysis module.
    """
    exp = expected_spectrum(table1)
    found = detect_peaks(sample_spectrum(exp, 7), smooth_sigma_steps=2.0)
    f = table1.frequencies_hz
    for c in found:
        assert np.min(np.abs(f - c.center_hz)) < 1e9
    fc = np.array([c.center_hz for c in found])
    missed = [r.wavelength_nm for r in table1 if np.min(np.abs(fc - r.frequency_hz)) > r.fwhm_hz / 2]
    assert len(found) >= 67
    assert set(missed) <= {1525.848, 1523.05, 1522.114}


# ---------------------------------------------------------------------------
# decay model selection

T = np.arange(500) * 10e-6


def _trace(y):
    return TimeTrace(np.asarray(y), 10e-6, difference=True)


def test_noiseless_single_selected():
    kind, fit = select_decay_model(_trace(SingleExponential()(T, [400.0, 0.807e-3])))
    assert kind == "single"
    assert fit["tau"] == pytest.approx(0.807e-3, rel=1e-6)


def test_biexponential_selected_monte_carlo():
    lam = BiExponential()(T, [200.0, 0.3e-3, 200.0, 1.0e-3])
    hits = 0
    for seed in range(200):
        kind, fit = select_decay_model(_trace(poisson_counts(lam, seed)))
        hits += kind == "biexponential"
    assert hits >= 190


def test_starred_twins_flagged(table1):
    from erple.dynamics import decay_trace, sample_trace
    from erple.analysis import reference_statistics_repetitions
    proto = ScanProtocol(repetitions=reference_statistics_repetitions())
    det = DetectorModel().without_background()
    starred = [r for r in table1 if r.biexponential]
    assert starred
    for k, r in enumerate(starred):
        twin = r.with_second_component(r.lifetime_s / 3, 0.3)
        tr = sample_trace(decay_trace(twin, det, proto), 100 + k)
        kind, fit = select_decay_model(tr, t_min_s=10e-6)
        assert kind == "biexponential", r.wavelength_nm


def test_decay_selection_errors():
    with pytest.raises(InsufficientDataError):
        select_decay_model(_trace(np.ones(19)))
    with pytest.raises(ModelSelectionError):
        select_decay_model(_trace(np.full(50, np.nan)))
