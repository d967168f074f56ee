import math

import numpy as np
import pytest
from scipy.optimize import curve_fit

from optobae import estimator as est
from optobae import timedomain as td
from optobae.freq_solver import output_psd
from optobae.model import SignalPulse, SystemParams


@pytest.fixture
def fast():
    """Broader mechanical line so short runs resolve it."""
    return SystemParams(1.0, 0.05, 100.0).with_pump(1.0, 0.0)


def test_seed_determinism(fast):
    a = td.integrate(fast, None, 200.0, 0.05, seed=7)
    b = td.integrate(fast, None, 200.0, 0.05, seed=7)
    assert np.array_equal(a.outputs, b.outputs) and np.array_equal(a.states, b.states)
    c = td.integrate(fast, None, 200.0, 0.05, seed=8)
    assert not np.array_equal(a.outputs, c.outputs)


def test_discrete_update_preserves_stationary_covariance(fast):
    integ = td.LangevinIntegrator(fast, 0.05)
    P = integ.stationary_cov
    Q = (integ.noise_sqrt @ integ.noise_sqrt.T)[:6, :6]
    np.testing.assert_allclose(integ.phi @ P @ integ.phi.T + Q, P, atol=1e-12)


def test_step_too_coarse_rejected(fast):
    with pytest.raises(ValueError):
        td.LangevinIntegrator(fast, 0.2)


def test_unit_white_noise_calibration():
    rng = np.random.default_rng(3)
    dt, L, n = 0.1, 1024, 64
    x = rng.standard_normal(L * n) / math.sqrt(2 * dt)  # single-sided PSD 1
    e = td._estimate(x, dt, L, td.MIN_SEGMENTS)
    mean, sem = e.band_average(0.5, 25.0)
    assert abs(mean - 1.0) < 3 * sem
    assert e.relative_std == pytest.approx(1 / 8)


def test_sinusoid_parseval():
    dt, L = 0.1, 2048
    k = 100
    t = dt * np.arange(L * 8)
    x = 0.7 * np.cos(2 * math.pi * k / (L * dt) * t)
    e = td._estimate(x, dt, L, td.MIN_SEGMENTS)
    df = 1.0 / (L * dt)
    assert float(np.sum(e.values) * df) == pytest.approx(0.7**2 / 2, rel=1e-10)


def test_too_few_segments_rejected(fast):
    traj = td.integrate(fast, None, 100.0, 0.05, seed=1)
    with pytest.raises(ValueError, match="segments"):
        td.estimate_psd(traj, 1, segment_length=1024)


def test_thermal_mechanical_line_is_lorentzian():
    # uncoupled mechanics: S_d = 2γ_m (2n_T+1) / (γ_m² + Ω²), half width γ_m
    p = SystemParams(1.0, 0.05, 100.0, n_T=1.0)
    integ = td.LangevinIntegrator(p, 0.05)
    traj = integ.run(16384 * 32, np.random.default_rng(11), store_states=True)
    e = td._estimate(traj.states[:-1, 4], 0.05, 16384, td.MIN_SEGMENTS)
    sel = (e.frequencies > 0) & (e.frequencies < 0.5)
    (amp, width), _ = curve_fit(lambda w, a, g: a / (g**2 + w**2), e.frequencies[sel],
                                e.values[sel], p0=(0.1, 0.1))
    assert abs(width) == pytest.approx(0.05, rel=0.1)
    assert amp == pytest.approx(2 * 0.05 * 3.0, rel=0.1)


def test_output_psds_match_solver(fast):
    bae = lambda om: est.bae_weights(fast, om).output_vector()  # noqa: E731
    res = td.simulate_psd(fast, {"plus": 0, "minus": 1, "bae": bae}, 2048, 64, 0.05, seed=5)
    refs = {"plus": lambda w: output_psd(fast, w, which=0),
            "minus": lambda w: output_psd(fast, w, which=1),
            "bae": lambda w: output_psd(fast, w, combination=bae(w))}
    for name, e in res.items():
        for lo, hi in [(0.05, 0.2), (0.2, 1.0)]:
            mean, sem = e.band_average(lo, hi, reference=refs[name])
            assert abs(mean - 1.0) < 3.5 * sem, (name, lo, mean, sem)


def test_stream_combiner_matches_whole_record(fast):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6000, 4))
    sel = lambda om: np.stack([np.ones_like(om), np.exp(-om**2 / 0.5 + 3j * om), 0 * om, 0 * om], -1)  # noqa: E731
    comb = td.StreamCombiner(sel, 0.05, margin=512, block=1024)
    pieces = [comb.push(x[i:i + 700]) for i in range(0, 6000, 700)]
    streamed = np.concatenate(pieces)
    whole = td.combine_records(x, 0.05, sel)
    n = streamed.shape[0]
    np.testing.assert_allclose(streamed, whole[512:512 + n], atol=1e-9)


def test_default_margin_is_power_of_two(desk):
    m = td.default_margin(desk, 0.05)
    assert m == 1 << 20 and m >= 30 / (1e-3 * 0.05)


def test_pulse_force_edges():
    pulse = SignalPulse(math.sqrt(2.0), tau=1.0)
    f = td.pulse_force(pulse, 10, 0.4, t0=2.0)
    # pulse covers [1.5, 2.5]: steps [1.2,1.6) 0.25, [1.6,2.0) 1, [2.0,2.4) 1, [2.4,2.8) 0.25
    np.testing.assert_allclose(f[:, 0], [0, 0, 0, 0.25, 1, 1, 0.25, 0, 0, 0])
    np.testing.assert_allclose(f[:, 1], 0.0, atol=1e-16)


def test_trajectory_csv_header(tmp_path, fast):
    traj = td.integrate(fast, None, 1.0, 0.05, seed=0)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    first = path.read_text().splitlines()[0]
    assert "single-sided" in first and "rotating frame" in first


def test_detection_null_and_zero_trials(fast):
    pulse = SignalPulse(0.0, tau=20.0)
    w = lambda om: est.bae_weights(fast, om).output_vector()  # noqa: E731
    with pytest.raises(ValueError):
        td.run_detection_experiment(fast, pulse, w, 0, seed=1)
    r = td.run_detection_experiment(fast, pulse, w, 400, seed=1, threshold=0.0, record_factor=4)
    assert abs(r.snr) < 3 / math.sqrt(400)
    assert abs(r.detection_rate - 0.5) < 3 * 0.5 / math.sqrt(400)
    assert r.estimates.std(ddof=1) == pytest.approx(r.expected_std, rel=0.15)


def test_detection_estimator_is_linear(fast):
    w = lambda om: est.bae_weights(fast, om).output_vector()  # noqa: E731
    a = td.run_detection_experiment(fast, SignalPulse(0.05, 20.0), w, 100, seed=4, record_factor=4)
    b = td.run_detection_experiment(fast, SignalPulse(0.10, 20.0), w, 100, seed=4, record_factor=4)
    # same seeds: identical noise, so the estimates differ by exactly the signal
    # (up to the O(dt²) gap between the continuous template and step-averaged records)
    np.testing.assert_allclose(b.estimates - a.estimates, 0.05, rtol=1e-4)
