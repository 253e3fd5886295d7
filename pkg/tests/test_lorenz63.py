from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nestedpf.model import contains
from nestedpf.lorenz63 import (
    DEFAULT_TRUE_PARAMS,
    DIVERGENCE_LIMIT,
    PARAM_NAMES,
    PARAM_SUPPORT,
    DivergenceError,
    LorenzConfig,
    build_lorenz_model,
    euler_step,
    observe,
    read_observations_csv,
    simulate_truth,
    write_observations_csv,
    write_truth_csv,
)

THETA = np.array([10.0, 28.0, 8.0 / 3.0, 0.8])


def test_euler_step_drift_only():
    x = np.array([1.0, 1.0, 1.0])
    out = euler_step(THETA, x, np.zeros(3), 1e-3)
    assert_allclose(out, [1.0, 1.026, 1.0 - (5.0 / 3.0) * 1e-3], rtol=1e-13)


def test_euler_step_noise_scales_with_sqrt_dt():
    x = np.array([1.0, 1.0, 1.0])
    noise = np.array([2.0, 0.0, 0.0])
    out = euler_step(THETA, x, noise, 1e-3)
    assert_allclose(out[0], 1.0 + 2.0 * np.sqrt(1e-3), rtol=1e-13)


def test_euler_step_batched_matches_loop():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=(5, 3)) * 5.0
    noise = rng.normal(size=(5, 3))
    batched = euler_step(THETA, xs, noise, 1e-3)
    rows = np.stack([euler_step(THETA, xs[i], noise[i], 1e-3) for i in range(5)])
    assert_allclose(batched, rows, rtol=1e-14)


def test_observe_reads_first_and_third_coordinates():
    x = np.array([1.0, 2.0, 3.0])
    y = observe(THETA, x, np.zeros(2), 0.0)
    assert_allclose(y, [0.8, 2.4], rtol=1e-14)
    y_noisy = observe(THETA, x, np.array([1.0, -1.0]), 0.5)
    assert_allclose(y_noisy, [1.3, 1.9], rtol=1e-14)


def test_simulate_truth_shapes_and_epoch_alignment():
    cfg = LorenzConfig()
    truth = simulate_truth(cfg, THETA, 200, np.random.default_rng(5))
    assert truth.states.shape == (200, 3)
    assert truth.observations.shape == (5, 2)
    assert truth.initial_state.shape == (3,)
    assert_allclose(truth.true_params, THETA)


def test_simulate_truth_noiseless_observations_match_states():
    cfg = LorenzConfig()
    truth = simulate_truth(cfg, THETA, 120, np.random.default_rng(6), obs_noise=False)
    for epoch in range(3):
        x = truth.states[(epoch + 1) * cfg.obs_gap - 1]
        assert_allclose(truth.observations[epoch], [0.8 * x[0], 0.8 * x[2]], rtol=1e-12)


def test_simulate_truth_obs_noise_flag_keeps_state_path():
    cfg = LorenzConfig()
    noisy = simulate_truth(cfg, THETA, 160, np.random.default_rng(7))
    clean = simulate_truth(cfg, THETA, 160, np.random.default_rng(7), obs_noise=False)
    assert_allclose(noisy.states, clean.states, rtol=1e-14)
    assert not np.allclose(noisy.observations, clean.observations)


def test_simulate_truth_divergence_raises_with_step():
    cfg = LorenzConfig(dt=10.0, obs_gap=1)
    with pytest.raises(DivergenceError) as info:
        simulate_truth(cfg, THETA, 50, np.random.default_rng(8))
    assert info.value.step < 50


def test_model_log_likelihood_hand_value():
    model = build_lorenz_model()
    x = np.array([[1.0, 2.0, 3.0]])
    y = np.array([0.9, 2.3])
    out = model.log_likelihood(THETA, x, y, 0)
    expected = -np.log(2.0 * np.pi * 0.1) - (0.01 + 0.01) / 0.2
    assert_allclose(out, [expected], rtol=1e-12)


def test_model_log_likelihood_flags_divergent_rows():
    model = build_lorenz_model()
    x = np.array(
        [
            [1.0, 2.0, 3.0],
            [2.0 * DIVERGENCE_LIMIT, 0.0, 0.0],
            [np.nan, 0.0, 0.0],
        ]
    )
    out = model.log_likelihood(THETA, x, np.array([0.9, 2.3]), 0)
    assert np.isfinite(out[0])
    assert out[1] == -np.inf
    assert out[2] == -np.inf


def test_model_transition_matches_manual_euler_chain():
    cfg = LorenzConfig()
    model = build_lorenz_model(cfg)
    x0 = np.array([[-5.9, -5.5, 24.6], [-6.2, -5.0, 23.0]])
    moved = model.sample_transition(THETA, x0, 0, np.random.default_rng(9))
    noise = np.random.default_rng(9).standard_normal((cfg.obs_gap, 2, 3))
    x = x0
    for j in range(cfg.obs_gap):
        x = euler_step(THETA, x, noise[j], cfg.dt)
    assert np.array_equal(moved, x)


def test_model_prior_and_support():
    cfg = LorenzConfig()
    model = build_lorenz_model(cfg)
    assert model.d_x == 3 and model.d_y == 2 and model.d_theta == 4
    box = model.support()
    assert_allclose(box.lower, PARAM_SUPPORT.lower)
    assert_allclose(box.upper, PARAM_SUPPORT.upper)
    assert_allclose(box.lower, [5.0, 18.0, 1.0, 0.5])
    assert_allclose(box.upper, [20.0, 50.0, 8.0, 3.0])
    assert contains(box, THETA)
    draws = model.sample_state_prior(np.random.default_rng(10), 50_000)
    assert_allclose(draws.mean(axis=0), cfg.prior_mean, atol=0.1)
    assert_allclose(draws.var(axis=0), [10.0, 10.0, 10.0], rtol=0.05)
    params = model.sample_param_prior(np.random.default_rng(11), 10_000)
    assert params.shape == (10_000, 4)
    assert np.all(params >= PARAM_SUPPORT.lower)
    assert np.all(params <= PARAM_SUPPORT.upper)


def test_truth_and_observation_csv_round_trip(tmp_path):
    cfg = LorenzConfig()
    truth = simulate_truth(cfg, THETA, 120, np.random.default_rng(12))
    tpath = write_truth_csv(truth, cfg, tmp_path / "truth.csv")
    opath = write_observations_csv(truth, cfg, tmp_path / "observations.csv")
    header = tpath.read_text().splitlines()[0]
    assert header == "epoch,t_continuous,x1,x2,x3,y1,y3"
    lines = tpath.read_text().splitlines()
    assert len(lines) == 1 + 3
    first = lines[1].split(",")
    assert int(first[0]) == 1
    assert_allclose(float(first[1]), cfg.obs_gap * cfg.dt, rtol=1e-12)
    assert_allclose(float(first[2]), truth.states[cfg.obs_gap - 1][0], rtol=1e-15)
    recovered = read_observations_csv(opath)
    assert_allclose(recovered, truth.observations, rtol=1e-15)


def test_param_names_and_default_truth():
    assert PARAM_NAMES == ("s", "r", "b", "k_obs")
    assert_allclose(DEFAULT_TRUE_PARAMS, [10.0, 28.0, 8.0 / 3.0, 0.8])
    assert_allclose(LorenzConfig().obs_std, np.sqrt(0.1), rtol=1e-15)


def test_divergence_error_carries_location():
    err = DivergenceError(step=17, value=2e6)
    assert err.step == 17
    assert err.value == 2e6
    assert "17" in str(err)


def test_euler_step_zero_dt_is_identity():
    x = np.array([1.3, -0.4, 22.0])
    out = euler_step(THETA, x, np.array([5.0, -2.0, 1.0]), 0.0)
    assert np.array_equal(out, x)


def test_euler_step_pure_noise_at_origin():
    out = euler_step(THETA, np.zeros(3), np.ones(3), 1e-3)
    assert np.array_equal(out, np.full(3, np.sqrt(1e-3)))


def test_observe_gain_extremes():
    zero_gain = np.array([10.0, 28.0, 8.0 / 3.0, 0.0])
    y = observe(zero_gain, np.array([3.0, 9.0, -4.0]), np.zeros(2), 1.0)
    assert np.array_equal(y, np.zeros(2))
    unit_gain = np.array([10.0, 28.0, 8.0 / 3.0, 1.0])
    y = observe(unit_gain, np.array([1.0, 0.0, 1.0]), np.ones(2), 1.0)
    assert np.array_equal(y, np.array([2.0, 2.0]))


def test_simulate_truth_same_seed_bit_identical():
    cfg = LorenzConfig()
    first = simulate_truth(cfg, THETA, 120, np.random.default_rng(42))
    second = simulate_truth(cfg, THETA, 120, np.random.default_rng(42))
    assert np.array_equal(first.states, second.states)
    assert np.array_equal(first.observations, second.observations)


def test_simulate_truth_long_run_observation_count():
    cfg = LorenzConfig()
    truth = simulate_truth(cfg, THETA, 24_000, np.random.default_rng(3))
    assert truth.states.shape == (24_000, 3)
    assert truth.observations.shape == (600, 2)


def test_deterministic_trajectory_stays_on_attractor():
    cfg = LorenzConfig()
    x = np.array([cfg.prior_mean])
    zero = np.zeros((1, 3))
    worst = 0.0
    for _ in range(100_000):
        x = euler_step(THETA, x, zero, cfg.dt)
        worst = max(worst, float(np.abs(x).max()))
    assert worst < 100.0


def test_euler_step_is_linear_in_noise():
    x = np.array([1.3, -0.8, 21.0])
    noise = np.array([0.4, -1.1, 2.2])
    single = euler_step(THETA, x, noise, 1e-3)
    double = euler_step(THETA, x, 2.0 * noise, 1e-3)
    assert_allclose(double - single, np.sqrt(1e-3) * noise, rtol=1e-10)
