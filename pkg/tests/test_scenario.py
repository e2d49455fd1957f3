import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stealthreach.errors import InvalidArgumentError
from stealthreach.estimator import DetectorConfig
from stealthreach.scenario import (
    ForkliftParams,
    forklift_dynamics,
    forklift_model,
    forklift_sensor,
    sample_stealth_attacks,
    simulate_closed_loop,
    stanley_control,
    stanley_steer,
)

X0 = np.array([0.0, 5.0, 0.0])
P0 = np.diag([0.03, 0.03, 0.001])
ZERO = ((0.0, 0.0), (0.0, 0.0))
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_dynamics_examples():
    np.testing.assert_allclose(forklift_dynamics(X0, [0.0]), [0.5, 5.0, 0.0], atol=1e-15)
    x = np.array([1.0, 2.0, 0.3])
    assert forklift_dynamics(x, [0.0])[2] == 0.3


@settings(max_examples=50)
@given(seeds)
def test_noise_is_additive_on_positions(seed):
    rng = np.random.default_rng(seed)
    x, u, w = rng.normal(size=3), rng.normal(size=1) * 0.3, rng.normal(size=2)
    np.testing.assert_allclose(forklift_dynamics(x, u, w), forklift_dynamics(x, u) + [w[0], w[1], 0.0], atol=1e-12)


@settings(max_examples=50)
@given(seeds)
def test_dynamics_lipschitz_bound(seed):
    rng = np.random.default_rng(seed)
    p = ForkliftParams()
    x, y = rng.normal(size=3), rng.normal(size=3)
    x[2], y[2] = rng.uniform(-1, 1, 2)
    u = rng.uniform(-0.5, 0.5, 1)
    lhs = np.linalg.norm(forklift_dynamics(x, u) - forklift_dynamics(y, u))
    assert lhs <= (1 + p.dt * p.v0) * np.linalg.norm(x - y) + 1e-12


def test_sensor_and_controller_examples():
    np.testing.assert_array_equal(forklift_sensor([1.0, 2.0, 0.3]), [2.0, 0.3])
    np.testing.assert_allclose(forklift_sensor([1.0, 2.0, 0.3], [0.1, -0.1]), [2.1, 0.2], atol=1e-15)
    assert stanley_steer(0.0, 0.0) == 0.0
    assert abs(stanley_steer(0.0, 5.05) - np.arctan(0.1)) < 1e-15
    assert abs(np.arctan(0.1) - 0.0997) < 1e-4
    # the controller steers back toward the lane: error coordinates are lane - x2 and -x3
    assert stanley_control([3.0, 0.0, 0.0])[0] == 0.0
    assert abs(stanley_control([0.0, 5.05, 0.0])[0] + np.arctan(0.1)) < 1e-15


def test_params_validation():
    with pytest.raises(InvalidArgumentError):
        ForkliftParams(L=0.0)
    with pytest.raises(InvalidArgumentError):
        ForkliftParams(P_w=((1.0, 0.0), (0.0, -1.0)))


def test_noise_free_run_converges_to_lane():
    m = forklift_model(ForkliftParams(P_w=ZERO, P_v=ZERO))
    log = simulate_closed_loop(m, X0, X0, np.zeros((3, 3)), 600, detector=DetectorConfig(2, threshold=0.0))
    offsets = np.abs(log.states[:, 1])
    assert offsets[-1] < 0.005 * offsets[0]
    assert np.all(np.diff(offsets[::50]) < 0)
    np.testing.assert_allclose(log.estimates, log.states, atol=1e-9)


def test_same_seed_same_run():
    m = forklift_model()
    a = simulate_closed_loop(m, X0, X0, P0, 30, seed=7)
    b = simulate_closed_loop(m, X0, X0, P0, 30, seed=7)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    c = simulate_closed_loop(m, X0, X0, P0, 30, seed=8)
    assert not np.array_equal(a.states, c.states)


def test_zero_attack_equals_no_attack():
    m = forklift_model()
    a = simulate_closed_loop(m, X0, X0, P0, 30, seed=3)
    b = simulate_closed_loop(m, X0, X0, P0, 30, seed=3, attacks=np.zeros((30, 2)))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.residuals, b.residuals)


def test_attack_enters_measurement():
    m = forklift_model()
    atk = np.tile([0.3, -0.1], (10, 1))
    a = simulate_closed_loop(m, X0, X0, P0, 10, seed=3)
    b = simulate_closed_loop(m, X0, X0, P0, 10, seed=3, attacks=atk)
    np.testing.assert_allclose(b.measurements[0] - a.measurements[0], [0.3, -0.1], atol=1e-12)


def test_stealth_traces_never_alarm():
    traces = sample_stealth_attacks(100, 10, seed=11)
    assert len(traces) == 100
    for t in traces:
        assert not t.alarms.any()
        assert t.trajectory.shape == (11, 3)
        assert np.all(np.abs(t.attacks) <= 1.0 + 1e-12)


def test_huge_threshold_never_redraws():
    traces = sample_stealth_attacks(20, 10, seed=1, detector=DetectorConfig(2, threshold=1e12))
    assert all(int(t.redraws.sum()) == 0 for t in traces)


def test_tiny_threshold_falls_back():
    det = DetectorConfig(2, threshold=1e-12)
    traces = sample_stealth_attacks(3, 5, seed=2, detector=det, max_redraws=50)
    for t in traces:
        assert not t.alarms.any()
        assert np.all(t.redraws == 50)


def test_traces_are_reproducible_per_index():
    a = sample_stealth_attacks(4, 6, seed=5)
    b = sample_stealth_attacks(2, 6, seed=5)
    for x, y in zip(a[:2], b):
        np.testing.assert_array_equal(x.trajectory, y.trajectory)
        np.testing.assert_array_equal(x.attacks, y.attacks)
