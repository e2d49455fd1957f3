import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import linear_recursion, random_linear_loop, sample_zonotope
from stealthreach.config import linear_model
from stealthreach.errors import DivergenceError, InvalidArgumentError
from stealthreach.estimator import DetectorConfig, chi2_quantile
from stealthreach.experiments import FORKLIFT_P0, FORKLIFT_X0
from stealthreach.reach import (
    ReachConfig,
    advance,
    initialize,
    noise_zonotope,
    residual_zonotope,
    run_sra,
)
from stealthreach.scenario import ForkliftParams, forklift_model, sample_stealth_attacks, simulate_closed_loop
from stealthreach.sets import Zonotope
from stealthreach.taylor import tm_to_zonotope

X0 = np.array(FORKLIFT_X0)
P0 = np.array(FORKLIFT_P0)
ZERO = ((0.0, 0.0), (0.0, 0.0))
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def box_of(z: Zonotope):
    half = np.abs(z.generators).sum(axis=1)
    return z.center - half, z.center + half


def test_config_validation():
    for bad in (dict(taylor_order=0), dict(horizon=0), dict(noise_confidence=1.0), dict(dt=0.0),
                dict(detector_threshold=-1.0), dict(ellipsoid_mix=1.5)):
        with pytest.raises(InvalidArgumentError):
            ReachConfig(**bad)
    assert ReachConfig().budget(3) == 6
    assert abs(ReachConfig().threshold(2) - chi2_quantile(2, 0.95)) < 1e-15


def test_horizon_and_timestamps():
    m = forklift_model()
    fp = run_sra(X0, P0, m, ReachConfig(horizon=1))
    assert len(fp) == 1 and fp.segments[0].k == 1 and fp.segments[0].t == pytest.approx(0.1)
    fp = run_sra(X0, P0, m, ReachConfig(horizon=10), t0=2.0)
    assert len(fp) == 10 and len(fp.estimates) == 10
    np.testing.assert_allclose(fp.times, 2.0 + 0.1 * np.arange(1, 11), atol=1e-12)
    assert np.all(np.diff(fp.times) > 0)


def test_first_step_encloses_nominal_image_and_noise():
    m = forklift_model()
    cfg = ReachConfig()
    state = initialize(X0, P0, m, cfg)
    lo, hi = box_of(state.true_zonotope)
    nominal = m.step(X0, m.g(X0))
    assert np.all(lo <= nominal) and np.all(nominal <= hi)
    w_half = np.sqrt(chi2_quantile(2, 0.95) * 0.2)
    assert abs(w_half - 1.094) < 1e-3
    half = 0.5 * (hi - lo)
    assert np.all(half[:2] >= w_half - 1e-12)
    # the residual region is centred at zero, so the estimate set is centred at the predicted mean
    est = tm_to_zonotope(state.est_set)
    np.testing.assert_allclose(est.center, state.filter.pred_mean, atol=1e-9)


def test_noise_and_residual_sets():
    W = noise_zonotope(np.diag([0.2, 0.2]), 0.95)
    lo, hi = box_of(W)
    np.testing.assert_allclose(hi, np.sqrt(chi2_quantile(2, 0.95) * 0.2), rtol=1e-12)
    # singular covariance: the set lives on the range
    W = noise_zonotope(np.diag([0.2, 0.0]), 0.95)
    assert np.all(W.generators[1] == 0.0)
    assert np.abs(W.generators[0]).sum() == pytest.approx(np.sqrt(chi2_quantile(1, 0.95) * 0.2))
    assert noise_zonotope(np.zeros((2, 2)), 0.95).num_generators == 0
    assert residual_zonotope(np.eye(2), 0.0).num_generators == 0


def test_invalid_initial_covariance():
    m = forklift_model()
    with pytest.raises(InvalidArgumentError):
        initialize(X0, [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], m, ReachConfig())
    with pytest.raises(InvalidArgumentError):
        initialize(X0, -np.eye(3), m, ReachConfig())
    with pytest.raises(InvalidArgumentError):
        initialize(X0, np.eye(2), m, ReachConfig())


def test_degenerate_noise_collapses_to_nominal_trajectory():
    m = forklift_model(ForkliftParams(P_w=ZERO, P_v=ZERO))
    x0 = np.array([0.0, 5.0, 0.05])
    cfg = ReachConfig(horizon=10, detector_threshold=0.0)
    fp = run_sra(x0, np.zeros((3, 3)), m, cfg)
    log = simulate_closed_loop(m, x0, x0, np.zeros((3, 3)), 10, detector=DetectorConfig(2, threshold=0.0))
    for seg in fp:
        lo, hi = box_of(seg.zonotope)
        assert np.all(hi - lo <= 2e-6)
        np.testing.assert_allclose(seg.zonotope.center, log.states[seg.k], atol=1e-6)


def test_identity_plant_without_input_stays_put():
    m = linear_model(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((1, 2)), np.zeros((2, 2)), np.eye(2) * 0.1)
    x0 = np.array([1.0, -2.0])
    fp = run_sra(x0, np.eye(2) * 0.1, m, ReachConfig(horizon=5))
    for seg in fp:
        lo, hi = box_of(seg.zonotope)
        np.testing.assert_allclose(lo, x0, atol=1e-12)
        np.testing.assert_allclose(hi, x0, atol=1e-12)


def linear_case(seed, budget):
    rng = np.random.default_rng(seed)
    A, B, C, K, P_w, P_v, x0, P0_ = random_linear_loop(rng)
    cfg = ReachConfig(horizon=10, generator_budget=budget)
    W = noise_zonotope(P_w, cfg.noise_confidence)
    thr = chi2_quantile(2, cfg.detector_confidence)
    true, est = linear_recursion(
        A, B, C, K, P_w, P_v, x0, P0_, (W.center, W.generators),
        lambda Py: residual_zonotope(Py, thr).generators, cfg.horizon,
    )
    fp = run_sra(x0, P0_, linear_model(A, B, C, K, P_w, P_v), cfg)
    return rng, fp, true, est


@settings(max_examples=8, deadline=None)
@given(seeds)
def test_linear_loop_contains_exact_recursion(seed):
    rng, fp, true, est = linear_case(seed, None)
    for seg, (c, G), (ce, Ge), ze in zip(fp, true, est, fp.estimates):
        assert np.all(seg.zonotope.contains(sample_zonotope(rng, c, G, 200), 1e-9))
        assert np.all(ze.contains(sample_zonotope(rng, ce, Ge, 200), 1e-9))
        np.testing.assert_allclose(seg.zonotope.center, c, atol=1e-9)
        np.testing.assert_allclose(ze.center, ce, atol=1e-9)


def test_linear_loop_with_large_budget_is_exact():
    # with room for every generator no reduction happens and the sets coincide
    _, fp, true, est = linear_case(4, 400)
    for seg, (c, G), ze, (ce, Ge) in zip(fp, true, fp.estimates, est):
        lo, hi = box_of(seg.zonotope)
        half = np.abs(G).sum(axis=1)
        np.testing.assert_allclose(lo, c - half, atol=1e-9)
        np.testing.assert_allclose(hi, c + half, atol=1e-9)
        np.testing.assert_allclose(box_of(ze)[1], ce + np.abs(Ge).sum(axis=1), atol=1e-9)


def test_lower_threshold_gives_nested_flowpipe():
    m = forklift_model()
    attacked = run_sra(X0, P0, m, ReachConfig(horizon=10))
    quiet = run_sra(X0, P0, m, ReachConfig(horizon=10, detector_threshold=2.0))
    strict = 0
    for a, q in zip(attacked, quiet):
        alo, ahi = box_of(a.zonotope)
        qlo, qhi = box_of(q.zonotope)
        assert np.all(alo <= qlo + 1e-9) and np.all(qhi <= ahi + 1e-9)
        strict += bool(np.any(alo < qlo - 1e-9) or np.any(qhi < ahi - 1e-9))
    # step 1 only carries the noise set, later steps feel the detector
    assert strict >= 9


def test_stealthy_filter_states_stay_in_estimate_sets():
    m = forklift_model()
    fp = run_sra(X0, P0, m, ReachConfig(horizon=10))
    traces = sample_stealth_attacks(200, 10, seed=21, model=m)
    inside = np.array([[ze.contains(t.estimates[k + 1], 1e-9) for k, ze in enumerate(fp.estimates)] for t in traces])
    assert inside.mean() >= 0.99


def test_system_update_covers_sampled_successors():
    m = forklift_model()
    cfg = ReachConfig()
    rng = np.random.default_rng(8)
    state = initialize(X0, P0, m, cfg)
    nxt = advance(state, m, cfg)
    W = noise_zonotope(m.P_w, cfg.noise_confidence)
    xs = tm_to_zonotope(state.true_set).sample(rng, 500)
    xh = tm_to_zonotope(state.est_set).sample(rng, 500)
    ws = W.sample(rng, 500)
    succ = np.array([m.step(x, m.g(e)) for x, e in zip(xs, xh)]) + ws
    assert np.all(nxt.true_zonotope.contains(succ, 1e-9))


def test_divergence_reports_last_valid_step():
    A = np.eye(2) * 3.0
    m = linear_model(A, np.zeros((2, 1)), np.eye(2), np.zeros((1, 2)), np.eye(2) * 0.1, np.eye(2) * 0.1)
    cfg = ReachConfig(horizon=30, divergence_cap=1e3)
    with pytest.raises(DivergenceError) as err:
        run_sra([0.0, 0.0], np.eye(2) * 0.1, m, cfg)
    last = err.value.last_valid_step
    assert 1 <= last < 30
    fp = run_sra([0.0, 0.0], np.eye(2) * 0.1, m, ReachConfig(horizon=last, divergence_cap=1e3))
    assert len(fp) == last
    with pytest.raises(DivergenceError) as err:
        run_sra(X0, P0, forklift_model(), ReachConfig(divergence_cap=0.5))
    assert err.value.last_valid_step == 0
