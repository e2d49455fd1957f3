"""Reachability of a filtered closed loop under stealthy sensor attacks.

Three set sequences are iterated as Taylor models over normalised noise
symbols in [-1, 1]^d: the true states X_k, the filter estimates Xh_k and the
control inputs U_k = g(Xh_k). Residuals allowed by the detector bound the
attacker's influence on the estimate. Each step the new sets are boxed into
zonotopes, order-reduced and turned back into first-order models.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidArgumentError
from .estimator import (
    FilterState,
    SystemModel,
    UTWeights,
    chi2_quantile,
    kalman_gain,
    sigma_offsets,
    tolerance_ellipsoid,
    unscented_transform,
    ut_weights,
)
from .expand import taylor_expand
from .sets import (
    Ellipsoid,
    Zonotope,
    ellipsoid_to_zonotope,
    linear_map,
    minkowski_sum,
    reduce_order,
)
from .taylor import (
    TaylorModel,
    tm_add,
    tm_add_constant,
    tm_cartesian,
    tm_compose,
    tm_linear_map,
    tm_scale,
    tm_stack,
    tm_sub,
    tm_to_zonotope,
    zonotope_to_tm,
)

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class ReachConfig:
    taylor_order: int = 2
    horizon: int = 10
    noise_confidence: float = 0.95
    detector_confidence: float = 0.95
    generator_budget: int | None = None
    dt: float = 0.1
    divergence_cap: float = 1e3
    detector_threshold: float | None = None
    ellipsoid_mix: float = 1.0

    def __post_init__(self):
        if self.taylor_order < 1:
            raise InvalidArgumentError("taylor_order must be at least 1")
        if self.horizon < 1:
            raise InvalidArgumentError("horizon must be at least 1")
        for name in ("noise_confidence", "detector_confidence"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1)")
        if not self.dt > 0.0:
            raise InvalidArgumentError("dt must be positive")
        if self.detector_threshold is not None and self.detector_threshold < 0.0:
            raise InvalidArgumentError("detector_threshold must be non-negative")
        if not 0.0 <= self.ellipsoid_mix <= 1.0:
            raise InvalidArgumentError("ellipsoid_mix must lie in [0, 1]")

    def threshold(self, n_y: int) -> float:
        if self.detector_threshold is not None:
            return float(self.detector_threshold)
        return chi2_quantile(n_y, self.detector_confidence)

    def budget(self, n_x: int) -> int:
        return 2 * n_x if self.generator_budget is None else self.generator_budget


@dataclass(frozen=True)
class ReachState:
    true_set: TaylorModel
    est_set: TaylorModel
    input_set: TaylorModel | None
    filter: FilterState
    step: int
    true_zonotope: Zonotope | None = None


@dataclass(frozen=True)
class FlowpipeSegment:
    k: int
    t: float
    zonotope: Zonotope


@dataclass(frozen=True)
class Flowpipe:
    segments: list[FlowpipeSegment] = field(default_factory=list)
    estimates: list[Zonotope] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.segments])

    def contains_trajectory(self, states, tol: float = 1e-9) -> np.ndarray:
        """Per-step membership of ``states[k]`` (k = 1..n) in segment k."""
        states = np.asarray(states, dtype=float)
        return np.array([bool(s.zonotope.contains(states[s.k], tol)) for s in self.segments])


# ---------------------------------------------------------------------------
# set builders


def noise_zonotope(P_w, confidence: float, mix: float = 1.0) -> Zonotope:
    """Zonotope enclosing the ``confidence`` ellipsoid of zero-mean noise with covariance ``P_w``.

    Singular covariances are handled on their range: the ellipsoid
    ``z' diag(lam)^-1 z <= chi2(rank, confidence)`` is built in eigen coordinates
    and embedded back.
    """
    P_w = np.atleast_2d(np.asarray(P_w, dtype=float))
    n = P_w.shape[0]
    vals, vecs = np.linalg.eigh(0.5 * (P_w + P_w.T))
    keep = vals > RANK_TOL * max(1.0, vals.max(initial=0.0))
    rank = int(keep.sum())
    if rank == 0:
        return Zonotope(np.zeros(n))
    eps = chi2_quantile(rank, confidence)
    ell = Ellipsoid(np.zeros(rank), np.diag(1.0 / (eps * vals[keep])))
    return linear_map(vecs[:, keep], None, ellipsoid_to_zonotope(ell, mix))


def residual_zonotope(innov_cov, threshold: float, mix: float = 1.0) -> Zonotope:
    """Zonotope enclosing the detector's tolerance region; a point when the threshold is zero."""
    n_y = innov_cov.shape[0]
    if threshold == 0.0:
        return Zonotope(np.zeros(n_y))
    return ellipsoid_to_zonotope(tolerance_ellipsoid(innov_cov, threshold), mix)


def _to_model(z: Zonotope, budget: int, order: int) -> TaylorModel:
    """Reduce to the generator budget, then make every generator a model variable."""
    return zonotope_to_tm(reduce_order(z, budget), order, axial_as_remainder=False)


def _expand_compose(fmap, inner: TaylorModel, order: int) -> TaylorModel:
    """Expand ``fmap`` about the centre of the inner model's box and evaluate it on the model."""
    box = inner.range()
    return tm_compose(taylor_expand(fmap, box.midpoint, box, order), inner, order)


def _check_width(label: str, z: Zonotope, cap: float, step: int):
    half = np.abs(z.generators).sum(axis=1)
    if not np.all(np.isfinite(half)) or np.any(half > cap):
        raise DivergenceError(
            f"{label} set half-width {float(np.max(half)):.3g} exceeds cap {cap:g} at step {step + 1}", step
        )


# ---------------------------------------------------------------------------
# algorithm steps


def _gain(ut, threshold: float) -> np.ndarray:
    return kalman_gain(ut.cross_cov, ut.innov_cov, allow_singular=threshold == 0.0)


def initialize(x_hat0, P0, model: SystemModel, cfg: ReachConfig) -> ReachState:
    """First step from a point estimate with the true state taken equal to it."""
    x_hat0 = np.asarray(x_hat0, dtype=float)
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    if P0.shape != (model.n_x, model.n_x) or np.max(np.abs(P0 - P0.T), initial=0.0) > 1e-9:
        raise InvalidArgumentError("initial covariance must be a symmetric n_x x n_x matrix")
    if np.linalg.eigvalsh(P0).min() < -1e-12:
        raise InvalidArgumentError("initial covariance is not positive semidefinite")
    weights = ut_weights(model.n_x)
    thr = cfg.threshold(model.n_y)
    budget = cfg.budget(model.n_x)
    u0 = model.g(x_hat0)
    ut = unscented_transform(x_hat0, P0, model.f, u0, model.P_w, model.h, model.P_v, weights)
    K = _gain(ut, thr)
    cov = ut.pred_cov - K @ ut.innov_cov @ K.T
    filt = FilterState(ut.pred_mean, 0.5 * (cov + cov.T), K, ut.pred_mean, ut.pred_cov, ut.innov_cov, ut.cross_cov)

    shift = K @ (model.h(x_hat0) - ut.y_pred)
    gamma = residual_zonotope(ut.innov_cov, thr, cfg.ellipsoid_mix)
    est_z = linear_map(K, ut.pred_mean + shift, gamma)
    true_z = minkowski_sum(
        Zonotope(model.step(x_hat0, u0)), noise_zonotope(model.P_w, cfg.noise_confidence, cfg.ellipsoid_mix)
    )
    _check_width("true", true_z, cfg.divergence_cap, 0)
    _check_width("estimated", est_z, cfg.divergence_cap, 0)
    order = cfg.taylor_order
    return ReachState(
        _to_model(true_z, budget, order), _to_model(est_z, budget, order), None, filt, 1, true_z,
    )


def control_set(state: ReachState, model: SystemModel, cfg: ReachConfig) -> TaylorModel:
    """U_k = g(Xh_k) as a model over the estimate's noise symbols."""
    return _expand_compose(model.g, state.est_set, cfg.taylor_order)


def ukf_update_step(state: ReachState, model: SystemModel, cfg: ReachConfig, weights: UTWeights | None = None):
    """Estimate set and filter matrices for step k + 1.

    The filter matrices are those of a filter sitting at the centre of the
    estimate set's box. The mean update is then applied to the whole set:
    ``sum_i w_i f(x + s_i, g(x)) + K (h(x) - sum_i w_i h(x + s_i)) + K r`` with r in
    the tolerance region.
    """
    weights = weights or ut_weights(model.n_x)
    thr = cfg.threshold(model.n_y)
    order = cfg.taylor_order
    est = state.est_set
    centre = est.range().midpoint
    u_c = model.g(centre)
    ut = unscented_transform(centre, state.filter.cov, model.f, u_c, model.P_w, model.h, model.P_v, weights)
    K = _gain(ut, thr)
    cov = ut.pred_cov - K @ ut.innov_cov @ K.T
    filt = FilterState(
        ut.pred_mean, 0.5 * (cov + cov.T), K, ut.pred_mean, ut.pred_cov, ut.innov_cov, ut.cross_cov,
    )

    U = state.input_set if state.input_set is not None else control_set(state, model, cfg)
    offsets = sigma_offsets(state.filter.cov, weights)
    pred = None
    h_mix = None
    for w_i, s in zip(weights.mean_weights, offsets):
        if w_i == 0.0:
            continue
        shifted = tm_add_constant(est, s)
        f_i = tm_scale(_expand_compose(model.f, tm_stack([shifted, U]), order), w_i)
        h_i = tm_scale(_expand_compose(model.h, shifted, order), w_i)
        pred = f_i if pred is None else tm_add(pred, f_i)
        h_mix = h_i if h_mix is None else tm_add(h_mix, h_i)
    innovation = tm_sub(_expand_compose(model.h, est, order), h_mix)
    mean_map = tm_add(pred, tm_linear_map(K, innovation))

    est_z = minkowski_sum(
        tm_to_zonotope(mean_map), linear_map(K, None, residual_zonotope(ut.innov_cov, thr, cfg.ellipsoid_mix))
    )
    _check_width("estimated", est_z, cfg.divergence_cap, state.step)
    new_est = _to_model(est_z, cfg.budget(model.n_x), order)
    return new_est, filt


def system_update_step(state: ReachState, model: SystemModel, cfg: ReachConfig, W: Zonotope | None = None):
    """True-state set for step k + 1: f(X_k, U_k) (+) W with X and U treated as independent.

    Returns the new model, the control set used and the unreduced zonotope.
    """
    order = cfg.taylor_order
    if W is None:
        W = noise_zonotope(model.P_w, cfg.noise_confidence, cfg.ellipsoid_mix)
    U = state.input_set if state.input_set is not None else control_set(state, model, cfg)
    image = _expand_compose(model.f, tm_cartesian(state.true_set, U), order)
    true_z = minkowski_sum(tm_to_zonotope(image), W)
    _check_width("true", true_z, cfg.divergence_cap, state.step)
    return _to_model(true_z, cfg.budget(model.n_x), order), U, true_z


def advance(state: ReachState, model: SystemModel, cfg: ReachConfig, W: Zonotope | None = None) -> ReachState:
    U = control_set(state, model, cfg)
    with_u = ReachState(state.true_set, state.est_set, U, state.filter, state.step, state.true_zonotope)
    new_true, _, true_z = system_update_step(with_u, model, cfg, W)
    new_est, filt = ukf_update_step(with_u, model, cfg)
    return ReachState(new_true, new_est, None, filt, state.step + 1, true_z)


def run_sra(x_hat0, P0, model: SystemModel, cfg: ReachConfig, t0: float = 0.0) -> Flowpipe:
    """Flowpipe segments 1..horizon; segment k encloses the true state k steps after ``t0``."""
    W = noise_zonotope(model.P_w, cfg.noise_confidence, cfg.ellipsoid_mix)
    state = initialize(x_hat0, P0, model, cfg)
    segments = [FlowpipeSegment(1, t0 + cfg.dt, state.true_zonotope)]
    estimates = [tm_to_zonotope(state.est_set)]
    for k in range(2, cfg.horizon + 1):
        state = advance(state, model, cfg, W)
        segments.append(FlowpipeSegment(k, t0 + k * cfg.dt, state.true_zonotope))
        estimates.append(tm_to_zonotope(state.est_set))
        log.debug("step %d: true half-widths %s", k, np.abs(state.true_zonotope.generators).sum(axis=1))
    return Flowpipe(segments, estimates)
