"""Unscented transform, UKF recursion and the chi-square residual detector."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import chi2

from .errors import InvalidArgumentError, SingularityError
from .expand import SmoothMap
from .sets import Ellipsoid

SYM_TOL = 1e-9
PSD_TOL = 1e-12


@dataclass(frozen=True)
class UTWeights:
    lambda_scale: float
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    @property
    def n(self) -> int:
        return (self.mean_weights.shape[0] - 1) // 2


def ut_weights(n: int, alpha: float = 1.0, beta: float = 2.0, kappa: float = 0.0) -> UTWeights:
    """Standard scaled unscented weights; the defaults give lambda = 0."""
    if n < 1:
        raise InvalidArgumentError("state dimension must be positive")
    lam = alpha**2 * (n + kappa) - n
    if n + lam <= 0:
        raise InvalidArgumentError("n + lambda must be positive")
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - alpha**2 + beta)
    return UTWeights(lam, wm, wc)


@dataclass(frozen=True)
class SystemModel:
    """Plant ``x' = f([x, u]) + w``, sensor ``y = h(x) + v`` and controller ``u = g(x_hat)``."""

    f: SmoothMap
    h: SmoothMap
    g: SmoothMap
    P_w: np.ndarray
    P_v: np.ndarray

    def __post_init__(self):
        P_w = np.atleast_2d(np.asarray(self.P_w, dtype=float))
        P_v = np.atleast_2d(np.asarray(self.P_v, dtype=float))
        n_x, n_u, n_y = self.h.arity, self.g.codomain, self.h.codomain
        if self.f.arity != n_x + n_u or self.f.codomain != n_x:
            raise InvalidArgumentError(f"f must map R^{n_x + n_u} -> R^{n_x}")
        if self.g.arity != n_x:
            raise InvalidArgumentError(f"g must take the {n_x}-dimensional estimate")
        if P_w.shape != (n_x, n_x) or P_v.shape != (n_y, n_y):
            raise InvalidArgumentError("noise covariance shapes do not match the model")
        object.__setattr__(self, "P_w", P_w)
        object.__setattr__(self, "P_v", P_v)

    @property
    def n_x(self) -> int:
        return self.h.arity

    @property
    def n_u(self) -> int:
        return self.g.codomain

    @property
    def n_y(self) -> int:
        return self.h.codomain

    def step(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        xu = np.concatenate(
            [np.broadcast_to(x, batch + x.shape[-1:]), np.broadcast_to(u, batch + u.shape[-1:])], axis=-1
        )
        return self.f(xu)


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    cov: np.ndarray
    gain: np.ndarray | None = None
    pred_mean: np.ndarray | None = None
    pred_cov: np.ndarray | None = None
    innov_cov: np.ndarray | None = None
    cross_cov: np.ndarray | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise InvalidArgumentError(f"covariance shape {cov.shape} does not match mean length {mean.shape[0]}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(cov), initial=0.0)):
            raise InvalidArgumentError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class DetectorConfig:
    """Chi-square alarm ``r' P_y^-1 r > threshold``; threshold defaults to the ``confidence`` quantile."""

    sensor_dim: int
    confidence: float = 0.95
    threshold: float | None = None

    def __post_init__(self):
        if self.sensor_dim < 1:
            raise InvalidArgumentError("sensor_dim must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise InvalidArgumentError("confidence must lie in (0, 1)")
        if self.threshold is None:
            object.__setattr__(self, "threshold", chi2_quantile(self.sensor_dim, self.confidence))
        # an explicit zero threshold is allowed for the noise-free limit
        if not self.threshold >= 0.0:
            raise InvalidArgumentError("threshold must be non-negative")

    @property
    def false_alarm_alpha(self) -> float:
        return 1.0 - self.confidence


class UTResult(NamedTuple):
    pred_mean: np.ndarray
    pred_cov: np.ndarray
    innov_cov: np.ndarray
    cross_cov: np.ndarray
    y_pred: np.ndarray
    sigma_points: np.ndarray


def chi2_quantile(dof: int, prob: float) -> float:
    if dof < 1:
        raise InvalidArgumentError("degrees of freedom must be at least 1")
    if not 0.0 < prob < 1.0:
        raise InvalidArgumentError(f"probability {prob} outside (0, 1)")
    return float(chi2.ppf(prob, dof))


def matrix_sqrt(cov) -> np.ndarray:
    """Lower Cholesky factor, or a symmetric eigen square root for singular PSD input."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        if vals.min(initial=0.0) < -PSD_TOL * max(1.0, vals.max(initial=0.0)):
            raise SingularityError("covariance is not positive semidefinite") from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sigma_offsets(cov, weights: UTWeights) -> np.ndarray:
    """The 2n+1 offsets ``0, +-sqrt((n+lambda) P)`` columns, as rows."""
    n = weights.n
    S = np.sqrt(n + weights.lambda_scale) * matrix_sqrt(cov)
    return np.vstack([np.zeros(n), S.T, -S.T])


def unscented_transform(mean, cov, f: SmoothMap, u, P_w, h: SmoothMap, P_v, weights: UTWeights) -> UTResult:
    mean = np.asarray(mean, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    sig = mean + sigma_offsets(cov, weights)
    fx = f(np.hstack([sig, np.broadcast_to(u, (sig.shape[0], u.shape[0]))]))
    hx = h(sig)
    wm, wc = weights.mean_weights, weights.cov_weights
    x_pred = wm @ fx
    y_pred = wm @ hx
    dx, dy, ds = fx - x_pred, hx - y_pred, sig - mean
    P_pred = (wc[:, None] * dx).T @ dx + P_w
    P_y = (wc[:, None] * dy).T @ dy + P_v
    P_xy = (wc[:, None] * ds).T @ dy
    return UTResult(x_pred, 0.5 * (P_pred + P_pred.T), 0.5 * (P_y + P_y.T), P_xy, y_pred, sig)


def kalman_gain(cross_cov, innov_cov, allow_singular: bool = False) -> np.ndarray:
    """``P_xy P_y^-1``; a pseudo-inverse is used only when ``allow_singular`` and P_y is exactly singular."""
    try:
        if np.linalg.matrix_rank(innov_cov) < innov_cov.shape[0]:
            raise np.linalg.LinAlgError
        return np.linalg.solve(innov_cov.T, cross_cov.T).T
    except np.linalg.LinAlgError:
        if allow_singular:
            return cross_cov @ np.linalg.pinv(innov_cov)
        raise SingularityError("innovation covariance is singular") from None


def nis(residual, innov_cov, allow_singular: bool = False) -> float:
    """Normalised innovation squared ``r' P^-1 r``.

    With ``allow_singular`` a singular ``P`` uses the pseudo-inverse on its range
    and residuals with a component outside the range score ``inf``.
    """
    r = np.asarray(residual, dtype=float)
    try:
        if np.linalg.matrix_rank(innov_cov) < innov_cov.shape[0]:
            raise np.linalg.LinAlgError
        return float(r @ np.linalg.solve(innov_cov, r))
    except np.linalg.LinAlgError:
        if not allow_singular:
            raise SingularityError("innovation covariance is singular") from None
    pinv = np.linalg.pinv(innov_cov)
    outside = r - innov_cov @ (pinv @ r)
    if np.linalg.norm(outside) > 1e-12 * max(1.0, np.linalg.norm(r)):
        return float("inf")
    return float(r @ pinv @ r)


def ukf_step(state: FilterState, u, y, model: SystemModel, weights: UTWeights, detector: DetectorConfig):
    """One filter cycle for measurement ``y`` of the state the estimate ``state.mean`` refers to.

    Returns ``(new_state, residual, alarm)``; the residual is ``y - h(state.mean)``.
    """
    ut = unscented_transform(state.mean, state.cov, model.f, u, model.P_w, model.h, model.P_v, weights)
    K = kalman_gain(ut.cross_cov, ut.innov_cov)
    y = np.asarray(y, dtype=float)
    mean = ut.pred_mean + K @ (y - ut.y_pred)
    cov = ut.pred_cov - K @ ut.innov_cov @ K.T
    residual = y - model.h(state.mean)
    alarm = nis(residual, ut.innov_cov) > detector.threshold
    new = FilterState(
        mean, 0.5 * (cov + cov.T), K, ut.pred_mean, ut.pred_cov, ut.innov_cov, ut.cross_cov,
    )
    return new, residual, bool(alarm)


def tolerance_region(state: FilterState, cfg: DetectorConfig) -> Ellipsoid:
    """Residuals that keep the detector silent: ``{r | r' P_y^-1 r <= threshold}``."""
    if state.innov_cov is None:
        raise InvalidArgumentError("filter state carries no innovation covariance yet")
    return tolerance_ellipsoid(state.innov_cov, cfg.threshold)


def tolerance_ellipsoid(innov_cov, threshold: float) -> Ellipsoid:
    try:
        inv = np.linalg.inv(innov_cov)
    except np.linalg.LinAlgError:
        raise SingularityError("innovation covariance is singular") from None
    return Ellipsoid(np.zeros(innov_cov.shape[0]), 0.5 * (inv + inv.T) / threshold)
