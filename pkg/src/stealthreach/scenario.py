"""Forklift case study: plant, sensor, Stanley steering, closed-loop simulation
and stealthy sensor-attack sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOrderError
from .estimator import (
    DetectorConfig,
    FilterState,
    SystemModel,
    UTWeights,
    kalman_gain,
    nis,
    unscented_transform,
    ut_weights,
)
from .expand import SmoothMap, affine_map
from .sets import icos, imul, ipow, irecip, isin

STATE_DIM = 3
SENSOR_DIM = 2
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class ForkliftParams:
    L: float = 2.0
    v0: float = 5.0
    dt: float = 0.1
    k_g: float = 0.1
    k_s: float = 0.05
    P_w: tuple = ((0.2, 0.0), (0.0, 0.2))
    P_v: tuple = ((0.2, 0.0), (0.0, 0.2))
    lane_offset: float = 0.0

    def __post_init__(self):
        for name in ("L", "v0", "dt", "k_g", "k_s"):
            if not getattr(self, name) > 0.0:
                raise InvalidArgumentError(f"{name} must be positive")
        for name in ("P_w", "P_v"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (2, 2) or not np.allclose(m, m.T) or np.linalg.eigvalsh(m).min() < 0.0:
                raise InvalidArgumentError(f"{name} must be a symmetric PSD 2x2 matrix")

    @property
    def step_length(self) -> float:
        return self.dt * self.v0

    @property
    def process_cov(self) -> np.ndarray:
        """Process noise acts on the two position axes only; heading is noise free."""
        out = np.zeros((STATE_DIM, STATE_DIM))
        out[:2, :2] = np.asarray(self.P_w, dtype=float)
        return out

    @property
    def sensor_cov(self) -> np.ndarray:
        return np.asarray(self.P_v, dtype=float)


def forklift_dynamics(x, u, w=None, params: ForkliftParams = ForkliftParams()) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)[..., 0]
    a = params.step_length
    out = np.stack(
        [
            x[..., 0] + a * np.cos(x[..., 2] + u),
            x[..., 1] + a * np.sin(x[..., 2] + u),
            x[..., 2] + (a / params.L) * np.sin(u),
        ],
        axis=-1,
    )
    if w is not None:
        w = np.asarray(w, dtype=float)
        out[..., :2] += w[..., :2]
    return out


def forklift_sensor(x, v=None) -> np.ndarray:
    y = np.asarray(x, dtype=float)[..., 1:3].copy()
    return y if v is None else y + np.asarray(v, dtype=float)


def stanley_steer(heading_err, cte, params: ForkliftParams = ForkliftParams()):
    """Stanley law: heading error plus arctan of the gain-scaled cross-track error."""
    return np.asarray(heading_err) + np.arctan(params.k_g * np.asarray(cte) / (params.k_s + params.v0))


def stanley_control(x_hat, params: ForkliftParams = ForkliftParams()) -> np.ndarray:
    """Steer toward the lane ``x2 = lane_offset`` with zero heading."""
    x_hat = np.asarray(x_hat, dtype=float)
    u = stanley_steer(-x_hat[..., 2], params.lane_offset - x_hat[..., 1], params)
    return np.asarray(u)[..., None]


# ---------------------------------------------------------------------------
# analytic derivative enclosures


def _trig_derivative(kind: str, k: int, lo, hi):
    """Enclosure of the k-th derivative of sin/cos over [lo, hi]."""
    shift = k * np.pi / 2
    fn = isin if kind == "sin" else icos
    return fn((np.asarray(lo) + shift, np.asarray(hi) + shift))


def _dynamics_derivative(params: ForkliftParams):
    a = params.step_length
    b = a / params.L

    def derivative(lo, hi, order):
        th = (lo[2] + lo[3], hi[2] + hi[3])
        shape = (STATE_DIM,) + (4,) * order
        dlo, dhi = np.zeros(shape), np.zeros(shape)
        if order == 0:
            c = _trig_derivative("cos", 0, *th)
            s = _trig_derivative("sin", 0, *th)
            su = _trig_derivative("sin", 0, lo[3], hi[3])
            dlo[:] = [lo[0] + a * c[0], lo[1] + a * s[0], lo[2] + b * su[0]]
            dhi[:] = [hi[0] + a * c[1], hi[1] + a * s[1], hi[2] + b * su[1]]
            return dlo, dhi
        c = _trig_derivative("cos", order, *th)
        s = _trig_derivative("sin", order, *th)
        su = _trig_derivative("sin", order, lo[3], hi[3])
        for idx in product((2, 3), repeat=order):
            dlo[(0,) + idx], dhi[(0,) + idx] = a * c[0], a * c[1]
            dlo[(1,) + idx], dhi[(1,) + idx] = a * s[0], a * s[1]
        last = (3,) * order
        dlo[(2,) + last], dhi[(2,) + last] = b * su[0], b * su[1]
        if order == 1:
            for i in range(STATE_DIM):
                dlo[i, i] += 1.0
                dhi[i, i] += 1.0
        return dlo, dhi

    return derivative


def _atan_derivative(k: int, z):
    """Enclosure of d^k/dz^k arctan(z) over the interval z."""
    if k == 0:
        return np.arctan(z[0]), np.arctan(z[1])
    s = ipow(z, 2)
    r = irecip((1.0 + s[0], 1.0 + s[1]))
    if k == 1:
        return r
    if k == 2:
        return imul((-2.0 * z[1], -2.0 * z[0]), ipow(r, 2))
    if k == 3:
        return imul((6.0 * s[0] - 2.0, 6.0 * s[1] - 2.0), ipow(r, 3))
    raise UnsupportedOrderError(f"controller derivatives are implemented up to order 3, got {k}")


def _controller_derivative(params: ForkliftParams):
    c = params.k_g / (params.k_s + params.v0)

    def derivative(lo, hi, order):
        # z = c * (lane - x2) is decreasing in x2
        z = (c * (params.lane_offset - hi[1]), c * (params.lane_offset - lo[1]))
        shape = (1,) + (STATE_DIM,) * order
        dlo, dhi = np.zeros(shape), np.zeros(shape)
        d = _atan_derivative(order, z)
        if order == 0:
            return np.array([-hi[2] + d[0]]), np.array([-lo[2] + d[1]])
        scale = (-c) ** order
        pair = sorted((scale * d[0], scale * d[1]))
        dlo[(0,) + (1,) * order], dhi[(0,) + (1,) * order] = pair
        if order == 1:
            dlo[0, 2] = dhi[0, 2] = -1.0
        return dlo, dhi

    return derivative


def forklift_model(params: ForkliftParams = ForkliftParams()) -> SystemModel:
    f = SmoothMap(
        4, STATE_DIM,
        lambda xu: forklift_dynamics(xu[..., :3], xu[..., 3:], None, params),
        _dynamics_derivative(params), "forklift_dynamics",
    )
    h = affine_map([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], name="forklift_sensor")
    g = SmoothMap(STATE_DIM, 1, lambda x: stanley_control(x, params), _controller_derivative(params), "stanley")
    return SystemModel(f, h, g, params.process_cov, params.sensor_cov)


# ---------------------------------------------------------------------------
# closed-loop simulation


@dataclass(frozen=True)
class SimulationLog:
    """Closed-loop run: index k holds x_k, x_hat_k; residuals/alarms are for measurements 1..n."""

    states: np.ndarray
    estimates: np.ndarray
    controls: np.ndarray
    measurements: np.ndarray
    residuals: np.ndarray
    nis: np.ndarray
    alarms: np.ndarray
    attacks: np.ndarray
    redraws: np.ndarray = field(default=None)
    covariances: np.ndarray = field(default=None)

    @property
    def alarm_rate(self) -> float:
        return float(np.mean(self.alarms)) if self.alarms.size else 0.0


@dataclass(frozen=True)
class AttackTrace:
    attacks: np.ndarray
    alarms: np.ndarray
    trajectory: np.ndarray
    estimates: np.ndarray
    redraws: np.ndarray


def _gaussian(rng: np.random.Generator, cov: np.ndarray) -> np.ndarray:
    # eigen square root so singular covariances (zero-noise axes) are fine
    vals, vecs = np.linalg.eigh(cov)
    return vecs @ (np.sqrt(np.clip(vals, 0.0, None)) * rng.standard_normal(cov.shape[0]))


def simulate_closed_loop(
    model: SystemModel,
    x0,
    x_hat0,
    P0,
    steps: int,
    seed=0,
    attacks=None,
    detector: DetectorConfig | None = None,
    weights: UTWeights | None = None,
    stealth: bool = False,
    attack_bound: float = 1.0,
    max_redraws: int = MAX_REDRAWS,
) -> SimulationLog:
    """Plant, filter and controller in the loop with optional sensor injection.

    Timing: ``u_k = g(x_hat_k)``, ``x_{k+1} = f(x_k, u_k) + w_k`` and
    ``y_{k+1} = h(x_k) + v_k + a_{k+1}``. With ``stealth=True`` attacks are drawn
    uniformly from ``[-attack_bound, attack_bound]^n_y`` and redrawn whenever they
    would raise an alarm. ``seed`` may be an int or a sequence for ``default_rng``.
    """
    rng = np.random.default_rng(seed)
    n_x, n_y = model.n_x, model.n_y
    detector = detector or DetectorConfig(n_y)
    weights = weights or ut_weights(n_x)
    if attacks is not None:
        attacks = np.asarray(attacks, dtype=float).reshape(steps, n_y)
    x = np.asarray(x0, dtype=float)
    filt = FilterState(x_hat0, P0)
    singular_ok = detector.threshold == 0.0
    states, ests, covs = [x], [filt.mean], [filt.cov]
    us, ys, rs, ns, al, ats, rd = [], [], [], [], [], [], []
    for k in range(steps):
        u = model.g(filt.mean)
        w = _gaussian(rng, model.P_w)
        v = _gaussian(rng, model.P_v)
        clean = model.h(x) + v
        x_next = model.step(x, u) + w
        ut = unscented_transform(filt.mean, filt.cov, model.f, u, model.P_w, model.h, model.P_v, weights)
        base = clean - model.h(filt.mean)
        redraws = 0
        if stealth:
            a = rng.uniform(-attack_bound, attack_bound, n_y)
            while nis(base + a, ut.innov_cov, singular_ok) > detector.threshold:
                redraws += 1
                if redraws >= max_redraws:
                    a = np.zeros(n_y) if nis(base, ut.innov_cov, singular_ok) <= detector.threshold else -base
                    break
                a = rng.uniform(-attack_bound, attack_bound, n_y)
        elif attacks is not None:
            a = attacks[k]
        else:
            a = np.zeros(n_y)
        y = clean + a
        K = kalman_gain(ut.cross_cov, ut.innov_cov, singular_ok)
        mean = ut.pred_mean + K @ (y - ut.y_pred)
        cov = ut.pred_cov - K @ ut.innov_cov @ K.T
        r = y - model.h(filt.mean)
        q = nis(r, ut.innov_cov, singular_ok)
        filt = FilterState(mean, 0.5 * (cov + cov.T), K, ut.pred_mean, ut.pred_cov, ut.innov_cov, ut.cross_cov)
        x = x_next
        states.append(x)
        ests.append(filt.mean)
        covs.append(filt.cov)
        us.append(u)
        ys.append(y)
        rs.append(r)
        ns.append(q)
        al.append(q > detector.threshold)
        ats.append(a)
        rd.append(redraws)
    return SimulationLog(
        np.array(states), np.array(ests), np.array(us).reshape(steps, -1), np.array(ys).reshape(steps, n_y),
        np.array(rs).reshape(steps, n_y), np.array(ns), np.array(al, dtype=bool),
        np.array(ats).reshape(steps, n_y), np.array(rd, dtype=int), np.array(covs),
    )


def sample_stealth_attacks(
    count: int,
    horizon: int,
    seed: int,
    model: SystemModel | None = None,
    x_hat0=(0.0, 5.0, 0.0),
    P0=np.diag([0.03, 0.03, 0.001]),
    detector: DetectorConfig | None = None,
    attack_bound: float = 1.0,
    max_redraws: int = MAX_REDRAWS,
) -> list[AttackTrace]:
    """Monte-Carlo stealth traces; trace ``i`` uses the random stream ``(seed, i)``.

    The true initial state equals the initial estimate.
    """
    if count < 1:
        raise InvalidArgumentError("count must be at least 1")
    model = model or forklift_model()
    out = []
    for i in range(count):
        log = simulate_closed_loop(
            model, x_hat0, x_hat0, P0, horizon, seed=[seed, i], detector=detector,
            stealth=True, attack_bound=attack_bound, max_redraws=max_redraws,
        )
        out.append(AttackTrace(log.attacks, log.alarms, log.states, log.estimates, log.redraws))
    return out
