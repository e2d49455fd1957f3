"""End-to-end experiment drivers shared by the CLI, the scripts and the acceptance tests."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .estimator import SystemModel
from .reach import Flowpipe, ReachConfig, run_sra
from .risk import RiskField, RiskReport, RiskSet, build_field, rr_metric
from .scenario import AttackTrace, SimulationLog, sample_stealth_attacks, simulate_closed_loop

log = logging.getLogger(__name__)

FORKLIFT_X0 = (0.0, 5.0, 0.0)
FORKLIFT_P0 = ((0.03, 0.0, 0.0), (0.0, 0.03, 0.0), (0.0, 0.0, 0.001))


def forklift_risk_sets() -> list[RiskSet]:
    return [
        RiskSet.from_box([9.0, 4.0], [22.0, 6.5], 2000.0, "obstacle"),
        RiskSet.from_box([24.0, 3.0], [26.0, 5.0], 5000.0, "worker"),
    ]


def forklift_field(factor: float = 1.05, levels: int = 20) -> RiskField:
    return build_field(forklift_risk_sets(), factor, levels, np.eye(2))


@dataclass(frozen=True)
class ContainmentReport:
    trajectory_fraction: float
    per_step: np.ndarray
    traces: int
    alarms: int

    @property
    def point_fraction(self) -> float:
        return float(np.mean(self.per_step))


def containment(flowpipe: Flowpipe, traces: list[AttackTrace]) -> ContainmentReport:
    """Fraction of traces inside the flowpipe at every step, plus the per-step rates."""
    inside = np.array([flowpipe.contains_trajectory(t.trajectory) for t in traces])
    alarms = int(sum(int(np.sum(t.alarms)) for t in traces))
    return ContainmentReport(float(inside.all(axis=1).mean()), inside.mean(axis=0), len(traces), alarms)


def validate_flowpipe(model: SystemModel, x_hat0, P0, cfg: ReachConfig, count: int, seed: int, detector=None):
    flowpipe = run_sra(x_hat0, P0, model, cfg)
    traces = sample_stealth_attacks(count, cfg.horizon, seed, model, x_hat0, P0, detector)
    return flowpipe, containment(flowpipe, traces)


@dataclass(frozen=True)
class RiskSeries:
    times: np.ndarray
    attacked: list[RiskReport]
    attack_free: list[RiskReport]
    attack_free_threshold: float
    nominal: SimulationLog

    @property
    def attacked_totals(self) -> np.ndarray:
        return np.array([r.total for r in self.attacked])

    @property
    def attack_free_totals(self) -> np.ndarray:
        return np.array([r.total for r in self.attack_free])


def _score_window(args):
    x_hat, P, model, cfg, t0, field, beta = args
    return rr_metric(run_sra(x_hat, P, model, cfg, t0), field, beta)


def risk_series(
    model: SystemModel,
    x_hat0,
    P0,
    cfg: ReachConfig,
    field: RiskField,
    duration: float = 10.0,
    lookahead: float = 1.5,
    seed: int = 0,
    beta: float | None = None,
    jobs: int = 1,
) -> RiskSeries:
    """Risk over time along a simulated attack-free run.

    At each step t_k a flowpipe over ``[t_k, t_k + lookahead]`` is computed from
    the filter's estimate and covariance, once with the detector threshold and
    once with the threshold lowered to the run's average normalised residual.
    """
    steps = int(round(duration / cfg.dt))
    horizon = max(1, int(round(lookahead / cfg.dt)))
    nominal = simulate_closed_loop(model, x_hat0, x_hat0, P0, steps, seed=seed)
    free_thr = float(np.mean(nominal.nis))
    beta = cfg.noise_confidence if beta is None else beta
    attacked_cfg = replace(cfg, horizon=horizon)
    free_cfg = replace(cfg, horizon=horizon, detector_threshold=free_thr)
    times = np.arange(steps + 1) * cfg.dt
    jobs_args = []
    for c in (attacked_cfg, free_cfg):
        for k in range(steps + 1):
            jobs_args.append((nominal.estimates[k], nominal.covariances[k], model, c, times[k], field, beta))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_score_window, jobs_args, chunksize=8))
    else:
        reports = [_score_window(a) for a in jobs_args]
    log.info("risk series: %d windows, attack-free threshold %.4f", len(reports), free_thr)
    n = steps + 1
    return RiskSeries(times, reports[:n], reports[n:], free_thr, nominal)
