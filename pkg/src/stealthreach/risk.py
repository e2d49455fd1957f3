"""Risk sets, dilution, the risk field and the reachability-risk score of a flowpipe."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import InvalidArgumentError
from .sets import Zonotope, intersects, project

CORR_TOL = 1e-12


@dataclass(frozen=True)
class RiskSet:
    """A critical region in a state subspace together with its (probability-weighted) risk."""

    region: Zonotope
    risk: float
    event_id: str = "event"
    subspace: tuple[int, ...] = (0, 1)

    def __post_init__(self):
        sub = tuple(int(i) for i in self.subspace)
        if len(sub) != self.region.dim:
            raise InvalidArgumentError(
                f"{self.event_id}: region dimension {self.region.dim} != subspace length {len(sub)}"
            )
        if len(set(sub)) != len(sub) or min(sub, default=0) < 0:
            raise InvalidArgumentError(f"{self.event_id}: subspace indices must be distinct and non-negative")
        if not (np.isfinite(self.risk) and self.risk >= 0.0):
            raise InvalidArgumentError(f"{self.event_id}: risk must be a non-negative number")
        object.__setattr__(self, "subspace", sub)
        object.__setattr__(self, "risk", float(self.risk))

    @classmethod
    def from_box(cls, lower, upper, risk: float, event_id: str = "event", subspace=(0, 1)) -> RiskSet:
        lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
        return cls(Zonotope(0.5 * (lower + upper), np.diag(0.5 * (upper - lower))), risk, event_id, subspace)

    @property
    def n_s(self) -> int:
        return len(self.subspace)


def dilute(rs: RiskSet, factor: float, j: int) -> RiskSet:
    """Scale the region about its centre by ``factor**j`` and divide the risk by ``factor**(j*n_s)``."""
    if not factor > 1.0:
        raise InvalidArgumentError(f"dilution factor must exceed 1, got {factor}")
    if j < 0:
        raise InvalidArgumentError("dilution level must be non-negative")
    if j == 0:
        return rs
    scale = factor**j
    region = Zonotope(rs.region.center, rs.region.generators * scale)
    return RiskSet(region, rs.risk / factor ** (j * rs.n_s), rs.event_id, rs.subspace)


def validate_correlation(C, m: int) -> np.ndarray:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape != (m, m):
        raise InvalidArgumentError(f"correlation matrix must be {m}x{m}, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InvalidArgumentError("correlation matrix has non-finite entries")
    if np.max(np.abs(C - C.T), initial=0.0) > CORR_TOL:
        raise InvalidArgumentError("correlation matrix is not symmetric")
    if np.max(np.abs(np.diag(C) - 1.0), initial=0.0) > CORR_TOL:
        raise InvalidArgumentError("correlation matrix must have a unit diagonal")
    if np.any(np.abs(C) > 1.0 + CORR_TOL):
        raise InvalidArgumentError("correlation entries must lie in [-1, 1]")
    return C


@dataclass(frozen=True)
class RiskField:
    sequences: tuple[tuple[RiskSet, ...], ...]
    dilution_factor: float
    correlation: np.ndarray

    @property
    def num_events(self) -> int:
        return len(self.sequences)

    @property
    def levels(self) -> int:
        return len(self.sequences[0]) - 1 if self.sequences else 0


def build_field(risk_sets: Sequence[RiskSet], factor: float, levels: int, C=None) -> RiskField:
    """Each event gets its dilution sequence ``j = 0..levels``."""
    if levels < 0:
        raise InvalidArgumentError("levels must be non-negative")
    m = len(risk_sets)
    C = np.eye(m) if C is None else validate_correlation(C, m)
    seqs = tuple(tuple(dilute(rs, factor, j) for j in range(levels + 1)) for rs in risk_sets)
    return RiskField(seqs, float(factor), C)


@dataclass(frozen=True)
class RiskReport:
    zeta: np.ndarray
    total: float
    matched_level: np.ndarray
    beta: float

    @staticmethod
    def combine(zeta, C, beta: float) -> float:
        zeta = np.asarray(zeta, dtype=float)
        return float(beta * (zeta @ C @ zeta))


def _segments(flowpipe) -> list[Zonotope]:
    segs = getattr(flowpipe, "segments", flowpipe)
    return [getattr(s, "zonotope", s) for s in segs]


def rr_metric(flowpipe, field: RiskField, beta: float) -> RiskReport:
    """Score a flowpipe: per event the largest diluted risk whose region the flowpipe touches.

    Because risk decreases with the dilution level, this is the risk of the
    smallest intersecting level; the scan stops there. ``total = beta * z' C z``.
    """
    zonos = _segments(flowpipe)
    m = field.num_events
    zeta = np.zeros(m)
    level = np.full(m, -1, dtype=int)
    for i, seq in enumerate(field.sequences):
        sub = list(seq[0].subspace)
        for z in zonos:
            if max(sub, default=-1) >= z.dim:
                raise InvalidArgumentError(f"{seq[0].event_id}: subspace index out of range for dimension {z.dim}")
        projected = [project(z, sub) for z in zonos]
        boxes = [(p.center - np.abs(p.generators).sum(axis=1), p.center + np.abs(p.generators).sum(axis=1)) for p in projected]
        for j, rs in enumerate(seq):
            rlo = rs.region.center - np.abs(rs.region.generators).sum(axis=1)
            rhi = rs.region.center + np.abs(rs.region.generators).sum(axis=1)
            hit = False
            for p, (lo, hi) in zip(projected, boxes):
                if np.any(hi < rlo) or np.any(lo > rhi):
                    continue
                if intersects(p, rs.region):
                    hit = True
                    break
            if hit:
                zeta[i] = rs.risk
                level[i] = j
                break
    return RiskReport(zeta, RiskReport.combine(zeta, field.correlation, beta), level, float(beta))


def risk_time_series(flowpipes: Iterable, field: RiskField, beta: float) -> list[tuple[float, RiskReport]]:
    """``flowpipes`` yields ``(t, flowpipe)`` pairs in time order."""
    out = []
    last = -np.inf
    for t, fp in flowpipes:
        if t < last:
            raise InvalidArgumentError("flowpipes must be ordered in time")
        last = t
        out.append((float(t), rr_metric(fp, field, beta)))
    return out


def strict_peaks(values) -> np.ndarray:
    """Indices of interior local maxima; a flat top counts once and only if both sides drop."""
    peaks, _ = find_peaks(np.asarray(values, dtype=float))
    return peaks
