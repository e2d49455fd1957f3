"""Interval, zonotope and ellipsoid sets.

All values are immutable; operations return new objects. Interval arithmetic
helpers work on ``(lower, upper)`` array pairs and broadcast like numpy.
Floating-point rounding is not directed outward.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidArgumentError

FEAS_TOL = 1e-9
SYM_TOL = 1e-9


# ---------------------------------------------------------------------------
# interval arithmetic on (lo, hi) array pairs


def iadd(a, b):
    return a[0] + b[0], a[1] + b[1]


def isub(a, b):
    return a[0] - b[1], a[1] - b[0]


def imul(a, b):
    p1, p2, p3, p4 = a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]
    return (
        np.minimum(np.minimum(p1, p2), np.minimum(p3, p4)),
        np.maximum(np.maximum(p1, p2), np.maximum(p3, p4)),
    )


def iscale(s, a):
    """Point value(s) ``s`` times interval ``a``."""
    lo, hi = s * a[0], s * a[1]
    return np.minimum(lo, hi), np.maximum(lo, hi)


def ipow_naive(a, k: int):
    """``a`` multiplied by itself ``k`` times; ``[-1,1]**2 == [-1,1]``."""
    out = (np.ones_like(np.asarray(a[0], dtype=float)), np.ones_like(np.asarray(a[1], dtype=float)))
    for _ in range(k):
        out = imul(out, a)
    return out


def ipow(a, k: int):
    """Tight integer power (even powers are non-negative)."""
    lo, hi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    if k == 0:
        return np.ones_like(lo), np.ones_like(hi)
    pl, ph = lo**k, hi**k
    if k % 2:
        return pl, ph
    straddle = (lo <= 0.0) & (hi >= 0.0)
    return np.where(straddle, 0.0, np.minimum(pl, ph)), np.maximum(pl, ph)


def irecip(a):
    lo, hi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    if np.any((lo <= 0.0) & (hi >= 0.0)):
        raise ZeroDivisionError("interval contains zero")
    return 1.0 / hi, 1.0 / lo


def idiv(a, b):
    return imul(a, irecip(b))


def isin(a):
    """Exact range of sin over each interval."""
    lo, hi = np.broadcast_arrays(np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float))
    slo, shi = np.sin(lo), np.sin(hi)
    out_lo, out_hi = np.minimum(slo, shi), np.maximum(slo, shi)
    two_pi = 2.0 * np.pi
    k_max = np.ceil((lo - np.pi / 2) / two_pi)
    has_max = np.pi / 2 + two_pi * k_max <= hi
    k_min = np.ceil((lo + np.pi / 2) / two_pi)
    has_min = -np.pi / 2 + two_pi * k_min <= hi
    wide = hi - lo >= two_pi
    out_hi = np.where(has_max | wide, 1.0, out_hi)
    out_lo = np.where(has_min | wide, -1.0, out_lo)
    return out_lo, out_hi


def icos(a):
    return isin((np.asarray(a[0]) + np.pi / 2, np.asarray(a[1]) + np.pi / 2))


def ihull(a, b):
    return np.minimum(a[0], b[0]), np.maximum(a[1], b[1])


# ---------------------------------------------------------------------------
# set types


def _vec(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Interval:
    """Axis-aligned box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lower, "lower"), _vec(self.upper, "upper")
        if lo.shape != hi.shape:
            raise InvalidArgumentError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(~(lo <= hi)):
            raise InvalidArgumentError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_pair(cls, pair) -> Interval:
        return cls(pair[0], pair[1])

    @classmethod
    def point(cls, x) -> Interval:
        return cls(x, x)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def pair(self):
        return self.lower, self.upper

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def __add__(self, other: Interval) -> Interval:
        return Interval.from_pair(iadd(self.pair, other.pair))

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=-1)

    def issubset(self, other: Interval, tol: float = 0.0) -> bool:
        return bool(np.all(self.lower >= other.lower - tol) and np.all(self.upper <= other.upper + tol))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))


@dataclass(frozen=True)
class Zonotope:
    """The set ``{center + generators @ x | x in [-1, 1]^m}``."""

    center: np.ndarray
    generators: np.ndarray = field(default=None)

    def __post_init__(self):
        c = _vec(self.center, "center")
        g = np.zeros((c.shape[0], 0)) if self.generators is None else np.array(self.generators, dtype=float)
        if g.ndim == 1 and c.shape[0] == 1:
            g = g.reshape(1, -1)
        if g.ndim != 2 or g.shape[0] != c.shape[0]:
            raise InvalidArgumentError(f"generator matrix shape {g.shape} does not match dimension {c.shape[0]}")
        if not np.all(np.isfinite(g)) or not np.all(np.isfinite(c)):
            raise InvalidArgumentError("zonotope data must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "generators", g)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def num_generators(self) -> int:
        return self.generators.shape[1]

    def box(self) -> Interval:
        return to_interval(self)

    def contains(self, points, tol: float = FEAS_TOL) -> np.ndarray | bool:
        """Membership of one point (returns bool) or a batch (returns array)."""
        p = np.asarray(points, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        if p.shape[1] != self.dim:
            raise InvalidArgumentError(f"points have dimension {p.shape[1]}, set has {self.dim}")
        out = _contains_origin_shifted(self.generators, p - self.center, tol)
        return bool(out[0]) if single else out

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        x = rng.uniform(-1.0, 1.0, size=(count, self.num_generators))
        return self.center + x @ self.generators.T

    def drop_zero_generators(self) -> Zonotope:
        keep = np.any(self.generators != 0.0, axis=0)
        return Zonotope(self.center, self.generators[:, keep])


@dataclass(frozen=True)
class Ellipsoid:
    """The set ``{x | (x - center)^T shape (x - center) <= 1}``; ``shape`` is SPD."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = _vec(self.center, "center")
        q = np.array(self.shape, dtype=float)
        n = c.shape[0]
        if q.shape != (n, n):
            raise InvalidArgumentError(f"shape matrix must be {n}x{n}, got {q.shape}")
        if np.max(np.abs(q - q.T), initial=0.0) > SYM_TOL:
            raise InvalidArgumentError("shape matrix is not symmetric")
        q = 0.5 * (q + q.T)
        if np.min(np.linalg.eigvalsh(q)) <= 0.0:
            raise InvalidArgumentError("shape matrix is not positive definite")
        q.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", q)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, points, tol: float = FEAS_TOL) -> np.ndarray:
        d = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        return np.einsum("ij,jk,ik->i", d, self.shape, d) <= 1.0 + tol

    def boundary_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        # x = c + L^{-T} u with Q = L L^T gives (x-c)^T Q (x-c) = 1
        chol = np.linalg.cholesky(self.shape)
        return self.center + np.linalg.solve(chol.T, u.T).T

    def interior_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        b = self.boundary_points(rng, count) - self.center
        r = rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / self.dim)
        return self.center + r * b


# ---------------------------------------------------------------------------
# operations


def minkowski_sum(a: Zonotope, b: Zonotope) -> Zonotope:
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return Zonotope(a.center + b.center, np.hstack([a.generators, b.generators]))


def linear_map(L, b, z: Zonotope) -> Zonotope:
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != z.dim:
        raise InvalidArgumentError(f"map has {L.shape[1]} columns, zonotope dimension is {z.dim}")
    b = np.zeros(L.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
    if b.shape[0] != L.shape[0]:
        raise InvalidArgumentError(f"offset length {b.shape[0]} does not match map rows {L.shape[0]}")
    return Zonotope(L @ z.center + b, L @ z.generators)


def project(z: Zonotope, dims) -> Zonotope:
    dims = list(dims)
    if any(d < 0 or d >= z.dim for d in dims):
        raise InvalidArgumentError(f"projection indices {dims} out of range for dimension {z.dim}")
    return Zonotope(z.center[dims], z.generators[dims, :])


def to_interval(z: Zonotope) -> Interval:
    r = np.abs(z.generators).sum(axis=1)
    return Interval(z.center - r, z.center + r)


def interval_to_zonotope(box: Interval) -> Zonotope:
    rad = box.radius
    keep = rad > 0.0
    return Zonotope(box.midpoint, np.diag(rad)[:, keep])


def axial_mask(G: np.ndarray) -> np.ndarray:
    """Columns with at most one nonzero entry."""
    return np.count_nonzero(G, axis=0) <= 1


def reduce_order(z: Zonotope, target_generators: int) -> Zonotope:
    """Girard's box reduction to at most ``target_generators`` generators.

    Generators are ranked by ``||g||_1 - ||g||_inf``; the lowest-ranked ones
    (closest to axis-aligned) are replaced by their interval hull, which
    contributes at most ``n`` axial generators.
    """
    n = z.dim
    if target_generators < n:
        raise InvalidArgumentError(f"target {target_generators} is below the dimension {n}")
    if z.num_generators <= target_generators:
        return z
    G = z.generators
    score = np.abs(G).sum(axis=0) - np.abs(G).max(axis=0)
    order = np.argsort(score, kind="stable")
    n_keep = target_generators - n
    boxed = order[: G.shape[1] - n_keep]
    kept = np.sort(order[G.shape[1] - n_keep:])
    rad = np.abs(G[:, boxed]).sum(axis=1)
    box = np.diag(rad)[:, rad > 0.0]
    return Zonotope(z.center, np.hstack([G[:, kept], box]))


def _facet_normals(G: np.ndarray) -> np.ndarray | None:
    """Unit normals of all (n-1)-generator subsets for n in {1, 2, 3}; None if unsupported."""
    n = G.shape[0]
    if n == 1:
        return np.ones((1, 1))
    cols = G[:, np.any(G != 0.0, axis=0)]
    if n == 2:
        d = np.stack([-cols[1], cols[0]], axis=1)
    elif n == 3:
        pairs = list(combinations(range(cols.shape[1]), 2))
        if not pairs:
            return None
        i, j = np.array(pairs).T
        d = np.cross(cols[:, i].T, cols[:, j].T)
    else:
        return None
    norms = np.linalg.norm(d, axis=1)
    scale = np.max(norms, initial=0.0)
    keep = norms > 1e-12 * max(scale, 1e-300)
    if not np.any(keep):
        return None
    return d[keep] / norms[keep, None]


def _contains_origin_shifted(G: np.ndarray, p: np.ndarray, tol: float) -> np.ndarray:
    """Whether each row of ``p`` lies in ``<0, G>``."""
    n, m = G.shape
    if m == 0:
        return np.all(np.abs(p) <= tol, axis=1)
    if n <= 3 and np.linalg.matrix_rank(G) == n:
        normals = _facet_normals(G)
        if normals is not None:
            support = np.abs(normals @ G).sum(axis=1)
            return np.all(np.abs(p @ normals.T) <= support + tol, axis=1)
    return np.array([_lp_contains(G, row, tol) for row in p], dtype=bool)


def _lp_contains(G: np.ndarray, p: np.ndarray, tol: float) -> bool:
    # minimise s subject to G a = p, -s <= a_i <= s; member iff s* <= 1
    n, m = G.shape
    cost = np.zeros(m + 1)
    cost[-1] = 1.0
    a_eq = np.hstack([G, np.zeros((n, 1))])
    eye = np.eye(m)
    a_ub = np.vstack([np.hstack([eye, -np.ones((m, 1))]), np.hstack([-eye, -np.ones((m, 1))])])
    res = linprog(
        cost,
        A_ub=a_ub,
        b_ub=np.zeros(2 * m),
        A_eq=a_eq,
        b_eq=p,
        bounds=[(None, None)] * m + [(0, None)],
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    return bool(res.status == 0 and res.x[-1] <= 1.0 + tol)


def intersects(a: Zonotope, b: Zonotope, tol: float = FEAS_TOL) -> bool:
    """Exact intersection decision; touching boundaries count as intersecting."""
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ba, bb = to_interval(a), to_interval(b)
    if np.any(ba.lower > bb.upper + tol) or np.any(bb.lower > ba.upper + tol):
        return False
    G = np.hstack([a.generators, b.generators])
    return bool(_contains_origin_shifted(G, (b.center - a.center)[None, :], tol)[0])


def ellipsoid_bounding_boxes(e: Ellipsoid) -> tuple[Zonotope, Zonotope]:
    """Principal-axis box and coordinate-axis box, both enclosing ``e``."""
    lam, vecs = np.linalg.eigh(e.shape)
    if np.min(lam) <= 0.0:
        raise InvalidArgumentError("shape matrix is not positive definite")
    h1 = vecs * (1.0 / np.sqrt(lam))
    h2 = np.diag(np.sqrt(np.diag(np.linalg.inv(e.shape))))
    return Zonotope(e.center, h1), Zonotope(e.center, h2)


def ellipsoid_to_zonotope(e: Ellipsoid, mix: float = 1.0) -> Zonotope:
    """``mix * H1 (+) (1 - mix) * H2`` around the centre; contains ``e`` for any mix in [0, 1].

    The principal-axis box never has a larger volume than the coordinate box,
    so the default keeps only its generators.
    """
    if not 0.0 <= mix <= 1.0:
        raise InvalidArgumentError(f"mix must lie in [0, 1], got {mix}")
    h1, h2 = ellipsoid_bounding_boxes(e)
    parts = []
    if mix > 0.0:
        parts.append(mix * h1.generators)
    if mix < 1.0:
        parts.append((1.0 - mix) * h2.generators)
    return Zonotope(e.center, np.hstack(parts))
