"""Taylor models: vector polynomials over a box plus an interval remainder.

A polynomial is stored densely as an exponent matrix (terms x variables) and a
coefficient matrix (terms x codomain). Monomials are taken in the shifted
variables ``x - origin``; ``origin`` defaults to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import InvalidArgumentError, SingularDivisionError
from .sets import (
    Ellipsoid,
    Interval,
    Zonotope,
    axial_mask,
    ellipsoid_to_zonotope,
    iadd,
    imul,
    ipow,
    irecip,
    iscale,
)

DROP_TOL = 1e-14


@dataclass(frozen=True)
class Polynomial:
    exponents: np.ndarray
    coeffs: np.ndarray
    max_order: int
    origin: np.ndarray = field(default=None)

    def __post_init__(self):
        exps = np.array(self.exponents, dtype=np.int64)
        coefs = np.array(self.coeffs, dtype=float)
        if exps.ndim != 2 or coefs.ndim != 2 or exps.shape[0] != coefs.shape[0]:
            raise InvalidArgumentError(f"bad term arrays: exponents {exps.shape}, coeffs {coefs.shape}")
        if np.any(exps < 0):
            raise InvalidArgumentError("exponents must be non-negative")
        if exps.shape[0] and exps.sum(axis=1).max() > self.max_order:
            raise InvalidArgumentError(f"a term exceeds the maximum order {self.max_order}")
        origin = np.zeros(exps.shape[1]) if self.origin is None else np.array(self.origin, dtype=float)
        if origin.shape != (exps.shape[1],):
            raise InvalidArgumentError(f"origin must have length {exps.shape[1]}")
        exps, coefs = _combine(exps, coefs)
        for arr in (exps, coefs, origin):
            arr.setflags(write=False)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coeffs", coefs)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def constant(cls, value, num_vars: int, max_order: int = 1, origin=None) -> Polynomial:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.zeros((1, num_vars), dtype=np.int64), value[None, :], max_order, origin)

    @classmethod
    def from_terms(cls, terms, num_vars: int, max_order: int, origin=None) -> Polynomial:
        """Build from ``[(coefficient_vector, exponent_tuple), ...]``."""
        exps = np.array([t[1] for t in terms], dtype=np.int64).reshape(len(terms), num_vars)
        coefs = np.array([np.atleast_1d(t[0]) for t in terms], dtype=float)
        return cls(exps, coefs, max_order, origin)

    @property
    def num_vars(self) -> int:
        return self.exponents.shape[1]

    @property
    def codim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    @property
    def terms(self) -> list[tuple[np.ndarray, tuple[int, ...]]]:
        return [(c, tuple(int(v) for v in e)) for c, e in zip(self.coeffs, self.exponents)]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        mono = np.prod((x[..., None, :] - self.origin) ** self.exponents, axis=-1)
        return mono @ self.coeffs

    def select(self, mask) -> Polynomial:
        return Polynomial(self.exponents[mask], self.coeffs[mask], self.max_order, self.origin)

    def constant_term(self) -> np.ndarray:
        rows = self.degrees == 0
        return self.coeffs[rows].sum(axis=0) if np.any(rows) else np.zeros(self.codim)


def _combine(exps: np.ndarray, coefs: np.ndarray):
    if exps.shape[0] == 0:
        return exps.reshape(0, exps.shape[1]), coefs.reshape(0, coefs.shape[1])
    rows = np.ascontiguousarray(exps)
    keys = rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).reshape(-1)
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    uniq = rows[first]
    out = np.zeros((uniq.shape[0], coefs.shape[1]))
    np.add.at(out, inv.reshape(-1), coefs)
    keep = np.any(out != 0.0, axis=1)
    return uniq[keep], out[keep]


def int_enclose(p: Polynomial, domain: Interval) -> Interval:
    """Naive term-wise interval evaluation of ``p`` over ``domain``."""
    if domain.dim != p.num_vars:
        raise InvalidArgumentError(f"domain dimension {domain.dim} != polynomial variables {p.num_vars}")
    return Interval.from_pair(_enclose_pair(p, domain))


def _power_table(lo: float, hi: float, kmax: int):
    """Naive interval powers ``[lo, hi]**k`` for ``k = 0..kmax`` (scalar fast path)."""
    tlo, thi = [1.0], [1.0]
    a, b = 1.0, 1.0
    for _ in range(kmax):
        p = (a * lo, a * hi, b * lo, b * hi)
        a, b = min(p), max(p)
        tlo.append(a)
        thi.append(b)
    return np.array(tlo), np.array(thi)


def _enclose_pair(p: Polynomial, domain: Interval):
    if p.exponents.shape[0] == 0:
        z = np.zeros(p.codim)
        return z, z.copy()
    lo = domain.lower - p.origin
    hi = domain.upper - p.origin
    mlo = np.ones(p.exponents.shape[0])
    mhi = np.ones(p.exponents.shape[0])
    for j in range(p.num_vars):
        e = p.exponents[:, j]
        if not np.any(e):
            continue
        tlo, thi = _power_table(float(lo[j]), float(hi[j]), int(e.max()))
        tlo, thi = tlo[e], thi[e]
        mlo, mhi = imul((mlo, mhi), (tlo, thi))
    clo, chi = iscale(p.coeffs, (mlo[:, None], mhi[:, None]))
    return clo.sum(axis=0), chi.sum(axis=0)


@dataclass(frozen=True)
class TaylorModel:
    """``{poly(x) | x in domain} (+) remainder``."""

    poly: Polynomial
    remainder: Interval
    domain: Interval

    def __post_init__(self):
        if self.remainder.dim != self.poly.codim:
            raise InvalidArgumentError(
                f"remainder dimension {self.remainder.dim} != codomain {self.poly.codim}"
            )
        if self.domain.dim != self.poly.num_vars:
            raise InvalidArgumentError(
                f"domain dimension {self.domain.dim} != polynomial variables {self.poly.num_vars}"
            )

    @classmethod
    def constant(cls, value, domain: Interval, max_order: int = 1, origin=None) -> TaylorModel:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        poly = Polynomial.constant(value, domain.dim, max_order, origin)
        return cls(poly, Interval.point(np.zeros(value.shape[0])), domain)

    @classmethod
    def identity(cls, domain: Interval, max_order: int = 1, origin=None) -> TaylorModel:
        """The variables themselves: ``x -> x`` (expressed around ``origin``)."""
        d = domain.dim
        origin = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
        exps = np.vstack([np.zeros((1, d), dtype=np.int64), np.eye(d, dtype=np.int64)])
        coefs = np.vstack([origin[None, :], np.eye(d)])
        return cls(Polynomial(exps, coefs, max_order, origin), Interval.point(np.zeros(d)), domain)

    @property
    def dim(self) -> int:
        return self.poly.codim

    @property
    def num_vars(self) -> int:
        return self.poly.num_vars

    @property
    def order(self) -> int:
        return self.poly.max_order

    def range(self) -> Interval:
        return int_enclose(self.poly, self.domain) + self.remainder

    def component(self, i) -> TaylorModel:
        idx = np.atleast_1d(i)
        return TaylorModel(
            Polynomial(self.poly.exponents, self.poly.coeffs[:, idx], self.poly.max_order, self.poly.origin),
            Interval(self.remainder.lower[idx], self.remainder.upper[idx]),
            self.domain,
        )

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        x = self.domain.sample(rng, count)
        return self.poly(x) + self.remainder.sample(rng, count)


# ---------------------------------------------------------------------------
# arithmetic


def _check_same_domain(a: TaylorModel, b: TaylorModel):
    if not (
        np.array_equal(a.domain.lower, b.domain.lower)
        and np.array_equal(a.domain.upper, b.domain.upper)
        and np.array_equal(a.poly.origin, b.poly.origin)
    ):
        raise InvalidArgumentError("Taylor models live on different domains")


def _finish(exps, coefs, max_order, origin, domain: Interval, rem) -> TaylorModel:
    """Canonicalise: combine like terms and fold negligible coefficients into the remainder."""
    poly = Polynomial(exps, coefs, max_order, origin)
    tiny = np.all(np.abs(poly.coeffs) < DROP_TOL, axis=1)
    if np.any(tiny):
        rem = iadd(rem, _enclose_pair(poly.select(tiny), domain))
        poly = poly.select(~tiny)
    return TaylorModel(poly, Interval.from_pair(rem), domain)


def tm_add(a: TaylorModel, b: TaylorModel) -> TaylorModel:
    _check_same_domain(a, b)
    if a.dim != b.dim:
        raise InvalidArgumentError(f"codomain mismatch: {a.dim} vs {b.dim}")
    exps = np.vstack([a.poly.exponents, b.poly.exponents])
    coefs = np.vstack([a.poly.coeffs, b.poly.coeffs])
    rem = iadd(a.remainder.pair, b.remainder.pair)
    return _finish(exps, coefs, max(a.order, b.order), a.poly.origin, a.domain, rem)


def tm_neg(a: TaylorModel) -> TaylorModel:
    p = a.poly
    return TaylorModel(
        Polynomial(p.exponents, -p.coeffs, p.max_order, p.origin),
        Interval(-a.remainder.upper, -a.remainder.lower),
        a.domain,
    )


def tm_sub(a: TaylorModel, b: TaylorModel) -> TaylorModel:
    return tm_add(a, tm_neg(b))


def tm_add_constant(a: TaylorModel, value) -> TaylorModel:
    const = TaylorModel.constant(np.broadcast_to(value, (a.dim,)), a.domain, a.order, a.poly.origin)
    return tm_add(a, const)


def tm_linear_map(L, a: TaylorModel, b=None) -> TaylorModel:
    """``L @ tm + b`` for a point matrix ``L``."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != a.dim:
        raise InvalidArgumentError(f"map has {L.shape[1]} columns, model dimension is {a.dim}")
    coefs = a.poly.coeffs @ L.T
    exps = a.poly.exponents
    if b is not None:
        exps = np.vstack([exps, np.zeros((1, a.num_vars), dtype=np.int64)])
        coefs = np.vstack([coefs, np.asarray(b, dtype=float).reshape(1, -1)])
    mid, rad = a.remainder.midpoint, a.remainder.radius
    rem = (L @ mid - np.abs(L) @ rad, L @ mid + np.abs(L) @ rad)
    return _finish(exps, coefs, a.order, a.poly.origin, a.domain, rem)


def _broadcast_codim(a: TaylorModel, b: TaylorModel) -> int:
    if a.dim == b.dim or b.dim == 1:
        return a.dim
    if a.dim == 1:
        return b.dim
    raise InvalidArgumentError(f"codomain mismatch: {a.dim} vs {b.dim}")


def tm_mul(a: TaylorModel, b: TaylorModel, truncate_to: int) -> TaylorModel:
    """Product with truncation; remainder follows the sum/product rule exactly.

    remainder = I_a*Int(p_b) + I_b*Int(p_a) + I_a*I_b + hull(truncated terms)
    """
    _check_same_domain(a, b)
    q = _broadcast_codim(a, b)
    pa, pb = a.poly, b.poly
    exps = (pa.exponents[:, None, :] + pb.exponents[None, :, :]).reshape(-1, pa.num_vars)
    coefs = (pa.coeffs[:, None, :] * pb.coeffs[None, :, :]).reshape(exps.shape[0], q)
    keep = exps.sum(axis=1) <= truncate_to
    rem = iadd(
        iadd(
            imul(a.remainder.pair, _enclose_pair(pb, b.domain)),
            imul(b.remainder.pair, _enclose_pair(pa, a.domain)),
        ),
        imul(a.remainder.pair, b.remainder.pair),
    )
    if not np.all(keep):
        dropped = Polynomial(exps[~keep], coefs[~keep], int(exps.sum(axis=1).max()), pa.origin)
        rem = iadd(rem, _enclose_pair(dropped, a.domain))
    return _finish(exps[keep], coefs[keep], truncate_to, pa.origin, a.domain, rem)


def tm_reciprocal(b: TaylorModel, truncate_to: int) -> TaylorModel:
    """``1/b`` by the order-k expansion of ``1/x`` about the midpoint of b's range."""
    if b.dim != 1:
        raise InvalidArgumentError("reciprocal needs a scalar Taylor model")
    rng = b.range()
    lo, hi = float(rng.lower[0]), float(rng.upper[0])
    if lo <= 0.0 <= hi:
        raise SingularDivisionError(f"divisor range [{lo}, {hi}] contains zero")
    m = 0.5 * (lo + hi)
    t = tm_add_constant(b, -m)
    one = TaylorModel.constant([1.0], b.domain, truncate_to, b.poly.origin)
    total = TaylorModel.constant([1.0 / m], b.domain, truncate_to, b.poly.origin)
    power = one
    for i in range(1, truncate_to + 1):
        power = tm_mul(power, t, truncate_to)
        total = tm_add(total, tm_scale(power, (-1.0) ** i / m ** (i + 1)))
    # Lagrange term (-1)^(k+1) (x - m)^(k+1) / xi^(k+2), xi in the range
    k1 = truncate_to + 1
    dev = ipow((np.array([lo - m]), np.array([hi - m])), k1)
    inv = ipow(irecip((np.array([lo]), np.array([hi]))), k1 + 1)
    lag = iscale((-1.0) ** k1, imul(dev, inv))
    return TaylorModel(total.poly, Interval.from_pair(iadd(total.remainder.pair, lag)), b.domain)


def tm_div(a: TaylorModel, b: TaylorModel, truncate_to: int) -> TaylorModel:
    _check_same_domain(a, b)
    return tm_mul(a, tm_reciprocal(b, truncate_to), truncate_to)


def tm_scale(a: TaylorModel, s) -> TaylorModel:
    """Multiply by a scalar or a per-component vector of point values."""
    s = np.asarray(s, dtype=float)
    coefs = a.poly.coeffs * s
    rem = iscale(s, a.remainder.pair)
    rem = (np.broadcast_to(rem[0], coefs.shape[1:]), np.broadcast_to(rem[1], coefs.shape[1:]))
    return _finish(a.poly.exponents, coefs, a.order, a.poly.origin, a.domain, rem)


def tm_stack(parts: list[TaylorModel]) -> TaylorModel:
    """Concatenate scalar/vector models on one domain into a single vector model."""
    first = parts[0]
    exps, coefs, lo, hi, offset = [], [], [], [], 0
    total = sum(p.dim for p in parts)
    for p in parts:
        _check_same_domain(first, p)
        c = np.zeros((p.poly.coeffs.shape[0], total))
        c[:, offset:offset + p.dim] = p.poly.coeffs
        exps.append(p.poly.exponents)
        coefs.append(c)
        lo.append(p.remainder.lower)
        hi.append(p.remainder.upper)
        offset += p.dim
    return _finish(
        np.vstack(exps), np.vstack(coefs), max(p.order for p in parts), first.poly.origin,
        first.domain, (np.concatenate(lo), np.concatenate(hi)),
    )


def tm_product_sum(a: TaylorModel, b: TaylorModel) -> TaylorModel:
    """Minkowski sum of models on independent domains; variables are concatenated."""
    if a.dim != b.dim:
        raise InvalidArgumentError(f"codomain mismatch: {a.dim} vs {b.dim}")
    da, db = a.num_vars, b.num_vars
    ea = np.hstack([a.poly.exponents, np.zeros((a.poly.exponents.shape[0], db), dtype=np.int64)])
    eb = np.hstack([np.zeros((b.poly.exponents.shape[0], da), dtype=np.int64), b.poly.exponents])
    domain = Interval(
        np.concatenate([a.domain.lower, b.domain.lower]), np.concatenate([a.domain.upper, b.domain.upper])
    )
    origin = np.concatenate([a.poly.origin, b.poly.origin])
    rem = iadd(a.remainder.pair, b.remainder.pair)
    return _finish(
        np.vstack([ea, eb]), np.vstack([a.poly.coeffs, b.poly.coeffs]), max(a.order, b.order),
        origin, domain, rem,
    )


def tm_compose(outer: TaylorModel, inner: TaylorModel, truncate_to: int, tol: float = 1e-9) -> TaylorModel:
    """Evaluate ``outer`` on the set described by ``inner`` using model arithmetic.

    ``inner``'s range must lie inside ``outer.domain`` for the outer remainder
    to stay valid.
    """
    if inner.dim != outer.num_vars:
        raise InvalidArgumentError(f"inner dimension {inner.dim} != outer variables {outer.num_vars}")
    rng = inner.range()
    slack = tol * (1.0 + np.abs(outer.domain.lower) + np.abs(outer.domain.upper))
    if np.any(rng.lower < outer.domain.lower - slack) or np.any(rng.upper > outer.domain.upper + slack):
        raise InvalidArgumentError("inner range leaves the outer expansion domain")
    shifted = [tm_add_constant(inner.component(j), -outer.poly.origin[j]) for j in range(inner.dim)]
    one = TaylorModel.constant([1.0], inner.domain, truncate_to, inner.poly.origin)
    cache: dict[tuple[int, ...], TaylorModel] = {(0,) * outer.num_vars: one}

    def monomial(alpha: tuple[int, ...]) -> TaylorModel:
        if alpha in cache:
            return cache[alpha]
        j = max(i for i, e in enumerate(alpha) if e > 0)
        prev = list(alpha)
        prev[j] -= 1
        out = tm_mul(monomial(tuple(prev)), shifted[j], truncate_to)
        cache[alpha] = out
        return out

    exps, coefs = [], []
    rem = outer.remainder.pair
    for coef, alpha in zip(outer.poly.coeffs, outer.poly.exponents):
        mono = monomial(tuple(int(v) for v in alpha))
        exps.append(mono.poly.exponents)
        coefs.append(mono.poly.coeffs[:, :1] * coef[None, :])
        rem = iadd(rem, iscale(coef, (mono.remainder.lower, mono.remainder.upper)))
    if not exps:
        return TaylorModel.constant(np.zeros(outer.dim), inner.domain, truncate_to, inner.poly.origin)
    return _finish(np.vstack(exps), np.vstack(coefs), truncate_to, inner.poly.origin, inner.domain, rem)


# ---------------------------------------------------------------------------
# conversions


def zonotope_to_tm(
    z: Zonotope, max_order: int = 1, max_nonaxial: int | None = None, axial_as_remainder: bool = True
) -> TaylorModel:
    """Exact order-1 model: non-axial generators become variables on [-1, 1], axial ones the remainder.

    With ``axial_as_remainder=False`` every generator becomes a variable and the
    remainder is zero, which keeps the dependency on axial generators visible to
    later arithmetic.
    """
    n = z.dim
    G = z.generators
    if axial_as_remainder:
        axial = axial_mask(G)
        limit = n if max_nonaxial is None else max_nonaxial
    else:
        axial = np.zeros(G.shape[1], dtype=bool)
        limit = G.shape[1] if max_nonaxial is None else max_nonaxial
    g1, g2 = G[:, ~axial], G[:, axial]
    if g1.shape[1] > limit:
        raise InvalidArgumentError(
            f"{g1.shape[1]} non-axial generators exceed the limit {limit}; reduce the order first"
        )
    d = max(n, g1.shape[1])
    exps = np.vstack([np.zeros((1, d), dtype=np.int64), np.eye(d, dtype=np.int64)[: g1.shape[1]]])
    coefs = np.vstack([z.center[None, :], g1.T])
    r = np.abs(g2).sum(axis=1)
    domain = Interval(-np.ones(d), np.ones(d))
    return TaylorModel(Polynomial(exps, coefs, max_order), Interval(-r, r), domain)


def tm_to_zonotope(tm: TaylorModel) -> Zonotope:
    """Linear terms become generators; the nonlinear part and remainder are boxed."""
    p = tm.poly
    deg = p.degrees
    shifted_lo = tm.domain.lower - p.origin
    shifted_hi = tm.domain.upper - p.origin
    mid = 0.5 * (shifted_lo + shifted_hi)
    rad = 0.5 * (shifted_hi - shifted_lo)
    center = p.coeffs[deg == 0].sum(axis=0) if np.any(deg == 0) else np.zeros(tm.dim)
    gens = np.zeros((tm.dim, tm.num_vars))
    for coef, e in zip(p.coeffs[deg == 1], p.exponents[deg == 1]):
        j = int(np.argmax(e))
        center = center + coef * mid[j]
        gens[:, j] += coef * rad[j]
    nonlin = _enclose_pair(p.select(deg >= 2), tm.domain)
    box = iadd(nonlin, tm.remainder.pair)
    center = center + 0.5 * (box[0] + box[1])
    box_rad = 0.5 * (box[1] - box[0])
    gens = gens[:, np.any(gens != 0.0, axis=0)]
    axial = np.diag(box_rad)[:, box_rad > 0.0]
    return Zonotope(center, np.hstack([gens, axial]))


def ellipsoid_to_tm(e: Ellipsoid, mix: float = 1.0) -> TaylorModel:
    return zonotope_to_tm(ellipsoid_to_zonotope(e, mix))


def multi_index_factorial(alpha) -> int:
    out = 1
    for a in alpha:
        out *= factorial(int(a))
    return out


def tm_cartesian(a: TaylorModel, b: TaylorModel) -> TaylorModel:
    """Joint model of two independent models: variables and outputs are both concatenated."""
    da, db = a.num_vars, b.num_vars
    ea = np.hstack([a.poly.exponents, np.zeros((a.poly.exponents.shape[0], db), dtype=np.int64)])
    eb = np.hstack([np.zeros((b.poly.exponents.shape[0], da), dtype=np.int64), b.poly.exponents])
    ca = np.hstack([a.poly.coeffs, np.zeros((a.poly.coeffs.shape[0], b.dim))])
    cb = np.hstack([np.zeros((b.poly.coeffs.shape[0], a.dim)), b.poly.coeffs])
    domain = Interval(
        np.concatenate([a.domain.lower, b.domain.lower]), np.concatenate([a.domain.upper, b.domain.upper])
    )
    origin = np.concatenate([a.poly.origin, b.poly.origin])
    rem = (
        np.concatenate([a.remainder.lower, b.remainder.lower]),
        np.concatenate([a.remainder.upper, b.remainder.upper]),
    )
    return _finish(np.vstack([ea, eb]), np.vstack([ca, cb]), max(a.order, b.order), origin, domain, rem)
