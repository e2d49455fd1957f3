"""Taylor expansion of smooth vector maps with interval Lagrange remainders."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement, permutations, product
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOrderError
from .sets import Interval, iadd, imul, ipow
from .taylor import Polynomial, TaylorModel, multi_index_factorial

FD_STEP = 1e-4
FD_MAX_ORDER = 3
FD_INFLATION = 1.05

# derivative_evaluator(lo, hi, order) -> (lo_tensor, hi_tensor), each of shape
# (codomain,) + (arity,) * order, enclosing the order-th derivative over the box.
DerivativeFn = Callable[[np.ndarray, np.ndarray, int], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SmoothMap:
    """A smooth map R^arity -> R^codomain.

    ``evaluator`` accepts batched inputs of shape (..., arity). When no
    ``derivative_evaluator`` is supplied, central finite differences are used.
    """

    arity: int
    codomain: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    derivative_evaluator: DerivativeFn | None = None
    name: str = "map"
    fd_inflation: float = FD_INFLATION

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    @property
    def has_exact_derivatives(self) -> bool:
        return self.derivative_evaluator is not None

    def derivative_bounds(self, lo, hi, order: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.derivative_evaluator is not None:
            dlo, dhi = self.derivative_evaluator(lo, hi, order)
            return np.asarray(dlo, dtype=float), np.asarray(dhi, dtype=float)
        return _fd_bounds(self, lo, hi, order)

    def derivative_at(self, x, order: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dlo, dhi = self.derivative_bounds(x, x, order)
        return 0.5 * (dlo + dhi)


def derivatives_by_divided_differences(fmap: SmoothMap, center, order: int) -> np.ndarray:
    """Central-difference estimate of the order-th derivative tensor at ``center``."""
    if order > FD_MAX_ORDER:
        raise UnsupportedOrderError(
            f"finite differences support order <= {FD_MAX_ORDER}; {fmap.name} needs exact derivatives for order {order}"
        )
    c = np.asarray(center, dtype=float)
    d = fmap.arity
    out = np.zeros((fmap.codomain,) + (d,) * order)
    if order == 0:
        out[...] = fmap(c)
        return out
    signs = np.array(list(product((1.0, -1.0), repeat=order)))
    weights = np.prod(signs, axis=1)
    for idx in combinations_with_replacement(range(d), order):
        steps = np.zeros((signs.shape[0], d))
        for col, var in enumerate(idx):
            steps[:, var] += signs[:, col] * FD_STEP
        vals = fmap(c + steps)
        est = weights @ vals / (2.0 * FD_STEP) ** order
        for perm in set(permutations(idx)):
            out[(slice(None),) + perm] = est
    return out


def _fd_bounds(fmap: SmoothMap, lo: np.ndarray, hi: np.ndarray, order: int):
    """Hull of difference estimates over the box corners and centre, widened by the inflation factor."""
    if np.array_equal(lo, hi):
        est = derivatives_by_divided_differences(fmap, lo, order)
        return est, est.copy()
    corners = [np.where(np.array(bits, dtype=bool), hi, lo) for bits in product((0, 1), repeat=lo.shape[0])]
    corners.append(0.5 * (lo + hi))
    ests = np.stack([derivatives_by_divided_differences(fmap, p, order) for p in corners])
    tlo, thi = ests.min(axis=0), ests.max(axis=0)
    mid, rad = 0.5 * (tlo + thi), 0.5 * (thi - tlo)
    return mid - fmap.fd_inflation * rad, mid + fmap.fd_inflation * rad


def multi_indices(num_vars: int, degree: int):
    """Yield (exponent tuple, representative sorted index tuple) for each |alpha| = degree."""
    for idx in combinations_with_replacement(range(num_vars), degree):
        alpha = [0] * num_vars
        for v in idx:
            alpha[v] += 1
        yield tuple(alpha), idx


def taylor_expand(fmap: SmoothMap, center, domain: Interval, order: int) -> TaylorModel:
    """Order-k Taylor model of ``fmap`` about ``center`` valid over ``domain``."""
    c = np.asarray(center, dtype=float).reshape(-1)
    if c.shape[0] != fmap.arity or domain.dim != fmap.arity:
        raise InvalidArgumentError(
            f"{fmap.name}: expected arity {fmap.arity}, got center {c.shape[0]} and domain {domain.dim}"
        )
    if not np.all(domain.contains(c)):
        raise InvalidArgumentError(f"{fmap.name}: expansion center lies outside the domain")
    exps, coefs = [], []
    for k in range(order + 1):
        tensor = fmap.derivative_at(c, k)
        for alpha, idx in multi_indices(fmap.arity, k):
            exps.append(alpha)
            coefs.append(tensor[(slice(None),) + idx] / multi_index_factorial(alpha))
    poly = Polynomial(np.array(exps, dtype=np.int64), np.array(coefs), order, c)

    dlo, dhi = fmap.derivative_bounds(domain.lower, domain.upper, order + 1)
    dev = (domain.lower - c, domain.upper - c)
    rem = (np.zeros(fmap.codomain), np.zeros(fmap.codomain))
    for alpha, idx in multi_indices(fmap.arity, order + 1):
        mono = (np.ones(1), np.ones(1))
        for j, e in enumerate(alpha):
            if e:
                mono = imul(mono, ipow((dev[0][j : j + 1], dev[1][j : j + 1]), e))
        fact = multi_index_factorial(alpha)
        term = imul((dlo[(slice(None),) + idx] / fact, dhi[(slice(None),) + idx] / fact), mono)
        rem = iadd(rem, term)
    if not fmap.has_exact_derivatives:
        rem = (np.minimum(rem[0], fmap.fd_inflation * rem[0]), np.maximum(rem[1], fmap.fd_inflation * rem[1]))
    return TaylorModel(poly, Interval.from_pair(rem), domain)


def affine_map(A, b=None, name: str = "affine") -> SmoothMap:
    """``x -> A x + b`` with exact derivatives."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    m, n = A.shape

    def evaluate(x):
        return x @ A.T + b

    def derivative(lo, hi, order):
        if order == 0:
            mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
            centre, spread = A @ mid + b, np.abs(A) @ rad
            return centre - spread, centre + spread
        if order == 1:
            return A.copy(), A.copy()
        z = np.zeros((m,) + (n,) * order)
        return z, z.copy()

    return SmoothMap(n, m, evaluate, derivative, name)
