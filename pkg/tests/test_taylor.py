import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hull_contains
from stealthreach.errors import InvalidArgumentError, SingularDivisionError
from stealthreach.sets import Ellipsoid, Interval, Zonotope
from stealthreach.taylor import (
    Polynomial,
    TaylorModel,
    ellipsoid_to_tm,
    int_enclose,
    tm_add,
    tm_compose,
    tm_div,
    tm_mul,
    tm_to_zonotope,
    zonotope_to_tm,
)

UNIT = Interval([-1.0], [1.0])
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def scalar_tm(terms, domain, order=3, rem=(0.0, 0.0)):
    poly = Polynomial.from_terms(terms, domain.dim, order)
    return TaylorModel(poly, Interval([rem[0]], [rem[1]]), domain)


def random_scalar_tm(rng, d, order, rem_scale=0.1):
    terms = []
    for _ in range(rng.integers(1, 6)):
        e = np.zeros(d, dtype=int)
        for _ in range(rng.integers(0, order + 1)):
            e[rng.integers(d)] += 1
        terms.append((rng.normal(), tuple(e)))
    r = np.sort(rng.normal(size=2) * rem_scale)
    dom = Interval(-np.ones(d), np.ones(d))
    return scalar_tm(terms, dom, order, (r[0], r[1]))


def pair_mul(a, b):
    p = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    return min(p), max(p)


def pair_add(a, b):
    return a[0] + b[0], a[1] + b[1]


def enclose(p, dom):
    e = int_enclose(p, dom)
    return float(e.lower[0]), float(e.upper[0])


# polynomial enclosure


def test_enclosure_examples():
    x2 = Polynomial.from_terms([(1.0, (2,))], 1, 2)
    assert enclose(x2, UNIT) == (-1.0, 1.0)
    five = Polynomial.constant([5.0], 2, 1)
    assert enclose(five, Interval([-3.0, 0.0], [2.0, 1.0])) == (5.0, 5.0)
    xy = Polynomial.from_terms([(1.0, (1, 0)), (1.0, (0, 1))], 2, 1)
    assert enclose(xy, Interval([0.0, 0.0], [1.0, 1.0])) == (0.0, 2.0)


def test_like_terms_combine():
    p = Polynomial.from_terms([(1.0, (1,)), (2.0, (1,)), (-3.0, (1,))], 1, 1)
    assert p.exponents.shape[0] == 0
    with pytest.raises(InvalidArgumentError):
        Polynomial.from_terms([(1.0, (3,))], 1, 2)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_enclosure_contains_samples_and_is_isotonic(seed):
    rng = np.random.default_rng(seed)
    a = random_scalar_tm(rng, 2, 3)
    outer = Interval([-1.0, -1.0], [1.0, 1.0])
    inner_lo = rng.uniform(-1, 0, 2)
    inner = Interval(inner_lo, inner_lo + rng.uniform(0, 1, 2))
    big, small = int_enclose(a.poly, outer), int_enclose(a.poly, inner)
    assert small.issubset(big)
    vals = a.poly(inner.sample(rng, 500))
    assert np.all(small.contains(vals, 1e-12))


# sum and product rules


def test_sum_example():
    a = scalar_tm([(1.0, (1,))], UNIT, 1, (-0.1, 0.1))
    s = tm_add(a, a)
    assert s.poly.terms[0][1] == (1,) and s.poly.coeffs[0, 0] == 2.0
    assert (s.remainder.lower[0], s.remainder.upper[0]) == (-0.2, 0.2)
    zero = TaylorModel.constant([0.0], UNIT, 1)
    same = tm_add(a, zero)
    np.testing.assert_array_equal(same.poly.coeffs, a.poly.coeffs)


def test_product_examples():
    x = scalar_tm([(1.0, (1,))], UNIT, 2)
    sq = tm_mul(x, x, 2)
    assert sq.poly.terms[0][1] == (2,) and sq.remainder.upper[0] == 0.0
    trunc = tm_mul(x, x, 1)
    assert trunc.poly.exponents.shape[0] == 0
    assert (trunc.remainder.lower[0], trunc.remainder.upper[0]) == (-1.0, 1.0)


def test_domain_mismatch_rejected():
    a = scalar_tm([(1.0, (1,))], UNIT, 1)
    b = scalar_tm([(1.0, (1,))], Interval([-2.0], [2.0]), 1)
    with pytest.raises(InvalidArgumentError):
        tm_add(a, b)
    with pytest.raises(InvalidArgumentError):
        tm_mul(a, b, 2)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 3))
def test_sum_remainder_is_interval_sum_bitwise(seed, d):
    rng = np.random.default_rng(seed)
    a, b = random_scalar_tm(rng, d, 3), random_scalar_tm(rng, d, 3)
    s = tm_add(a, b)
    ref = pair_add((a.remainder.lower[0], a.remainder.upper[0]), (b.remainder.lower[0], b.remainder.upper[0]))
    cancelled = Polynomial(
        np.vstack([a.poly.exponents, b.poly.exponents]), np.vstack([a.poly.coeffs, b.poly.coeffs]), 3
    )
    if np.any(np.abs(cancelled.coeffs) < 1e-14):
        return  # canonicalisation would fold a term into the remainder
    assert (s.remainder.lower[0], s.remainder.upper[0]) == ref


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_product_remainder_follows_rule_bitwise(seed, d, order):
    rng = np.random.default_rng(seed)
    a, b = random_scalar_tm(rng, d, order), random_scalar_tm(rng, d, order)
    dom = a.domain
    Ia = (a.remainder.lower[0], a.remainder.upper[0])
    Ib = (b.remainder.lower[0], b.remainder.upper[0])
    ref = pair_add(pair_add(pair_mul(Ia, enclose(b.poly, dom)), pair_mul(Ib, enclose(a.poly, dom))), pair_mul(Ia, Ib))
    exps = (a.poly.exponents[:, None, :] + b.poly.exponents[None, :, :]).reshape(-1, d)
    coefs = (a.poly.coeffs[:, None, :] * b.poly.coeffs[None, :, :]).reshape(-1, 1)
    high = exps.sum(axis=1) > order
    if np.any(high):
        dropped = Polynomial(exps[high], coefs[high], int(exps.sum(axis=1).max()))
        ref = pair_add(ref, enclose(dropped, dom))
    low = Polynomial(exps[~high], coefs[~high], order) if np.any(~high) else None
    if low is not None and np.any(np.abs(low.coeffs) < 1e-14):
        return
    p = tm_mul(a, b, order)
    assert (p.remainder.lower[0], p.remainder.upper[0]) == ref


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3))
def test_product_encloses_pointwise_products(seed, order):
    rng = np.random.default_rng(seed)
    a, b = random_scalar_tm(rng, 2, order), random_scalar_tm(rng, 2, order)
    p = tm_mul(a, b, order)
    x = a.domain.sample(rng, 500)
    fa = a.poly(x)[:, 0] + rng.uniform(a.remainder.lower[0], a.remainder.upper[0], 500)
    fb = b.poly(x)[:, 0] + rng.uniform(b.remainder.lower[0], b.remainder.upper[0], 500)
    lo = p.poly(x)[:, 0] + p.remainder.lower[0]
    hi = p.poly(x)[:, 0] + p.remainder.upper[0]
    prod = fa * fb
    assert np.all((prod >= lo - 1e-9) & (prod <= hi + 1e-9))


# division


def test_division_examples():
    a = scalar_tm([(1.0, (1,)), (0.5, (0,))], UNIT, 2, (-0.01, 0.01))
    one = TaylorModel.constant([1.0], UNIT, 2)
    q = tm_div(a, one, 2)
    np.testing.assert_allclose(q.poly(np.array([[0.3]])), a.poly(np.array([[0.3]])), atol=1e-15)
    half = tm_div(TaylorModel.constant([1.0], UNIT, 2), TaylorModel.constant([2.0], UNIT, 2), 2)
    r = half.range()
    assert 0.5 - 1e-12 <= r.lower[0] <= 0.5 <= r.upper[0] <= 0.5 + 1e-12


def test_division_by_zero_range():
    b = scalar_tm([(1.0, (1,))], UNIT, 2)
    with pytest.raises(SingularDivisionError):
        tm_div(TaylorModel.constant([1.0], UNIT, 2), b, 2)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 4))
def test_division_encloses_ratios(seed, order):
    rng = np.random.default_rng(seed)
    a = random_scalar_tm(rng, 1, 2)
    b = scalar_tm([(3.0 + rng.uniform(), (0,)), (rng.uniform(-1, 1), (1,)), (rng.uniform(-0.5, 0.5), (2,))], UNIT, 2)
    q = tm_div(a, b, order)
    x = UNIT.sample(rng, 500)
    fa = a.poly(x)[:, 0] + rng.uniform(a.remainder.lower[0], a.remainder.upper[0], 500)
    ratio = fa / b.poly(x)[:, 0]
    base = q.poly(x)[:, 0]
    assert np.all((ratio >= base + q.remainder.lower[0] - 1e-9) & (ratio <= base + q.remainder.upper[0] + 1e-9))


# composition


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_composition_encloses(seed):
    rng = np.random.default_rng(seed)
    inner = scalar_tm([(0.3, (1,)), (0.1, (2,)), (0.2, (0,))], UNIT, 2, (-0.05, 0.05))
    outer = scalar_tm([(1.0, (0,)), (rng.normal(), (1,)), (rng.normal(), (2,))], Interval([-1.0], [1.0]), 2)
    c = tm_compose(outer, inner, 2)
    x = UNIT.sample(rng, 500)
    y = inner.poly(x)[:, 0] + rng.uniform(-0.05, 0.05, 500)
    f = outer.poly(y[:, None])[:, 0]
    base = c.poly(x)[:, 0]
    assert np.all((f >= base + c.remainder.lower[0] - 1e-9) & (f <= base + c.remainder.upper[0] + 1e-9))


def test_composition_rejects_range_outside_domain():
    inner = scalar_tm([(2.0, (1,))], UNIT, 1)
    outer = scalar_tm([(1.0, (1,))], UNIT, 1)
    with pytest.raises(InvalidArgumentError):
        tm_compose(outer, inner, 1)


# conversions


def test_zonotope_to_tm_examples():
    box = Zonotope([1.0, 2.0], np.diag([0.5, 0.25]))
    tm = zonotope_to_tm(box)
    assert np.all(tm.poly.degrees == 0)
    np.testing.assert_array_equal(tm.remainder.upper, [0.5, 0.25])
    rot = Zonotope([0.0, 0.0], [[1.0, 1.0], [1.0, -1.0]])
    tm = zonotope_to_tm(rot)
    x = np.array([[0.3, -0.7]])
    np.testing.assert_allclose(tm.poly(x), [[0.3 - 0.7, 0.3 + 0.7]])
    np.testing.assert_array_equal(tm.remainder.upper, [0.0, 0.0])
    too_many = Zonotope([0.0, 0.0], [[1.0, 1.0, 1.0], [1.0, -1.0, 0.5]])
    with pytest.raises(InvalidArgumentError):
        zonotope_to_tm(too_many)


def test_tm_to_zonotope_examples():
    rot = Zonotope([0.5, -0.5], [[1.0, 1.0], [1.0, -1.0]])
    back = tm_to_zonotope(zonotope_to_tm(rot))
    np.testing.assert_array_equal(back.center, rot.center)
    np.testing.assert_array_equal(back.generators, rot.generators)
    sq = scalar_tm([(1.0, (2,))], UNIT, 2)
    z = tm_to_zonotope(sq)
    np.testing.assert_array_equal(z.center, [0.0])
    np.testing.assert_array_equal(z.generators, [[1.0]])


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 3))
def test_round_trip_preserves_set(seed, n):
    rng = np.random.default_rng(seed)
    G = np.hstack([rng.normal(size=(n, n)), np.diag(rng.uniform(0.1, 1.0, n))])
    z = Zonotope(rng.normal(size=n), G)
    tm = zonotope_to_tm(z)
    back = tm_to_zonotope(tm)
    ours = tm.sample(rng, 1000)
    theirs = z.sample(rng, 1000)
    assert hull_contains(z.center, z.generators, ours).all()
    assert hull_contains(back.center, back.generators, theirs).all()


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_tm_to_zonotope_encloses_samples(seed, d, order):
    rng = np.random.default_rng(seed)
    tm = random_scalar_tm(rng, d, order)
    z = tm_to_zonotope(tm)
    vals = tm.sample(rng, 1000)
    box = z.box()
    assert np.all(box.contains(vals, 1e-12))


def test_ellipsoid_to_tm_unit_ball():
    tm = ellipsoid_to_tm(Ellipsoid([0.0, 0.0], np.eye(2)))
    r = tm.range()
    np.testing.assert_allclose(r.lower, [-1, -1])
    np.testing.assert_allclose(r.upper, [1, 1])


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 3))
def test_ellipsoid_to_tm_contains_ellipsoid(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    e = Ellipsoid(rng.normal(size=n), A @ A.T + 0.1 * np.eye(n))
    z = tm_to_zonotope(ellipsoid_to_tm(e))
    pts = np.vstack([e.interior_points(rng, 1000), e.boundary_points(rng, 200)])
    assert hull_contains(z.center, z.generators, pts, tol=1e-7).all()
