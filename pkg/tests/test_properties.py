"""Randomised properties (hypothesis)."""
import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from robust_stock.core_types import (MomentSet, StageParams, canonical_member, check_membership,
                                     newsvendor_cost, validate_moment_set)
from robust_stock.moment_oracle import solve_moment_problem
from robust_stock.piecewise import PiecewiseLinear, PiecewiseLinearConvex
from robust_stock.single_stage import (psi_minimize, psi_value, scarf_case, verify_certificate,
                                       worst_case_two_point)

INF = math.inf
pos = st.floats(0.5, 20.0)
cost = st.floats(0.0, 3.0)


@st.composite
def scarf_params(draw):
    mu = draw(pos)
    sigma = draw(st.floats(0.05, 2.0)) * mu
    c = draw(cost)
    b = c + draw(st.floats(0.05, 5.0))
    h = draw(st.floats(0.0, 5.0))
    assume(c + h > 0.01)
    return StageParams(c, b, h, MomentSet(0.0, INF, mu, sigma))


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50), scarf_params())
def test_newsvendor_cost_convex_in_x(x1, x2, d, p):
    m = newsvendor_cost(0.5 * (x1 + x2), d, p)
    assert m <= 0.5 * (newsvendor_cost(x1, d, p) + newsvendor_cost(x2, d, p)) + 1e-9


@given(scarf_params(), st.floats(-1, 1), st.floats(-1, 1))
def test_psi_convex(p, s1, s2):
    mu = p.demand.mu
    a, b = mu * (1 + 2 * s1), mu * (1 + 2 * s2)
    lhs = psi_value(0.5 * (a + b), p)
    assert lhs <= 0.5 * (psi_value(a, p) + psi_value(b, p)) + 1e-9 * max(1.0, abs(lhs))


@given(scarf_params())
def test_psi_minimize_beats_grid(p):
    arg, val = psi_minimize(p)
    xs = np.linspace(-p.demand.mu, p.demand.mu + 5 * p.demand.sigma, 301)
    best = min(psi_value(x, p) for x in xs)
    assert val <= best + 1e-9 * max(1.0, abs(best))
    assert abs(psi_value(arg.lo, p) - val) <= 1e-9 * max(1.0, val)


@given(scarf_params())
def test_case_matches_cv_sign(p):
    mu, s = p.demand.mu, p.demand.sigma
    gap = s * s / (mu * mu) - (p.b - p.c) / (p.h + p.c)
    case = scarf_case(p)
    if abs(gap) > 1e-9:
        assert case == ("i" if gap > 0 else "ii")


@given(scarf_params(), st.floats(0.0, 1.0))
def test_two_point_pair_certified(p, frac):
    x = frac * (p.demand.mu + 5 * p.demand.sigma)
    d, cert = worst_case_two_point(x, p)
    z = PiecewiseLinearConvex.newsvendor(x, p.b, p.h, p.c)
    assert check_membership(d, p.demand, 1e-9)
    assert verify_certificate(d, cert, z, p.demand, 1e-9).ok


@settings(max_examples=25, deadline=None)
@given(scarf_params(), st.floats(0.0, 1.0))
def test_oracle_matches_closed_form(p, frac):
    x = frac * (p.demand.mu + 3 * p.demand.sigma)
    z = PiecewiseLinearConvex.newsvendor(x, p.b, p.h, p.c)
    sol = solve_moment_problem(z, p.demand)
    want = psi_value(x, p)
    assert abs(sol.value - want) <= max(1e-3, 1e-3 * want)
    assert sol.upper >= sol.value - 1e-9
    assert check_membership(sol.distribution, p.demand, 1e-7)


@given(st.floats(-5, 5), st.floats(0, 10), st.floats(0, 1), st.floats(0, 1))
def test_moment_set_validation_rule(alpha, width, fm, fs):
    beta = alpha + width
    mu = alpha + fm * width
    room = (beta - mu) * (mu - alpha)
    sigma = fs * 1.5 * math.sqrt(max(room, 0.0))
    ms = MomentSet(alpha, beta, mu, sigma)
    ok = bool(validate_moment_set(ms))
    if sigma * sigma < room * (1 - 1e-9):
        assert ok
        assert check_membership(canonical_member(ms), ms, 1e-9)
    elif sigma * sigma > room * (1 + 1e-9) + 1e-12:
        assert not ok


@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0.0, 3.0), st.floats(0.0, 3.0)),
                min_size=1, max_size=5),
       st.lists(st.floats(-20, 20), min_size=5, max_size=5))
def test_piecewise_sum_matches_pointwise(terms, xs):
    fs = [PiecewiseLinearConvex.hinge(k, -l, r) for k, l, r in terms]
    total = fs[0]
    for f in fs[1:]:
        total = total + f
    assert isinstance(total, PiecewiseLinearConvex)
    for x in xs:
        assert abs(total(x) - sum(f(x) for f in fs)) <= 1e-9 * (1 + abs(x)) * len(fs) * 3


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6, unique=True),
       st.lists(st.floats(-3, 3), min_size=8, max_size=8),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(0.0, 1.0))
def test_max_minus_quadratic_vs_dense_grid(pts, vals, l0, l1, l2):
    pts = sorted(pts)
    assume(min(np.diff(pts)) > 1e-3)
    f = PiecewiseLinear.from_values(pts, vals[:len(pts)], vals[-2], vals[-1])
    lo, hi = pts[0] - 2, pts[-1] + 2
    val, at = f.max_minus_quadratic((l0, l1, l2), lo, hi)
    grid = np.linspace(lo, hi, 20001)
    dense = np.max(f(grid) - (l0 + l1 * grid + l2 * grid * grid))
    assert val >= dense - 1e-9
    assert val <= dense + 1e-3 * (1 + abs(dense))
