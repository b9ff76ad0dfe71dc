import math

import numpy as np
import pytest

from robust_stock.core_types import DiscreteDistribution, MomentSet, check_membership
from robust_stock.errors import EmptyMomentSetError, MalformedInputError
from robust_stock.moment_oracle import (GridConfig, build_grid, dual_lp, primal_lp, reduce_support,
                                        solve_moment_problem)
from robust_stock.piecewise import PiecewiseLinear, PiecewiseLinearConvex
from robust_stock.single_stage import verify_certificate

INF = math.inf
HALF = MomentSet(0, INF, 8, 2)


def test_grid_contains_forced_points():
    g = build_grid(HALF, PiecewiseLinearConvex.abs_dev(8.0))
    for p in (0, 6, 8, 8.5, 10):
        assert np.min(np.abs(g - p)) <= 1e-12


def test_grid_degenerate_and_clipped():
    assert list(build_grid(MomentSet(0, INF, 5, 0), PiecewiseLinear.constant(1))) == [5.0]
    g = build_grid(MomentSet(1, 3, 2, 0.5), PiecewiseLinear.constant(0))
    assert g.min() == pytest.approx(1) and g.max() == pytest.approx(3)


def test_grid_config_validation():
    with pytest.raises(MalformedInputError):
        GridConfig(truncation_k=5)
    with pytest.raises(MalformedInputError):
        GridConfig(step=0.0)


def test_primal_examples():
    z = 0.5 * PiecewiseLinearConvex.abs_dev(9) + 0.5 * PiecewiseLinearConvex.abs_dev(7)
    d, v = primal_lp(z, HALF)
    assert v == pytest.approx(2, abs=1e-6)
    assert np.allclose(d.points, [6, 10], atol=1e-6) and np.allclose(d.masses, [0.5, 0.5], atol=1e-6)
    d, v = primal_lp(PiecewiseLinear.constant(3.5), HALF)
    assert v == pytest.approx(3.5) and check_membership(d, HALF, 1e-7)
    d, v = primal_lp(PiecewiseLinearConvex.abs_dev(8), HALF)
    assert v == pytest.approx(2, abs=1e-6)


def test_dual_examples():
    cert, v = dual_lp(PiecewiseLinearConvex.ccpa(7, 9), HALF)
    assert v == pytest.approx(1, abs=1e-6)
    assert np.allclose(cert.lam, (16, -4, 0.25), atol=1e-4)
    cert, v = dual_lp(PiecewiseLinear.affine(1.0), HALF)
    assert v == pytest.approx(8, abs=1e-9)
    assert np.allclose(cert.lam, (0, 1, 0), atol=1e-7)
    cert, v = dual_lp(PiecewiseLinearConvex.abs_dev(9), HALF)
    assert v == pytest.approx(math.sqrt(5), abs=1e-6)


def test_weak_duality_and_certificate():
    rng = np.random.default_rng(4)
    for _ in range(20):
        ms = MomentSet(0, INF, rng.uniform(1, 10), rng.uniform(0.5, 5))
        z = PiecewiseLinearConvex.newsvendor(rng.uniform(0, 20), rng.uniform(1, 4), rng.uniform(0, 3))
        sol = solve_moment_problem(z, ms)
        assert sol.upper >= sol.value - 1e-9
        assert sol.gap <= 1e-6 * max(1, sol.value)
        assert check_membership(sol.distribution, ms, 1e-7)
        assert verify_certificate(sol.distribution, sol.certificate, z, ms, 1e-8).ok


def test_nonconvex_integrand_bounded_support():
    ms = MomentSet(0, 10, 4, 2)
    z = PiecewiseLinear.from_values([2, 5, 8], [3, 0, 4], 0.0, 0.0)
    sol = solve_moment_problem(z, ms)
    assert check_membership(sol.distribution, ms, 1e-7)
    assert sol.gap <= 1e-7
    assert len(sol.distribution) <= 3


def test_empty_set():
    with pytest.raises(EmptyMomentSetError):
        solve_moment_problem(PiecewiseLinear.constant(0), MomentSet(1, 3, 2, 3))


def test_reduce_support():
    d = DiscreteDistribution((6, 10), (0.5, 0.5))
    assert reduce_support(d).points == d.points
    sol = solve_moment_problem(PiecewiseLinearConvex.abs_dev(8), HALF)
    assert len(reduce_support(sol.distribution, from_vertex=True)) == 2
