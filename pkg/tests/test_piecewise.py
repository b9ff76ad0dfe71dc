import math

import numpy as np
import pytest

from robust_stock.errors import MalformedInputError
from robust_stock.piecewise import PiecewiseLinear, PiecewiseLinearConvex


def test_newsvendor_shape():
    f = PiecewiseLinearConvex.newsvendor(8.0, b=3.0, h=1.0, c=0.5)
    assert f(8.0) == pytest.approx(4.0)
    assert f(10.0) == pytest.approx(4.0 + 6.0)
    assert f(5.0) == pytest.approx(4.0 + 3.0)


def test_ccpa_values():
    z = PiecewiseLinearConvex.ccpa(7, 9)
    assert [z(t) for t in (5, 7, 8, 9, 12)] == [2, 0, 0, 0, 3]
    with pytest.raises(MalformedInputError):
        PiecewiseLinearConvex.ccpa(9, 7)


def test_sum_and_scale():
    f = 0.5 * PiecewiseLinearConvex.abs_dev(9) + 0.5 * PiecewiseLinearConvex.abs_dev(7)
    assert isinstance(f, PiecewiseLinearConvex)
    assert f.breakpoints == (7.0, 9.0) and f.slopes == (-1.0, 0.0, 1.0)
    assert f(8) == pytest.approx(1.0)


def test_difference_need_not_be_convex():
    g = PiecewiseLinearConvex.abs_dev(0) - PiecewiseLinearConvex.abs_dev(1) * 2
    assert not isinstance(g, PiecewiseLinearConvex)
    assert g(0.5) == pytest.approx(0.5 - 1.0)


def test_vectorised_evaluation():
    f = PiecewiseLinearConvex.newsvendor(2.0, 1.0, 1.0)
    xs = np.array([0.0, 2.0, 5.0])
    assert np.allclose(f(xs), [2.0, 0.0, 3.0])


def test_compose_and_restrict():
    f = PiecewiseLinearConvex.abs_dev(3.0)
    g = f.compose_affine(1.0, -1.0)          # t -> f(1 - t)
    assert g(-2.0) == pytest.approx(0.0)
    r = f.restrict(3.0, 10.0)
    assert r(20.0) == pytest.approx(17.0)


def test_bad_construction():
    with pytest.raises(MalformedInputError):
        PiecewiseLinear((1.0, 0.0), (0.0, 1.0, 2.0))
    with pytest.raises(MalformedInputError):
        PiecewiseLinearConvex((0.0,), (1.0, -1.0))


def test_max_minus_quadratic_exact():
    # (d - 8)^2 / 6 + 3/2 majorises a three-piece function touching at 5 and 11
    z = PiecewiseLinearConvex.ccpa(7, 9)
    lam = (16.0, -4.0, 0.25)
    val, at = z.max_minus_quadratic(lam, 0.0, math.inf)
    assert val == pytest.approx(0.0, abs=1e-12)
    grid = np.linspace(0, 40, 4001)
    assert np.max(z(grid) - (16 - 4 * grid + 0.25 * grid ** 2)) <= 1e-12


def test_max_minus_quadratic_unbounded():
    z = PiecewiseLinearConvex.abs_dev(0.0)
    val, _ = z.max_minus_quadratic((0.0, 0.5, 0.0), 0.0, math.inf)
    assert val == math.inf
