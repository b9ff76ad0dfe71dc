import math

import numpy as np
import pytest

from robust_stock.core_types import (BaseStockPolicy, DiscreteDistribution, Interval, MomentSet,
                                     StageParams, TabularPolicy, canonical_member, check_membership,
                                     newsvendor_cost, singleton_member, validate_moment_set)
from robust_stock.errors import EmptyMomentSetError, MalformedInputError, PolicyDomainError

INF = math.inf


@pytest.mark.parametrize("ms, ok", [
    (MomentSet(1, 3, 2, 1), True),          # variance exactly at the bound
    (MomentSet(1, 3, 2, 1.5), False),
    (MomentSet(0, INF, 0, 0.1), False),     # 0 * inf counts as 0
    (MomentSet(0, INF, 0, 0.0), True),
    (MomentSet(0, INF, 5, 100.0), True),
    (MomentSet(1, 3, 4, 0.0), False),       # mean outside support
])
def test_validate(ms, ok):
    assert bool(validate_moment_set(ms)) is ok


def test_validate_malformed():
    with pytest.raises(MalformedInputError):
        validate_moment_set(MomentSet(3, 1, 2, 0))
    with pytest.raises(MalformedInputError):
        validate_moment_set(MomentSet(0, 3, 2, -1))


def test_singleton_member():
    d = singleton_member(MomentSet(1, 3, 2, 1))
    assert d.points == (1.0, 3.0) and np.allclose(d.masses, [0.5, 0.5])
    assert singleton_member(MomentSet(0, INF, 5, 0)).points == (5.0,)
    assert singleton_member(MomentSet(0.9, 3.1, 2, 1)) is None
    with pytest.raises(EmptyMomentSetError):
        singleton_member(MomentSet(1, 3, 2, 2))


def test_singleton_round_trip():
    for ms in (MomentSet(1, 3, 2, 1), MomentSet(0, 10, 2.5, math.sqrt(7.5 * 2.5))):
        d = singleton_member(ms)
        assert check_membership(d, ms, 1e-9)


@pytest.mark.parametrize("ms", [MomentSet(0, INF, 8, 2), MomentSet(0, INF, 1, 2),
                                MomentSet(1, 3, 2, 0.5), MomentSet(0, 4, 3.5, 1.0)])
def test_canonical_member(ms):
    d = canonical_member(ms)
    assert len(d) <= 2 and check_membership(d, ms, 1e-9)


def test_membership_examples():
    assert check_membership(DiscreteDistribution((9, 11), (0.5, 0.5)), MomentSet(0, INF, 10, 1), 1e-9)
    assert check_membership(DiscreteDistribution((5, 11), (0.5, 0.5)), MomentSet(0, INF, 8, 3), 1e-9)
    assert not check_membership(DiscreteDistribution.point_mass(8), MomentSet(0, INF, 8, 2), 1e-9)
    assert not check_membership(DiscreteDistribution((-1, 17), (0.5, 0.5)), MomentSet(0, INF, 8, 9), 1e-9)


def test_newsvendor_cost():
    p = StageParams(0, 1, 1, MomentSet(0, INF, 8, 2))
    assert newsvendor_cost(9, 11, p) == 2
    q = StageParams(0.7, 3, 2, MomentSet(0, INF, 8, 2))
    assert newsvendor_cost(4.0, 4.0, q) == pytest.approx(0.7 * 4)
    assert newsvendor_cost(0, 8, StageParams(0, 2, 2, MomentSet(0, INF, 8, 2))) == 16


def test_distribution_merges_and_drops():
    d = DiscreteDistribution((6, 6 + 1e-13, 10), (0.5, 1e-15, 0.5))
    assert d.points == (6.0, 10.0)
    assert d.mean == pytest.approx(8) and d.second_moment == pytest.approx(68)
    with pytest.raises(MalformedInputError):
        DiscreteDistribution((1, 2), (0.5, 0.4))
    with pytest.raises(MalformedInputError):
        DiscreteDistribution((1, 2), (1.2, -0.2))


def test_distribution_expect_and_cdf():
    d = DiscreteDistribution((1, 2, 3), (0.25, 0.25, 0.5))
    assert d.expect(lambda x: x * x) == pytest.approx(0.25 + 1 + 4.5)
    assert d.cdf(2) == pytest.approx(0.5)


def test_interval_and_policies():
    iv = Interval(1, 3)
    assert iv.contains(2) and not iv.contains(3.5) and iv.project(5) == 3
    bs = BaseStockPolicy([3, 10])
    assert bs.order_up_to(1, 0) == 3 and bs.order_up_to(2, 12) == 12
    tp = TabularPolicy(10, [{9.0: 9.0, 7.0: 7.0}])
    assert tp.order_up_to(1) == 10 and tp.order_up_to(2, 7.0) == 7
    with pytest.raises(PolicyDomainError):
        tp.order_up_to(2, 8.0)


def test_instance_validation():
    from robust_stock.core_types import Instance
    st = StageParams(0, 1, 1, MomentSet(0, INF, 8, 2))
    with pytest.raises(MalformedInputError):
        Instance(2, 1.0, 0.0, (st,))
