import math

import numpy as np
import pytest
from conftest import nv

from robust_stock.core_types import DiscreteDistribution, DualCertificate, MomentSet, check_membership
from robust_stock.errors import NotApplicableError, OutOfRangeError, UnsupportedParametersError
from robust_stock.piecewise import PiecewiseLinearConvex
from robust_stock.single_stage import (CCPAInstance, ScarfAuxiliary, ccpa3_solve, classical_quantile,
                                       psi_minimize, psi_value, randomized_order_gap, scarf_case,
                                       verify_certificate, worst_case_two_point)

INF = math.inf


@pytest.mark.parametrize("x, p, want", [
    (8, nv(8, 2), 2.0),
    (9, nv(8, 2), math.sqrt(5)),
    (101, nv(100, 5), math.sqrt(26)),
])
def test_psi_value_examples(x, p, want):
    assert psi_value(x, p) == pytest.approx(want, abs=1e-12)


def test_psi_value_rejects_bounded_support():
    with pytest.raises(UnsupportedParametersError):
        psi_value(2, nv(2, 1, alpha=1, beta=3))
    with pytest.raises(UnsupportedParametersError):
        psi_value(2, nv(8, 2, c=2, b=1))


def test_psi_minimize_cases():
    arg, val = psi_minimize(nv(8, 2))
    assert arg.is_point and arg.lo == pytest.approx(8) and val == pytest.approx(2)
    arg, val = psi_minimize(nv(1, 2))
    assert arg.lo == 0 and arg.hi == 0 and val == pytest.approx(1)
    arg, val = psi_minimize(nv(8, 2), lower=9)
    assert arg.lo == 9 and val == pytest.approx(math.sqrt(5))
    # boundary case: sigma^2 / mu^2 = (b - c) / (h + c) -> an interval
    p = nv(2, 2)
    assert scarf_case(p) == "iii"
    arg, val = psi_minimize(p)
    assert arg.lo == 0 and arg.hi > 0 and val == pytest.approx(2)


def test_scarf_cases_follow_cv_sign():
    assert scarf_case(nv(1, 2)) == "i"
    assert scarf_case(nv(8, 2)) == "ii"
    assert scarf_case(nv(2, 2)) == "iii"


def test_auxiliary():
    aux = ScarfAuxiliary.from_params(nv(8, 2, c=0.5, b=3, h=1))
    assert abs(aux.kappa) < 1 and aux.f(8) == pytest.approx(2)


def test_worst_case_two_point_examples():
    p = nv(8, 2)
    d, cert = worst_case_two_point(8, p)
    assert np.allclose(d.points, [6, 10]) and np.allclose(d.masses, [0.5, 0.5])
    d, cert = worst_case_two_point(4, p)
    assert np.allclose(d.points, [0, 8.5]) and np.allclose(d.masses, [1 / 17, 16 / 17])
    z = PiecewiseLinearConvex.newsvendor(4, p.b, p.h, p.c)
    assert verify_certificate(d, cert, z, p.demand, 1e-9).ok
    with pytest.raises(OutOfRangeError):
        worst_case_two_point(-1, p)


def test_ccpa_examples():
    d, cert, val = ccpa3_solve(CCPAInstance(9.9, 10.1, MomentSet(0, INF, 10, 1)))
    assert np.allclose(d.points, [9, 11]) and val == pytest.approx(0.9)
    inst = CCPAInstance(7, 9, MomentSet(0, INF, 8, 2))
    d, cert, val = ccpa3_solve(inst)
    assert np.allclose(d.points, [6, 10]) and val == pytest.approx(1)
    assert np.allclose(cert.lam, (16, -4, 0.25))
    assert verify_certificate(d, cert, inst.zeta, inst.ms, 1e-9).ok


def test_ccpa_refuses_outside_hypotheses():
    with pytest.raises(NotApplicableError):
        ccpa3_solve(CCPAInstance(1, 30, MomentSet(0, INF, 10, 1)))


def test_verify_certificate_examples():
    ms = MomentSet(0, INF, 8, 3)
    d = DiscreteDistribution((5, 11), (0.5, 0.5))
    q = DualCertificate(73 / 6, -8 / 3, 1 / 6, (5.0, 11.0))
    # the inner function of the no-base-stock example: d -> E|10 - D1 - d| with D1 uniform on {1, 3}
    phi = 0.5 * PiecewiseLinearConvex.abs_dev(9.0) + 0.5 * PiecewiseLinearConvex.abs_dev(7.0)
    assert verify_certificate(d, q, phi, ms, 1e-9).ok
    inst = CCPAInstance(7, 9, MomentSet(0, INF, 8, 2))
    dist, cert, _ = ccpa3_solve(inst)
    bad = DiscreteDistribution(dist.points, (dist.masses[0] + 0.01, dist.masses[1] - 0.01))
    ver = verify_certificate(bad, cert, inst.zeta, inst.ms, 1e-9)
    assert not ver.ok and "moment" in ver.reason


def test_verify_certificate_detects_majorization_failure():
    inst = CCPAInstance(7, 9, MomentSet(0, INF, 8, 2))
    dist, cert, _ = ccpa3_solve(inst)
    worse = DualCertificate(cert.lambda0 - 0.1, cert.lambda1, cert.lambda2, ())
    assert not verify_certificate(dist, worse, inst.zeta, inst.ms, 1e-9).ok


def test_randomized_order_gap():
    p = nv(1, 2)
    assert randomized_order_gap(DiscreteDistribution.point_mass(0.0), p) == pytest.approx(0, abs=1e-9)
    assert randomized_order_gap(DiscreteDistribution.point_mass(0.5), p) > 1e-6
    assert randomized_order_gap(DiscreteDistribution((-1, 1), (0.5, 0.5)), p) > 1e-6
    with pytest.raises(NotApplicableError):
        randomized_order_gap(DiscreteDistribution.point_mass(0.0), nv(8, 2))


def test_classical_quantile():
    p = nv(8, 2)
    assert classical_quantile(DiscreteDistribution.point_mass(4.0), p) == 4
    assert classical_quantile(DiscreteDistribution((1, 3), (0.5, 0.5)), p) == 1
    q = nv(8, 2, c=0, b=3, h=2)       # ratio 0.6
    assert classical_quantile(DiscreteDistribution((1, 2, 3), (0.25, 0.25, 0.5)), q) == 3


def test_worst_case_members_for_random_instances():
    from robust_stock.instances import sample_stage_params
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = sample_stage_params(rng)
        x = float(rng.uniform(0, p.demand.mu + 5 * p.demand.sigma))
        d, cert = worst_case_two_point(x, p)
        z = PiecewiseLinearConvex.newsvendor(x, p.b, p.h, p.c)
        assert check_membership(d, p.demand, 1e-9)
        assert d.expect(z) == pytest.approx(psi_value(x, p), abs=1e-9 * max(1, psi_value(x, p)))
        assert verify_certificate(d, cert, z, p.demand, 1e-9).ok
