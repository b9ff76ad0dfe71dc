"""End-to-end acceptance checks, one per criterion.

Each check prints a single ``PASS`` / ``FAIL`` line (with timing) at the end of
the module, and the matching pytest test asserts the same condition.
Run directly with ``python3 tests/test_acceptance.py`` for the bare summary.
"""
import math
import time

import numpy as np
import pytest

from robust_stock import instances as ex
from robust_stock.core_types import (DualCertificate, MomentSet, TabularPolicy,
                                     check_membership, singleton_member)
from robust_stock.moment_oracle import GridConfig, solve_moment_problem
from robust_stock.multistage.common import check_weak_tc, hinge, static_lower_bound
from robust_stock.multistage.consistency import classify_consistency
from robust_stock.multistage.dp import dp_solve, dynamic_evaluate_policy
from robust_stock.multistage.static import (_mixture, best_base_stock_bound, first_stage_floor,
                                            static_evaluate_policy, static_optimize_two_stage)
from robust_stock.piecewise import PiecewiseLinearConvex
from robust_stock.single_stage import (CCPAInstance, ccpa3_solve, psi_value, verify_certificate,
                                       worst_case_expectation)

CFG = GridConfig()
RESULTS = {}


def _bound(v):
    return max(1e-3, 1e-3 * abs(v))


def criterion_1():
    """Closed-form worst-case newsvendor cost vs the moment LP oracle."""
    rng = np.random.default_rng(20240601)
    worst = 0.0
    bad = 0
    for _ in range(100):
        p = ex.sample_stage_params(rng)
        x = float(rng.uniform(0.0, p.demand.mu + 3 * p.demand.sigma))
        closed = psi_value(x, p)
        z = PiecewiseLinearConvex.newsvendor(x, p.b, p.h, p.c)
        orc = solve_moment_problem(z, p.demand, CFG).value
        dev = abs(closed - orc)
        worst = max(worst, dev)
        bad += dev > _bound(closed)
    return bad == 0, f"max deviation {worst:.2e}", 60.0


def _ccpa_sample(rng):
    while True:
        mu = rng.uniform(1.0, 20.0)
        sigma = rng.uniform(0.1, 1.5) * mu
        c1 = rng.uniform(0.05, 2.0) * mu
        c2 = c1 + rng.uniform(0.05, 2.0) * mu
        inst = CCPAInstance(c1, c2, MomentSet(0.0, math.inf, mu, sigma))
        if not inst.failures():
            return inst


def criterion_2():
    """Three-piece closed form vs the oracle, plus certificate gaps."""
    rng = np.random.default_rng(7)
    worst_dev, worst_gap = 0.0, 0.0
    ok = True
    for _ in range(100):
        inst = _ccpa_sample(rng)
        dist, cert, value = ccpa3_solve(inst)
        orc = solve_moment_problem(inst.zeta, inst.ms, CFG).value
        dev = abs(value - orc)
        ver = verify_certificate(dist, cert, inst.zeta, inst.ms, tol=1e-8)
        gap = abs(cert.dual_value(inst.ms) - dist.expect(inst.zeta))
        worst_dev, worst_gap = max(worst_dev, dev), max(worst_gap, gap)
        ok &= dev <= _bound(value) and ver.ok and gap <= 1e-8
    return ok, f"max deviation {worst_dev:.2e}, max certificate gap {worst_gap:.2e}", 60.0


def criterion_3():
    inst = ex.not_weakly_consistent()
    opt = static_optimize_two_stage(inst, CFG)
    dp = dp_solve(inst, CFG)
    target = 17 + math.sqrt(5) / 2
    ok = (abs(opt.value - 18.0) <= 1e-9 and opt.exact
          and abs(dp.value - target) <= 1e-6 and dp.value - opt.value > 0)
    return ok, f"static {opt.value:.12g} (certified {opt.exact}), dynamic {dp.value:.12g}", 10.0


def criterion_4():
    inst = ex.weak_not_strong()
    opt = static_optimize_two_stage(inst, CFG)
    dp = dp_solve(inst, CFG)
    pi = TabularPolicy(3.0, [lambda y: 9.9 if y <= 0 else max(10.1, y)])
    sv = static_evaluate_policy(pi, inst, CFG)
    dv = dynamic_evaluate_policy(pi, inst, CFG)
    ok = (abs(opt.value - 2) <= 1e-6 and abs(dp.value - 2) <= 1e-6
          and abs(sv.value - 2) <= 1e-6 and sv.exact
          and abs(dv - (1 + math.sqrt(1.01))) <= 1e-6 and dv - dp.value >= 4e-3)
    return ok, (f"static {opt.value:.10g}, dynamic {dp.value:.10g}, "
                f"pi' static {sv.value:.10g}, pi' dynamic {dv:.10g}"), 10.0


def criterion_5():
    inst = ex.strong_with_gap()
    opt = static_optimize_two_stage(inst, CFG)
    dp = dp_solve(inst, CFG)
    x1s, x1d = opt.policy.x1, dp.base_stock.levels[0]
    ok = (abs(opt.value - 5) <= 1e-6 and abs(x1s - 102) <= 1e-4
          and abs(dp.value - math.sqrt(26)) <= 1e-6 and abs(x1d - 102) <= 1e-4)
    return ok, f"static {opt.value:.10g} at x1 {x1s:.8g}, dynamic {dp.value:.10g} at {x1d:.8g}", 10.0


def criterion_6():
    eps = 0.1
    inst = ex.no_base_stock(eps)
    q = DualCertificate(73 / 6, -8 / 3, 1 / 6, (5.0, 11.0))
    pi = TabularPolicy(inst.y1, [lambda y: y + eps])
    sv = static_evaluate_policy(pi, inst, CFG, certificate=q)
    meas = ex.adversarial_stage1_measures(eps)
    s1 = inst.stage(1).demand
    grid = np.round(np.arange(inst.y1 - s1.beta, inst.y1 - s1.alpha + 5e-4, 1e-3), 12)
    bound, _ = best_base_stock_bound(inst, meas, grid, CFG)
    floor = first_stage_floor(inst, inst.y1 + 1e-3, meas, CFG)
    ok = (abs(sv.value - 18.8) <= 1e-6 and sv.exact
          and abs(sv.info["majorant_value"] - 3) <= 1e-9 and sv.info["majorant_deficit"] <= 1e-8
          and bound >= 18.8 + 1e-5 and floor >= 18.8 + 1e-5)
    return ok, (f"static {sv.value:.10g}, inner {sv.info['majorant_value']:.10g}, "
                f"best base-stock bound {bound:.8g}"), 60.0


def _random_policy(rng, inst):
    q1 = singleton_member(inst.stage(1).demand)
    x1 = inst.y1 + float(rng.uniform(0.0, 6.0))
    table = {}
    for a in q1.points:
        y2 = x1 - a
        table[y2] = y2 + (float(rng.uniform(0.0, 10.0)) if rng.random() < 0.8 else 0.0)
    return TabularPolicy(x1, [table])


def criterion_7():
    """Bound <= static <= dynamic, membership and certificates on random policies."""
    rng = np.random.default_rng(11)
    counts = {"bound": 0, "order": 0, "membership": 0, "certificate": 0}
    checked = 0
    for _ in range(20):
        inst = ex.sample_two_stage(rng)
        lb = static_lower_bound(inst, CFG)
        s2 = inst.stage(2)
        for _ in range(50):
            pi = _random_policy(rng, inst)
            sv = static_evaluate_policy(pi, inst, CFG)
            dv = dynamic_evaluate_policy(pi, inst, CFG)
            tol = 1e-7 * max(1.0, abs(sv.value))
            counts["bound"] += lb > sv.value + tol
            counts["order"] += dv < sv.value - tol
            q1, q2 = sv.worst_pair
            counts["membership"] += not (check_membership(q1, inst.stage(1).demand, 1e-7)
                                         and check_membership(q2, s2.demand, 1e-7))
            if sv.certificate is not None:
                zeta = _mixture(s2, [pi.order_up_to(2, pi.x1 - a) for a in q1.points], q1.masses)
                checked += 1
                counts["certificate"] += not verify_certificate(q2, sv.certificate, zeta,
                                                                s2.demand, tol=1e-8).ok
    ok = not any(counts.values()) and checked > 0
    return ok, f"violations {counts}, certificates checked {checked}", 120.0


def criterion_8():
    iid = ex.iid_instance()
    pol = check_weak_tc(iid, CFG)
    lb = static_lower_bound(iid, CFG)
    dp = dp_solve(iid, CFG)
    sv = static_evaluate_policy(TabularPolicy(pol.levels[0], [lambda y, s=pol.levels[1]: max(y, s)]),
                                iid, CFG)
    ok_iid = (pol is not None and abs(dp.value - lb) <= 1e-6 and abs(sv.value - lb) <= 1e-6)

    inst = ex.strong_tc_instance()
    rep = classify_consistency(inst, CFG)
    lb2 = static_lower_bound(inst, CFG)
    rng = np.random.default_rng(5)
    attain = []
    for _ in range(10):
        # order-up-to-zero family: x1 = 0 and x2(y) = 0 on the reachable states y <= 0;
        # the rule is free (any x2 >= y) on y > 0, which demand >= 0 never reaches
        tail = float(rng.uniform(0.0, 3.0))
        pi = TabularPolicy(0.0, [lambda y, s=tail: 0.0 if y <= 0 else y + s])
        attain.append(static_evaluate_policy(pi, inst, CFG).value)
    pert = TabularPolicy(0.5, [lambda y: max(y, 0.0)])
    excess = static_evaluate_policy(pert, inst, CFG).value - lb2
    ok_tc = (rep.strong_tc == "proven" and all(abs(v - lb2) <= 1e-6 for v in attain) and excess > 1e-6)
    detail = (f"iid: bound {lb:.10g}, static {sv.value:.10g}, dynamic {dp.value:.10g}; "
              f"strong verdict {rep.strong_tc}, perturbed excess {excess:.4g}")
    return ok_iid and ok_tc, detail, 30.0


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8]


def run(i):
    if i not in RESULTS:
        t0 = time.perf_counter()
        ok, detail, limit = CRITERIA[i - 1]()
        el = time.perf_counter() - t0
        ok = ok and el < limit
        RESULTS[i] = (ok, f"{'PASS' if ok else 'FAIL'}  criterion {i}  ({el:.1f} s, limit {limit:.0f} s)  {detail}")
    return RESULTS[i]


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    lines = [RESULTS[i][1] for i in sorted(RESULTS)]
    if tr is not None:
        tr.write_line("")
        for line in lines:
            tr.write_line(line)
    else:
        print("\n".join(lines))


@pytest.mark.parametrize("i", range(1, 9))
def test_criterion(i):
    ok, line = run(i)
    assert ok, line


if __name__ == "__main__":
    for i in range(1, 9):
        print(run(i)[1], flush=True)
