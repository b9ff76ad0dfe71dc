"""Command line front end (``robust-stock``).

Commands: solve-single, solve-dynamic, solve-static, check-tc,
repro-example, oracle-compare.  Exit status is 0 iff every verification
in the report passed; input errors exit with status 2.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import instances as ex
from .core_types import (DualCertificate, MomentSet, StageParams, TabularPolicy,
                         check_membership)
from .errors import ParseError, RobustStockError
from .instance_io import load_instance, parse_config
from .moment_oracle import GridConfig, solve_moment_problem
from .multistage.common import convex_argmin, static_lower_bound
from .multistage.consistency import classify_consistency
from .multistage.dp import dp_solve, dynamic_evaluate_policy
from .multistage.static import (best_base_stock_bound, first_stage_floor,
                                static_evaluate_policy, static_optimize_two_stage)
from .piecewise import PiecewiseLinearConvex
from .report import Report
from .single_stage import (psi_minimize, psi_value, scarf_applicable, scarf_case,
                           verify_certificate, worst_case_expectation, worst_case_two_point)

DEFAULTS = {"grid_step": None, "truncation_k": 50, "tol": 1e-6, "seed": 0, "format": "text"}
CONFIG_ENV = "ROBUST_STOCK_CONFIG"


# ------------------------------------------------------------ configuration
def resolve_config(args):
    cfg = dict(DEFAULTS)
    path = os.environ.get(CONFIG_ENV)
    if path:
        with open(path) as fh:
            cfg.update(parse_config(fh.read()))
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["format"] not in ("text", "machine"):
        raise ParseError(f"format must be text or machine, got {cfg['format']!r}")
    return cfg


def grid_config(cfg):
    return GridConfig(truncation_k=cfg["truncation_k"], step=cfg["grid_step"])


def _stage_dists(rep, prefix, pair):
    q1, q2 = pair
    rep.distribution(f"{prefix}.stage1", q1)
    rep.distribution(f"{prefix}.stage2", q2)


# ------------------------------------------------------------ commands
def cmd_solve_single(args, cfg, rep: Report):
    if args.instance:
        inst = load_instance(args.instance)
        params = inst.stage(args.stage)
    else:
        missing = [k for k in ("mu", "sigma", "c", "b", "h") if getattr(args, k) is None]
        if missing:
            raise ParseError("solve-single needs an instance file or --" + ", --".join(missing))
        params = StageParams(args.c, args.b, args.h,
                             MomentSet(args.alpha, args.beta, args.mu, args.sigma))
    ms = params.demand
    gcfg = grid_config(cfg)
    why = scarf_applicable(params)
    if why:
        rep.notice(f"closed form not applicable ({why}); oracle-only mode")

        def obj(x):
            z = PiecewiseLinearConvex.newsvendor(x, params.b, params.h, params.c)
            return worst_case_expectation(z, ms, gcfg).value
        lo = ms.alpha if math.isfinite(ms.alpha) else ms.mu - 10 * ms.sigma
        hi = ms.beta if math.isfinite(ms.beta) else ms.mu + 10 * ms.sigma
        arg, val = convex_argmin(obj, lo - 1, hi + 1, params.c - params.b, params.c + params.h)
        if arg is None:
            rep.text("argmin", "none (unbounded below)")
            rep.check("attained", False, "objective unbounded below")
            return
        x = arg.lo if math.isfinite(arg.lo) else arg.hi
        rep.text("argmin", repr(arg))
        rep.number("x_star", x, "oracle", cfg["tol"])
        rep.number("value", val, "oracle", cfg["tol"])
        sol = worst_case_expectation(PiecewiseLinearConvex.newsvendor(x, params.b, params.h, params.c),
                                     ms, gcfg)
        rep.distribution("worst_case", sol.distribution)
        rep.check("membership", check_membership(sol.distribution, ms, 1e-7))
        return
    case = scarf_case(params)
    arg, val = psi_minimize(params)
    x = arg.lo
    rep.text("case", case)
    rep.text("argmin", repr(arg))
    rep.number("x_star", x, "closed-form", 0.0)
    rep.number("value", val, "closed-form", 0.0)
    dist, cert = worst_case_two_point(x, params)
    zeta = PiecewiseLinearConvex.newsvendor(x, params.b, params.h, params.c)
    rep.distribution("worst_case", dist)
    rep.number("certificate.lambda0", cert.lambda0, "closed-form")
    rep.number("certificate.lambda1", cert.lambda1, "closed-form")
    rep.number("certificate.lambda2", cert.lambda2, "closed-form")
    ver = verify_certificate(dist, cert, zeta, ms, tol=1e-8)
    rep.check("certificate", ver.ok, ver.reason)
    rep.check("membership", check_membership(dist, ms, 1e-7))
    osol = solve_moment_problem(zeta, ms, gcfg)
    delta = abs(osol.value - psi_value(x, params))
    rep.number("oracle.value", osol.value, "oracle", cfg["tol"])
    rep.number("oracle.delta", delta, "oracle")
    rep.check("oracle_agrees", delta <= max(1e-3, 1e-3 * abs(val)), f"delta {delta:.3g}")


def cmd_solve_dynamic(args, cfg, rep: Report):
    inst = load_instance(args.instance)
    res = dp_solve(inst, grid_config(cfg))
    prov = _dp_prov(res)
    rep.number("dynamic.value", res.value, prov, cfg["tol"])
    for t in range(1, inst.T + 1):
        rep.number(f"level.{t}", res.base_stock.levels[t - 1], res.provenance[t - 1], cfg["tol"])
        rep.text(f"argmin_set.{t}", repr(res.argmin_sets[t - 1]))
    check = dynamic_evaluate_policy(res.base_stock, inst, grid_config(cfg))
    rep.check("base_stock_attains_value", abs(check - res.value) <= cfg["tol"] * max(1.0, abs(res.value)),
              f"policy evaluates to {check:.12g}")


def cmd_solve_static(args, cfg, rep: Report):
    inst = load_instance(args.instance)
    opt = static_optimize_two_stage(inst, grid_config(cfg))
    prov = "closed-form" if opt.exact else "oracle"
    rep.number("static.value", opt.value, prov, cfg["tol"])
    rep.number("static.lower_bound", opt.lower, "oracle", cfg["tol"])
    rep.number("x1", opt.policy.x1, prov, cfg["tol"])
    for y, x in sorted(opt.table.items()):
        rep.number(f"x2[{y:.10g}]", x, prov, cfg["tol"])
    _stage_dists(rep, "worst_case", opt.evaluation.worst_pair)
    rep.check("certified", opt.exact, f"value {opt.value:.12g}, LP bound {opt.lower:.12g}")
    for i, q in enumerate(opt.evaluation.worst_pair, 1):
        rep.check(f"membership.stage{i}", check_membership(q, inst.stage(i).demand, 1e-7))


def cmd_check_tc(args, cfg, rep: Report):
    inst = load_instance(args.instance)
    r = classify_consistency(inst, grid_config(cfg))
    rep.text("verdict", r.summary())
    rep.text("weak_tc", r.weak_tc)
    rep.text("weak_tc.reason", r.justification["weak"])
    rep.text("strong_tc", r.strong_tc)
    rep.text("strong_tc.reason", r.justification["strong"])
    if r.strong_tc == "proven" and "coefficient" in r.justification["strong"]:
        rep.text("optimal_set", "order-up-to-zero family (Pi0)")
    rep.number("static.value", r.static_value, "oracle", cfg["tol"])
    rep.number("dynamic.value", r.dynamic_value, "oracle", cfg["tol"])
    rep.number("gap", r.gap, "oracle", cfg["tol"])
    if r.witness is not None:
        rep.text("witness", repr(r.witness))
    rep.check("ordering", r.dynamic_value >= r.static_value - cfg["tol"])


def _dp_prov(dp):
    return "oracle" if "oracle" in dp.provenance else "closed-form"


def _expect(rep, name, got, want, tol, prov="closed-form"):
    rep.number(name, got, prov, tol)
    rep.check(name, abs(got - want) <= tol, f"expected {want:.12g}, got {got:.12g}")


def cmd_repro_example(args, cfg, rep: Report):
    n = args.n
    gcfg = grid_config(cfg)
    if args.epsilon is not None and n != 4:
        raise ParseError("--epsilon applies to example 4 only")
    if n == 1:
        inst = ex.not_weakly_consistent()
        opt = static_optimize_two_stage(inst, gcfg)
        _expect(rep, "static.value", opt.value, 18.0, 1e-9)
        rep.check("static.certified", opt.exact)
        rep.text("static.policy", repr(opt.policy))
        reference = TabularPolicy(10.0, [{9.0: 9.0, 7.0: 7.0}])
        ev = static_evaluate_policy(reference, inst, gcfg)
        _expect(rep, "static.reference_policy", ev.value, 18.0, 1e-9)
        dp = dp_solve(inst, gcfg)
        _expect(rep, "dynamic.value", dp.value, 17 + math.sqrt(5) / 2, 1e-6, _dp_prov(dp))
        rep.number("gap", dp.value - opt.value, "oracle", 1e-6)
        rep.check("gap_positive", dp.value - opt.value > 1e-5)
    elif n == 2:
        inst = ex.weak_not_strong()
        opt = static_optimize_two_stage(inst, gcfg)
        dp = dp_solve(inst, gcfg)
        _expect(rep, "static.value", opt.value, 2.0, 1e-6)
        _expect(rep, "dynamic.value", dp.value, 2.0, 1e-6, _dp_prov(dp))
        rep.text("static.policy", repr(opt.policy))

        def rule(y):
            return 9.9 if y <= 0 else max(10.1, y)
        pi = TabularPolicy(3.0, [rule])
        sv = static_evaluate_policy(pi, inst, gcfg)
        _expect(rep, "pi_prime.static", sv.value, 2.0, 1e-6)
        rep.check("pi_prime.static_certified", sv.exact)
        _stage_dists(rep, "pi_prime.worst_case", sv.worst_pair)
        dv = dynamic_evaluate_policy(pi, inst, gcfg)
        _expect(rep, "pi_prime.dynamic", dv, 1 + math.sqrt(1.01), 1e-6)
        rep.check("pi_prime.strictly_worse", dv - dp.value >= 4e-3, f"excess {dv - dp.value:.6g}")
    elif n == 3:
        inst = ex.strong_with_gap()
        opt = static_optimize_two_stage(inst, gcfg)
        dp = dp_solve(inst, gcfg)
        _expect(rep, "static.value", opt.value, 5.0, 1e-6)
        _expect(rep, "static.x1", opt.policy.x1, 102.0, 1e-4)
        rep.text("static.policy", repr(opt.policy))
        _expect(rep, "dynamic.value", dp.value, math.sqrt(26), 1e-6, _dp_prov(dp))
        _expect(rep, "dynamic.level1", dp.base_stock.levels[0], 102.0, 1e-4, _dp_prov(dp))
    elif n == 4:
        eps = 0.1 if args.epsilon is None else args.epsilon
        inst = ex.no_base_stock(eps)
        target = 19 - 2 * eps
        q = DualCertificate(73 / 6, -8 / 3, 1 / 6, (5.0, 11.0))
        pi = TabularPolicy(inst.y1, [lambda y: y + eps])
        sv = static_evaluate_policy(pi, inst, gcfg, certificate=q)
        _expect(rep, "static.value", sv.value, target, 1e-6)
        rep.number("static.upper", sv.upper, "closed-form", 1e-6)
        rep.check("static.certified", sv.exact, f"gap {sv.gap:.3g}")
        _expect(rep, "inner.worst_case", sv.info["majorant_value"], 3.0, 1e-9)
        rep.number("inner.majorant_deficit", sv.info["majorant_deficit"], "oracle", 1e-8)
        rep.check("inner.certified", sv.info["majorant_deficit"] <= 1e-8)
        _stage_dists(rep, "worst_case", sv.worst_pair)
        meas = ex.adversarial_stage1_measures(eps)
        s1 = inst.stage(1).demand
        lo, hi = inst.y1 - s1.beta, inst.y1 - s1.alpha
        grid = np.round(np.arange(lo, hi + 5e-4, 1e-3), 12)
        bound, at = best_base_stock_bound(inst, meas, grid, gcfg)
        rep.number("base_stock.best_lower_bound", bound, "closed-form", 1e-9)
        rep.number("base_stock.argmin_level2", at, "closed-form")
        rep.check("no_base_stock_attains", bound >= target + 1e-5,
                  f"excess {bound - target:.3g} over {target:.12g}")
        floor = first_stage_floor(inst, inst.y1 + 1e-3, meas, gcfg)
        st = inst.stage(1)
        slope_ok = st.c + st.h - inst.rho * inst.stage(2).c > 0 and inst.y1 >= s1.beta
        rep.number("base_stock.floor_above_y1", floor, "closed-form")
        rep.check("raising_x1_does_not_help", floor >= target + 1e-5 and slope_ok)
    else:
        raise ParseError(f"example must be 1, 2, 3 or 4, got {n}")


def cmd_oracle_compare(args, cfg, rep: Report):
    if args.trials < 1:
        raise ParseError("--trials must be at least 1")
    rng = np.random.default_rng(cfg["seed"])
    gcfg = grid_config(cfg)
    worst = 0.0
    fails = []
    for i in range(args.trials):
        p = ex.sample_stage_params(rng)
        ms = p.demand
        x = float(rng.uniform(0.0, ms.mu + 3 * ms.sigma))
        closed = psi_value(x, p)
        z = PiecewiseLinearConvex.newsvendor(x, p.b, p.h, p.c)
        orc = solve_moment_problem(z, ms, gcfg).value
        dev = abs(closed - orc)
        worst = max(worst, dev)
        if dev > max(1e-3, 1e-3 * abs(closed)):
            fails.append(i)
    rep.number("trials", args.trials, "input")
    rep.number("max_deviation", worst, "oracle")
    rep.text("failures", ",".join(map(str, fails)) if fails else "none")
    rep.check("oracle_matches_closed_form", not fails)


COMMANDS = {
    "solve-single": cmd_solve_single,
    "solve-dynamic": cmd_solve_dynamic,
    "solve-static": cmd_solve_static,
    "check-tc": cmd_check_tc,
    "repro-example": cmd_repro_example,
    "oracle-compare": cmd_oracle_compare,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid-step", dest="grid_step", type=float, help="absolute oracle grid step")
    common.add_argument("--truncation-k", dest="truncation_k", type=float,
                        help="truncate unbounded supports at mu + K sigma")
    common.add_argument("--tol", type=float, help="reporting tolerance")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("text", "machine"))
    common.add_argument("--timings", action="store_true", help="append wall-clock timings")

    ap = argparse.ArgumentParser(prog="robust-stock", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve-single", parents=[common], help="single-stage robust newsvendor")
    p.add_argument("instance", nargs="?")
    p.add_argument("--stage", type=int, default=1)
    for k in ("mu", "sigma", "c", "b", "h"):
        p.add_argument(f"--{k}", type=float)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=math.inf)
    for name in ("solve-dynamic", "solve-static", "check-tc"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("instance")
    p = sub.add_parser("repro-example", parents=[common], help="reproduce a reference example")
    p.add_argument("n", type=int)
    p.add_argument("--epsilon", type=float)
    p = sub.add_parser("oracle-compare", parents=[common], help="closed form versus oracle on random instances")
    p.add_argument("--trials", type=int, default=100)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args)
        rep = Report(args.command, {k: v for k, v in cfg.items() if v is not None and k != "format"})
        t0 = time.perf_counter()
        COMMANDS[args.command](args, cfg, rep)
        rep.timings["total"] = time.perf_counter() - t0
    except ParseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (RobustStockError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2 if isinstance(err, (OSError, ValueError)) else 1
    sys.stdout.write(rep.render(cfg["format"], args.timings))
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
