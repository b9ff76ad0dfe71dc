"""Pieces shared by the dynamic and static solvers: adjusted stage costs,
the eta-hat quantities, the stagewise lower bound and the sufficient
conditions for (weak / strong) time consistency."""
from __future__ import annotations

import math

import numpy as np

from ..core_types import (BaseStockPolicy, Instance, Interval, StageParams,
                          singleton_member)
from ..moment_oracle import GridConfig
from ..piecewise import PiecewiseLinear, PiecewiseLinearConvex
from ..single_stage import psi_minimize, worst_case_expectation

GOLDEN = (math.sqrt(5) - 1) / 2


def stage_cost(t, x, y, d, inst: Instance):
    """c_t (x - y) + b_t [d - x]_+ + h_t [x - d]_+."""
    st = inst.stage(t)
    return st.c * (x - y) + st.b * max(d - x, 0.0) + st.h * max(x - d, 0.0)


def adjusted_c(t, inst: Instance):
    return inst.stage(t).c - inst.rho * inst.c_next(t)


def psi_hat(t, x, d, inst: Instance):
    st = inst.stage(t)
    return adjusted_c(t, inst) * x + st.b * max(d - x, 0.0) + st.h * max(x - d, 0.0)


def hinge(x, st):
    """d -> b [d - x]_+ + h [x - d]_+ (no ordering cost)."""
    return PiecewiseLinearConvex.hinge(x, -st.h, st.b)


# ------------------------------------------------------------ convex line search
def golden_min(func, lo, hi, xtol=1e-10, max_iter=200):
    """Golden-section search for a convex function on [lo, hi]."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    best = min((fc, c), (fd, d))
    it = 0
    while b - a > xtol * max(1.0, abs(a), abs(b)) and it < max_iter:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = func(d)
        best = min(best, (fc, c), (fd, d))
    for x in (lo, hi):
        fx = func(x)
        if fx < best[0]:
            best = (fx, x)
    return best[1], best[0]


def flat_interval(func, xmin, fmin, lo, hi, ftol, stol):
    """Extend xmin to {x in [lo, hi]: f(x) <= fmin + ftol + stol |x - xmin|}.

    The slope allowance ``stol`` makes the test insensitive to round-off on
    genuinely flat pieces while keeping strictly convex minima at width
    O(stol / curvature).  The set is an interval because the left-hand side
    minus the allowance is convex on each side of xmin.
    """
    def ok(x):
        return func(x) <= fmin + ftol + stol * abs(x - xmin)

    def edge(outer):
        if outer == xmin:
            return xmin
        if ok(outer):
            return outer
        good, bad = xmin, outer
        for _ in range(100):
            mid = 0.5 * (good + bad)
            if ok(mid):
                good = mid
            else:
                bad = mid
            if abs(bad - good) <= 1e-11 * max(1.0, abs(good)):
                break
        return good
    return edge(lo), edge(hi)


def convex_argmin(func, lo, hi, slope_left, slope_right, ftol_rel=1e-14, xtol=1e-10):
    """Minimiser interval and value of a convex function on the real line.

    ``slope_left`` / ``slope_right`` are the asymptotic slopes at -inf / +inf;
    they decide whether the minimum is attained.  Returns (Interval, value);
    the interval may have infinite ends, and the value is -inf when the
    function is unbounded below.
    """
    stol = 1e-12
    if slope_left > stol or slope_right < -stol:
        return None, -math.inf
    lo, hi = float(lo), float(hi)
    for _ in range(80):
        xm, fm = golden_min(func, lo, hi, xtol)
        width = hi - lo
        moved = False
        if xm - lo <= 1e-6 * width and slope_left < -stol:
            lo -= 2 * width
            moved = True
        if hi - xm <= 1e-6 * width and slope_right > stol:
            hi += 2 * width
            moved = True
        if not moved:
            break
    scale = max(1.0, abs(fm))
    a, b = flat_interval(func, xm, fm, lo, hi, ftol_rel * scale, 1e-8 * scale)
    if abs(slope_left) <= stol and a == lo:
        a = -math.inf
    if abs(slope_right) <= stol and b == hi:
        b = math.inf
    return Interval(a, b), fm


def pl_argmin(f: PiecewiseLinear):
    """Exact minimiser interval and value of a convex piecewise-linear f."""
    sl = np.asarray(f.slopes)
    bp = np.asarray(f.breakpoints)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(sl))))
    if sl[0] > tol or sl[-1] < -tol:
        return None, -math.inf
    k = int(np.argmax(sl >= -tol))
    lo = -math.inf if k == 0 else float(bp[k - 1])
    if abs(sl[k]) <= tol:
        hi = math.inf if k == len(sl) - 1 else float(bp[k])
    else:
        hi = lo
    x = lo if math.isfinite(lo) else hi
    return Interval(lo, hi), f(x)


# ------------------------------------------------------------ eta hat
def _scarf_ok(c, b, h, ms):
    return ms.is_halfline and ms.mu > 0 and ms.sigma > 0 and b > c and c + h > 0


def eta_hat(t, inst: Instance, cfg: GridConfig | None = None):
    """(eta_hat_t, Gamma_hat_t): min over x of sup_Q E[Psi_hat_t(x, D)].

    Returns (-inf, None) when the adjusted objective is unbounded below.
    """
    st = inst.stage(t)
    ms = st.demand
    c1 = adjusted_c(t, inst)
    if _scarf_ok(c1, st.b, st.h, ms):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            arg, val = psi_minimize(StageParams(c1, st.b, st.h, ms))
        return val, arg
    single = singleton_member(ms)
    if single is not None:
        # x -> b [a - x]_+ + h [x - a]_+ : the variable is the order level here
        f = PiecewiseLinear.affine(c1, 0.0)
        for a, p in single:
            f = f + p * PiecewiseLinearConvex.hinge(a, -st.b, st.h)
        arg, val = pl_argmin(f)
        return val, arg
    # generic route through the oracle; asymptotic slopes decide attainment
    cfg = cfg or GridConfig()

    def obj(x):
        return c1 * x + worst_case_expectation(hinge(x, st), ms, cfg).value

    lo = ms.alpha if math.isfinite(ms.alpha) else ms.mu - 10 * ms.sigma
    hi = ms.beta if math.isfinite(ms.beta) else ms.mu + 10 * ms.sigma
    arg, val = convex_argmin(obj, lo - 1.0, hi + 1.0, c1 - st.b, c1 + st.h)
    return val, arg


def static_bound_terms(inst: Instance, cfg=None):
    """The pieces of the stagewise lower bound, for reporting."""
    etas = [eta_hat(t, inst, cfg) for t in range(1, inst.T + 1)]
    disc = sum(inst.rho ** (t - 1) * etas[t - 1][0] for t in range(1, inst.T + 1))
    carry = sum(inst.rho ** t * inst.stage(t + 1).c * inst.stage(t).demand.mu
                for t in range(1, inst.T))
    return {"eta_hat": [e[0] for e in etas], "gamma_hat": [e[1] for e in etas],
            "discounted_eta": disc, "initial": -inst.stage(1).c * inst.y1, "carry": carry}


def static_lower_bound(inst: Instance, cfg=None):
    """sum_t rho^{t-1} eta_hat_t - c_1 y_1 + sum_{t<T} rho^t c_{t+1} mu_t."""
    terms = static_bound_terms(inst, cfg)
    if any(math.isinf(e) for e in terms["eta_hat"]):
        return -math.inf
    return terms["discounted_eta"] + terms["initial"] + terms["carry"]


# ------------------------------------------------------------ sufficient conditions
def check_weak_tc(inst: Instance, cfg=None):
    """Nondecreasing selection x*_t in Gamma_hat_t with x*_1 >= y_1, if any."""
    if any(st.demand.alpha < 0 for st in inst.stages):
        return None
    gammas = []
    for t in range(1, inst.T + 1):
        val, arg = eta_hat(t, inst, cfg)
        if arg is None or math.isinf(val):
            return None
        gammas.append(arg)
    # forward pass: smallest feasible levels
    lows, prev = [], inst.y1
    for g in gammas:
        lo = max(g.lo, prev)
        if lo > g.hi + 1e-9 * max(1.0, abs(g.hi)):
            return None
        lows.append(lo)
        prev = lo
    # backward pass: push every level as high as the next one allows
    levels = [0.0] * inst.T
    nxt = math.inf
    for i in range(inst.T - 1, -1, -1):
        top = min(gammas[i].hi, nxt)
        levels[i] = max(lows[i], top) if math.isfinite(top) else lows[i]
        nxt = levels[i]
    return BaseStockPolicy(levels)


def strong_tc_margins(inst: Instance):
    rows = []
    for t in range(1, inst.T + 1):
        st = inst.stage(t)
        bp = st.b - st.c + inst.rho * inst.c_next(t)
        hp = st.h + st.c - inst.rho * inst.c_next(t)
        ms = st.demand
        ratio = ms.sigma ** 2 / ms.mu ** 2 if ms.mu > 0 else math.nan
        rows.append({"b_prime": bp, "h_prime": hp, "cv2": ratio,
                     "threshold": bp / hp if hp > 0 else math.nan})
    return rows


def check_strong_tc(inst: Instance):
    """Sufficient condition under which every static-optimal policy is the
    order-up-to-zero family and is also dynamically optimal."""
    if inst.y1 != 0:
        return False
    for st, row in zip(inst.stages, strong_tc_margins(inst)):
        ms = st.demand
        if not (ms.is_halfline and ms.mu > 0 and ms.sigma > 0):
            return False
        if not (row["b_prime"] > 0 and row["h_prime"] > 0):
            return False
        if not row["cv2"] > row["threshold"]:
            return False
    return True
