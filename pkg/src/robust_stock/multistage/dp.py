"""Backward recursion for the stagewise (dynamic) formulation.

V_{T+1} = 0 and
    V_t(y) = min_{x >= y} c_t (x - y) + sup_Q E[Psi_t(x, D) + rho V_{t+1}(x - D)].
Writing H_t(x) = c_t x + sup_Q E[...], H_t is convex, so with x*_t a minimiser
V_t(y) = -c_t y + H_t(max(y, x*_t)): the recursion only needs H_t and one
line search per stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core_types import BaseStockPolicy, Instance, Interval, singleton_member
from ..moment_oracle import GridConfig
from ..piecewise import PiecewiseLinear
from ..single_stage import worst_case_expectation
from .common import convex_argmin, hinge

TABLE_POINTS = 1500


class ValueFunction:
    """V(y) = -c y + H(max(y, level)); level = -inf means 'never order'.

    ``H`` is evaluated exactly (closed forms or exact expectations where the
    stage allows it, the moment oracle otherwise).  ``as_piecewise`` gives
    the tabulated convex representation with linear extrapolation used when
    V has to enter a later moment problem as part of a piecewise-linear
    integrand.
    """

    def __init__(self, t, c, level, H, slope_left, slope_right, zero=False):
        self.t = t
        self.c = float(c)
        self.level = float(level)
        self.H = H
        self.slope_left = slope_left      # slope of V at -inf
        self.slope_right = slope_right    # slope of V at +inf
        self.zero = zero
        self._tables = {}

    @classmethod
    def terminal(cls, t):
        return cls(t, 0.0, -math.inf, lambda x: 0.0, 0.0, 0.0, zero=True)

    def __call__(self, y):
        if self.zero:
            return 0.0
        return -self.c * y + self.H(max(y, self.level))

    def as_piecewise(self, lo, hi, n=TABLE_POINTS):
        if self.zero:
            return PiecewiseLinear.constant(0.0)
        key = (round(lo, 9), round(hi, 9), n)
        if key in self._tables:
            return self._tables[key]
        if math.isfinite(self.level) and self.level > lo:
            start = self.level
        else:
            start = lo
        if hi <= start:
            hi = start + 1.0
        pts = np.linspace(start, hi, n)
        vals = np.array([self(y) for y in pts])
        if math.isfinite(self.level) and self.level > lo:
            left = -self.c
        else:
            left = (vals[1] - vals[0]) / (pts[1] - pts[0])
        right = (vals[-1] - vals[-2]) / (pts[-1] - pts[-2])
        f = PiecewiseLinear.from_values(pts, vals, left, right)
        self._tables[key] = f
        return f


@dataclass
class DPResult:
    value: float
    value_functions: list
    base_stock: BaseStockPolicy
    argmin_sets: list          # per stage: argmin over x >= 0
    unconstrained_argmin: list  # per stage: argmin over the real line (None = never order)
    stage_minima: list
    provenance: list = field(default_factory=list)

    def order_up_to_set(self, t, y):
        """argmin_{x >= y} H_t, by convexity."""
        a = self.unconstrained_argmin[t - 1]
        if a is None or a.hi < y:
            return Interval.point(y)
        return Interval(max(a.lo, y), a.hi)


def _support_span(ms, cfg):
    lo = ms.alpha if math.isfinite(ms.alpha) else ms.mu - cfg.truncation_k * ms.sigma
    hi = ms.beta if math.isfinite(ms.beta) else ms.mu + cfg.truncation_k * ms.sigma
    return lo, hi


class StageOperator:
    """x -> H_t(x) given the next-stage value function."""

    def __init__(self, t, inst: Instance, v_next: ValueFunction, cfg: GridConfig):
        self.t = t
        self.inst = inst
        self.st = inst.stage(t)
        self.v_next = v_next
        self.cfg = cfg
        self.single = singleton_member(self.st.demand)
        self.cache = {}
        self.provenance = set()
        self.window = None

    def inner(self, x):
        """sup_Q E[Psi_t(x, D) + rho V_{t+1}(x - D)] as a MomentSolution-like value."""
        st, rho = self.st, self.inst.rho
        if self.single is not None:
            v = sum(p * (hinge(x, st)(a) + rho * self.v_next(x - a)) for a, p in self.single)
            self.provenance.add("closed-form")
            return v
        zeta = hinge(x, st)
        if not self.v_next.zero:
            dlo, dhi = _support_span(st.demand, self.cfg)
            wlo, whi = self.window
            tab = self.v_next.as_piecewise(min(wlo, x) - dhi, max(whi, x) - dlo)
            zeta = zeta + rho * tab.compose_affine(x, -1.0)
        sol = worst_case_expectation(zeta, st.demand, self.cfg)
        self.provenance.add(sol.provenance)
        return sol.value

    def __call__(self, x):
        x = float(x)
        v = self.cache.get(x)
        if v is None:
            v = self.st.c * x + self.inner(x)
            self.cache[x] = v
        return v


def _window(t, inst: Instance, cfg: GridConfig):
    """Search window for the stage-t minimiser."""
    lo = min(0.0, inst.y1, inst.stage(t).demand.alpha) - 1.0
    hi = 0.0
    for s in range(t, inst.T + 1):
        ms = inst.stage(s).demand
        hi += (ms.beta if math.isfinite(ms.beta) else ms.mu + 10 * ms.sigma)
    hi = max(hi, inst.y1) + 1.0
    return lo, hi


def dp_solve(inst: Instance, cfg: GridConfig = GridConfig()):
    T, rho = inst.T, inst.rho
    vfs = [None] * (T + 2)
    vfs[T + 1] = ValueFunction.terminal(T + 1)
    args, uargs, minima, prov = [None] * T, [None] * T, [None] * T, [None] * T
    levels = [0.0] * T
    for t in range(T, 0, -1):
        st = inst.stage(t)
        vn = vfs[t + 1]
        op = StageOperator(t, inst, vn, cfg)
        lo, hi = _window(t, inst, cfg)
        op.window = (lo, hi)
        s_left = st.c - st.b + rho * vn.slope_left
        s_right = st.c + st.h + rho * vn.slope_right
        arg, hmin = convex_argmin(op, lo, hi, s_left, s_right)
        if arg is None:
            # H_t increases everywhere: never order
            level = -math.inf
            v_left = -st.c + s_left
        else:
            level = arg.hi if math.isfinite(arg.hi) else arg.lo
            v_left = -st.c
        uargs[t - 1] = arg
        if arg is None or arg.hi < 0:
            args[t - 1] = Interval.point(0.0)
        else:
            args[t - 1] = Interval(max(arg.lo, 0.0), arg.hi)
        minima[t - 1] = hmin
        levels[t - 1] = level
        vfs[t] = ValueFunction(t, st.c, level, op, v_left, -st.c + s_right)
        prov[t - 1] = "oracle" if "oracle" in op.provenance else "closed-form"
    value = vfs[1](inst.y1)
    return DPResult(value, vfs[1:T + 1], BaseStockPolicy(levels), args, uargs, minima, prov)


# ------------------------------------------------------------ policy evaluation
def dynamic_evaluate_policy(policy, inst: Instance, cfg: GridConfig = GridConfig()):
    """Cost of a fixed policy under the stagewise worst case.

    J_t(y) = c_t (x - y) + sup_Q E[Psi_t(x, D) + rho J_{t+1}(x - D)], x = pi_t(y).
    Base-stock policies reuse the value-function machinery (their J_t has the
    same structure as V_t with the policy's levels); other policies are
    evaluated state by state, exactly for singleton stages and through the
    grid oracle otherwise.
    """
    if isinstance(policy, BaseStockPolicy):
        return _evaluate_base_stock(policy, inst, cfg)
    rho = inst.rho

    def J(t, y):
        if t > inst.T:
            return 0.0
        st = inst.stage(t)
        x = policy.order_up_to(t, y)
        single = singleton_member(st.demand)
        if single is not None:
            return st.c * (x - y) + sum(p * (hinge(x, st)(a) + rho * J(t + 1, x - a))
                                        for a, p in single)
        if t == inst.T:
            return st.c * (x - y) + worst_case_expectation(hinge(x, st), st.demand, cfg).value
        h = hinge(x, st)

        def zeta(d):
            d = np.atleast_1d(np.asarray(d, dtype=float))
            return np.array([h(v) + rho * J(t + 1, x - v) for v in d])
        coarse = GridConfig(cfg.truncation_k, None, 2e-2, cfg.forced_points)
        return st.c * (x - y) + worst_case_expectation(zeta, st.demand, coarse, refine=False).value

    return J(1, inst.y1)


def _evaluate_base_stock(policy: BaseStockPolicy, inst: Instance, cfg: GridConfig):
    T, rho = inst.T, inst.rho
    vn = ValueFunction.terminal(T + 1)
    for t in range(T, 0, -1):
        st = inst.stage(t)
        op = StageOperator(t, inst, vn, cfg)
        op.window = _window(t, inst, cfg)
        level = policy.levels[t - 1]
        s_left = st.c - st.b + rho * vn.slope_left
        s_right = st.c + st.h + rho * vn.slope_right
        v_left = -st.c if math.isfinite(level) else -st.c + s_left
        vn = ValueFunction(t, st.c, level, op, v_left, -st.c + s_right)
    return vn(inst.y1)
