"""Brute-force solver for the problem of moments on a discretised support.

maximize   sum_i zeta(t_i) p_i
subject to sum_i p_i = 1, sum_i t_i p_i = mu, sum_i t_i^2 p_i = mu^2 + sigma^2, p >= 0

The grid LP has three equality rows and (by default) tens of thousands of
columns.  Handing all columns to the LP solver is slow, so the LP is solved
by column generation: a small restricted master is solved with HiGHS and the
whole grid is priced in one vectorised pass against the master's duals.  At
termination no grid column has positive reduced cost, so the master optimum
is the grid LP optimum and its duals solve the grid dual LP.

For piecewise-linear integrands the pricing step can also run over the
continuum (``refine=True``): on each linear piece, zeta - q is a quadratic
whose maximiser is known in closed form.  The final dual is then repaired by
the remaining violation, which turns it into a rigorous upper bound.

All LPs are solved in standardised coordinates u = (t - mu) / sigma, where the
moment rows become (1, 0, 1); this keeps HiGHS well conditioned when mu is
large relative to sigma.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .core_types import (DiscreteDistribution, DualCertificate, MomentSet,
                         MomentSolution, canonical_member, require_nonempty,
                         singleton_member)
from .errors import GridResolutionError, InfeasibleGridError, MalformedInputError
from .piecewise import PiecewiseLinear

MAX_ROUNDS = 200
PRICE_TOL = 1e-12


@dataclass(frozen=True)
class GridConfig:
    truncation_k: float = 50.0
    step: float | None = None          # absolute step; default sigma * step_fraction
    step_fraction: float = 1e-3
    forced_points: tuple = ()
    max_points: int = 400_000

    def __post_init__(self):
        if self.truncation_k < 10:
            raise MalformedInputError("truncation multiplier K must be at least 10")
        if self.step is not None and not self.step > 0:
            raise MalformedInputError("grid step must be positive")
        object.__setattr__(self, "forced_points", tuple(float(v) for v in self.forced_points))

    def step_for(self, ms):
        return self.step if self.step is not None else ms.sigma * self.step_fraction


def _breakpoints(zeta):
    return tuple(getattr(zeta, "breakpoints", ()))


def truncated_range(ms: MomentSet, cfg: GridConfig):
    lo = max(ms.alpha, ms.mu - cfg.truncation_k * ms.sigma)
    hi = min(ms.beta, ms.mu + cfg.truncation_k * ms.sigma)
    # keep a feasible member on the grid even when an endpoint is close to mu
    cm = canonical_member(ms)
    return min(lo, cm.points[0]), max(hi, cm.points[-1])


def forced_candidates(ms: MomentSet, zeta, cfg: GridConfig):
    """Analytic atoms that must be representable on the grid."""
    mu, s = ms.mu, ms.sigma
    pts = [ms.alpha, ms.beta, 0.0, mu]
    if mu != 0:
        pts.append((mu * mu + s * s) / mu)
    kinks = list(_breakpoints(zeta))
    for x in kinks:
        f = math.hypot(x - mu, s)
        pts += [x, x - f, x + f]
    for a, b in zip(kinks[:-1], kinks[1:]):
        eta = 0.5 * (a + b)
        f = math.hypot(eta - mu, s)
        pts += [eta - f, eta + f]
    pts += list(canonical_member(ms).points)
    pts += list(cfg.forced_points)
    return [p for p in pts if math.isfinite(p)]


def build_grid(ms: MomentSet, zeta, cfg: GridConfig = GridConfig()):
    require_nonempty(ms)
    single = singleton_member(ms)
    if ms.sigma == 0:
        return np.array([ms.mu])
    lo, hi = truncated_range(ms, cfg)
    step = cfg.step_for(ms)
    n = int(math.floor((hi - lo) / step)) + 1
    if n > cfg.max_points:
        raise GridResolutionError(f"grid would have {n} points; raise the step or lower K")
    base = lo + step * np.arange(n)
    forced = np.array([p for p in forced_candidates(ms, zeta, cfg) if lo <= p <= hi] + [lo, hi])
    if single is not None:
        forced = np.concatenate([forced, single.points])
    forced = np.unique(forced)
    # drop base points that nearly coincide with a forced point
    if forced.size:
        j = np.clip(np.searchsorted(forced, base), 1, forced.size - 1) if forced.size > 1 else \
            np.zeros(base.size, dtype=int)
        near = np.minimum(np.abs(base - forced[j]),
                          np.abs(base - forced[np.maximum(j - 1, 0)]))
        base = base[near > 1e-9 * max(1.0, step)]
    return np.unique(np.concatenate([base, forced]))


def _eval(zeta, t):
    t = np.asarray(t, dtype=float)
    try:
        v = np.asarray(zeta(t), dtype=float)
        if v.shape == t.shape:
            return v
    except Exception:
        pass
    return np.array([float(zeta(float(x))) for x in t])


class _Master:
    """Restricted master LP over an explicit list of support points."""

    def __init__(self, ms: MomentSet, zeta):
        self.ms = ms
        self.zeta = zeta
        self.t = np.empty(0)
        self.z = np.empty(0)

    def add(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.size == 0:
            return 0
        allp = np.concatenate([self.t, pts])
        allz = np.concatenate([self.z, _eval(self.zeta, pts)])
        allp, idx = np.unique(allp, return_index=True)
        before = self.t.size
        self.t, self.z = allp, allz[idx]
        return self.t.size - before

    def solve(self):
        mu, s = self.ms.mu, self.ms.sigma
        u = (self.t - mu) / s
        A = np.vstack([np.ones_like(u), u, u * u])
        res = linprog(-self.z, A_eq=A, b_eq=[1.0, 0.0, 1.0], bounds=(0, None), method="highs",
                      options={"dual_feasibility_tolerance": 1e-10, "primal_feasibility_tolerance": 1e-10})
        if res.status == 2:
            raise InfeasibleGridError(_binding_constraint(self.ms, self.t))
        if res.status != 0:
            raise GridResolutionError(f"LP solver status {res.status}: {res.message}")
        theta = -np.asarray(res.eqlin.marginals, dtype=float)
        return res.x, -res.fun, theta


def _binding_constraint(ms, t):
    if t.size == 0:
        return "no grid points"
    if t.min() > ms.mu or t.max() < ms.mu:
        return f"mean constraint: mu={ms.mu} outside grid range [{t.min()}, {t.max()}]"
    return (f"second-moment constraint: mu^2 + sigma^2 = {ms.second_moment} not reachable "
            f"on grid [{t.min()}, {t.max()}]")


def _theta_to_lambda(theta, ms):
    """q(t) = th0 + th1 u + th2 u^2 with u = (t - mu)/sigma -> coefficients in t."""
    th0, th1, th2 = theta
    mu, s = ms.mu, ms.sigma
    l2 = th2 / (s * s)
    l1 = th1 / s - 2 * mu * th2 / (s * s)
    l0 = th0 - th1 * mu / s + th2 * mu * mu / (s * s)
    return float(l0), float(l1), float(l2)


def _continuous_pricing(zeta: PiecewiseLinear, theta, ms, far):
    """Most violated support points over the continuum, one per piece."""
    mu, s = ms.mu, ms.sigma
    th0, th1, th2 = theta
    a, b, sl, k = zeta.piece_arrays(ms.alpha, ms.beta)
    # work in u coordinates: zeta = sl*(mu + s u) + k
    au, bu = (a - mu) / s, (b - mu) / s
    su, ku = sl * s, sl * mu + k
    cand = []
    for arr in (au, bu):
        cand.append(arr[np.isfinite(arr)])
    if th2 > 0:
        star = np.clip((su - th1) / (2 * th2), au, bu)
        cand.append(star[np.isfinite(star)])
    u = np.unique(np.concatenate(cand)) if cand else np.empty(0)
    # an infinite piece with nonpositive curvature: push a far point in
    if th2 <= 0:
        if math.isinf(b[-1]):
            u = np.append(u, (far - mu) / s)
        if math.isinf(a[0]):
            u = np.append(u, (-far - mu) / s)
    t = mu + s * u
    viol = _eval(zeta, t) - (th0 + th1 * u + th2 * u * u)
    return t, viol


def solve_moment_problem(zeta, ms: MomentSet, cfg: GridConfig = GridConfig(), refine=True,
                         price_tol=PRICE_TOL, debug=False):
    """Grid LP (optionally refined over the continuum) with primal and dual."""
    require_nonempty(ms)
    single = singleton_member(ms)
    if ms.sigma == 0:
        v = float(_eval(zeta, [ms.mu])[0])
        return MomentSolution(single, v, v, None, "oracle", {"degenerate": True})
    grid = build_grid(ms, zeta, cfg)
    zg = _eval(zeta, grid)
    mu, s = ms.mu, ms.sigma
    ug = (grid - mu) / s
    master = _Master(ms, zeta)
    # start: forced points plus a coarse subsample
    lo, hi = truncated_range(ms, cfg)
    forced = [p for p in forced_candidates(ms, zeta, cfg) if lo <= p <= hi]
    coarse = grid[np.linspace(0, grid.size - 1, min(grid.size, 64)).astype(int)]
    if len(forced) > 200:
        # many kinks (tabulated integrands): let pricing pull the useful ones in
        forced = [p for p in canonical_member(ms).points if lo <= p <= hi]
    master.add(np.concatenate([coarse, forced]))
    scale = max(1.0, float(np.max(np.abs(zg))))
    rounds = 0
    can_refine = refine and isinstance(zeta, PiecewiseLinear)
    far = max(abs(hi), abs(lo), 1.0) * 4
    while True:
        rounds += 1
        if rounds > MAX_ROUNDS:
            warnings.warn("moment oracle hit the column-generation round limit", stacklevel=2)
            break
        p, val, theta = master.solve()
        t_solved = master.t
        rc = zg - (theta[0] + theta[1] * ug + theta[2] * ug * ug)
        new = []
        if rc.size and rc.max() > price_tol * scale:
            top = np.argpartition(-rc, min(16, rc.size - 1))[:16]
            top = top[rc[top] > price_tol * scale]
            new.extend(grid[top].tolist())
        if can_refine:
            t, viol = _continuous_pricing(zeta, theta, ms, far)
            mask = viol > price_tol * scale
            new.extend(t[mask].tolist())
            if theta[2] <= 0 and not mask.any() and math.isinf(ms.beta):
                far *= 4
            if debug:
                print(rounds, val, float(viol.max()) if viol.size else None, int(mask.sum()), theta)
        if not new or master.add(new) == 0:
            break
    # final solve state: p, val, theta
    lam = _theta_to_lambda(theta, ms)
    support, masses = _polish(t_solved[p > 1e-14], p[p > 1e-14], ms)
    dist = DiscreteDistribution(tuple(support), tuple(masses / masses.sum()))
    value = float(np.dot(_eval(zeta, dist.points), dist.masses))
    # rigorous repair of the dual
    if can_refine:
        viol, _ = zeta.max_minus_quadratic(lam, ms.alpha, ms.beta)
    else:
        viol = float(np.max(zg - (lam[0] + lam[1] * grid + lam[2] * grid * grid)))
    repair = max(0.0, viol) if math.isfinite(viol) else math.inf
    if isinstance(zeta, PiecewiseLinear):
        alt = _polish_dual(zeta, dist, ms)
        if alt is not None:
            v2, _ = zeta.max_minus_quadratic(alt, ms.alpha, ms.beta)
            r2 = max(0.0, v2) if math.isfinite(v2) else math.inf
            old_up = lam[0] + repair + lam[1] * mu + lam[2] * ms.second_moment
            new_up = alt[0] + r2 + alt[1] * mu + alt[2] * ms.second_moment
            if new_up <= old_up + 1e-12 * max(1.0, abs(old_up)):
                lam, repair = alt, r2
    cert = DualCertificate(lam[0] + repair, lam[1], lam[2], tuple(dist.points))
    upper = cert.dual_value(ms) if math.isfinite(repair) else math.inf
    info = {"grid_points": int(grid.size), "rounds": rounds, "refined": can_refine,
            "columns": int(master.t.size), "repair": repair,
            "truncated": math.isinf(ms.beta) or math.isinf(ms.alpha)}
    return MomentSolution(dist, value, upper, cert, "oracle", info)


def _polish_dual(zeta, dist, ms):
    """Quadratic fixed by complementary slackness on the support of ``dist``:
    contact at every atom, and matching slope at atoms inside a linear piece
    of zeta (away from the support ends).  None when underdetermined."""
    rows, rhs = [], []
    bp = np.asarray(zeta.breakpoints)
    for t in dist.points:
        rows.append([1.0, t, t * t])
        rhs.append(float(zeta(t)))
        at_kink = bp.size and np.min(np.abs(bp - t)) <= 1e-9 * max(1.0, abs(t))
        at_end = any(math.isfinite(e) and abs(t - e) <= 1e-9 * max(1.0, abs(e))
                     for e in (ms.alpha, ms.beta))
        if not at_kink and not at_end:
            rows.append([0.0, 1.0, 2 * t])
            rhs.append(zeta.slope_at(t))
    a = np.array(rows)
    if np.linalg.matrix_rank(a) < 3:
        return None
    lam, *_ = np.linalg.lstsq(a, np.array(rhs), rcond=None)
    return tuple(float(v) for v in lam)


def _polish(pts, masses, ms):
    """Re-solve the moment equations on the LP support to remove solver noise."""
    if 1 < pts.size <= 3:
        u = (pts - ms.mu) / ms.sigma
        A = np.vstack([np.ones_like(u), u, u * u])
        sol, *_ = np.linalg.lstsq(A, np.array([1.0, 0.0, 1.0]), rcond=None)
        if np.all(sol >= 0) and np.allclose(A @ sol, [1.0, 0.0, 1.0], atol=1e-12):
            return pts, sol
    return pts, masses


def primal_lp(zeta, ms: MomentSet, cfg: GridConfig = GridConfig(), refine=False):
    """Optimal grid measure (reduced to its support) and its value."""
    sol = solve_moment_problem(zeta, ms, cfg, refine=refine)
    return reduce_support(sol.distribution, from_vertex=True), sol.value


def dual_lp(zeta, ms: MomentSet, cfg: GridConfig = GridConfig(), refine=False):
    """Quadratic majorant on the grid (or the support, with refine) and its value."""
    sol = solve_moment_problem(zeta, ms, cfg, refine=refine)
    if sol.certificate is None:
        raise GridResolutionError("no finite dual on a degenerate moment set")
    if not math.isfinite(sol.upper):
        raise GridResolutionError("dual unbounded on this grid; use a finer grid or larger K")
    return sol.certificate, sol.upper


class SupportWarning(UserWarning):
    pass


def reduce_support(d: DiscreteDistribution, tol: float = 1e-12, from_vertex=False):
    """Merge near-duplicate atoms; vertex solutions must then have <= 3 atoms."""
    pts, ms = [], []
    for p, m in d:
        if pts and abs(p - pts[-1]) <= tol * max(1.0, abs(p)):
            if m > ms[-1]:
                pts[-1] = p
            ms[-1] += m
        else:
            pts.append(p)
            ms.append(m)
    out = DiscreteDistribution(tuple(pts), tuple(ms))
    if len(out) > 3:
        if from_vertex:
            raise AssertionError(f"vertex solution with {len(out)} atoms")
        warnings.warn(f"distribution keeps {len(out)} atoms", SupportWarning, stacklevel=2)
    return out
