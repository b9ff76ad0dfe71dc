"""Two-stage multistage-static formulation: policy evaluation and optimisation.

Nature picks a product measure Q1 x Q2 before any demand is seen, so for a
policy pi = (x1, x2(.)) the cost is

    sup_{Q1, Q2} E[ g(D1) + rho * Psi_2(x2(x1 - D1), D2) ]

with g(d1) = c1 (x1 - y1) + Psi_1(x1, d1) + rho c2 (x2(x1 - d1) - (x1 - d1)).
For fixed Q1 the inner problem in Q2 is an ordinary moment problem with the
piecewise-linear integrand phi_Q1(d2) = E_Q1 Psi_2(x2(x1 - D1), d2).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..core_types import (DiscreteDistribution, DualCertificate, Instance,
                          TabularPolicy, canonical_member, singleton_member)
from ..errors import (GridResolutionError, MalformedInputError, NotSupportedError,
                      PolicyDomainError)
from ..moment_oracle import GridConfig, _theta_to_lambda, solve_moment_problem
from ..piecewise import PiecewiseLinear
from ..single_stage import worst_case_expectation
from .common import eta_hat, hinge

CERT_TOL = 1e-8


@dataclass
class StaticEvalResult:
    value: float                       # attained by worst_pair
    worst_pair: tuple                  # (Q1, Q2)
    certificate: DualCertificate | None = None
    exact: bool = False
    upper: float = math.inf
    provenance: str = "closed-form"
    info: dict = field(default_factory=dict)

    @property
    def gap(self):
        return self.upper - self.value


# ------------------------------------------------------------ helpers
def _require_two_stage(inst):
    if inst.T != 2:
        raise NotSupportedError("static evaluation and optimisation are implemented for T = 2 only")


def _x2(pi, x1, d1):
    return pi.order_up_to(2, x1 - d1)


def _g(pi, inst: Instance, d1):
    """Stage-1 cost plus the discounted stage-2 ordering cost, as a function of d1."""
    s1, s2 = inst.stage(1), inst.stage(2)
    x1 = pi.x1
    y2 = x1 - d1
    return (s1.c * (x1 - inst.y1) + s1.b * max(d1 - x1, 0.0) + s1.h * max(x1 - d1, 0.0)
            + inst.rho * s2.c * (_x2(pi, x1, d1) - y2))


def _mixture(st, levels, masses):
    """d -> sum_a p_a Psi(x_a, d), piecewise linear and convex."""
    f = PiecewiseLinear.constant(0.0)
    for x, p in zip(levels, masses):
        f = f + p * hinge(x, st)
    return f


def _check_first_stage(pi, inst):
    if pi.x1 < inst.y1 - 1e-9 * max(1.0, abs(inst.y1)):
        raise MalformedInputError(f"x1 = {pi.x1} is below the initial inventory y1 = {inst.y1}")


def vertex_measures(points, ms, tol=1e-10):
    """All members of the moment set supported on at most three of ``points``
    that are vertices of the feasible polytope."""
    pts = sorted(set(float(p) for p in points if ms.alpha - 1e-12 <= p <= ms.beta + 1e-12))
    if ms.sigma == 0:
        return [DiscreteDistribution.point_mass(ms.mu)] if any(abs(p - ms.mu) <= tol for p in pts) else []
    out = []
    rhs = np.array([1.0, 0.0, 1.0])
    for k in (2, 3):
        for sub in itertools.combinations(pts, k):
            u = (np.array(sub) - ms.mu) / ms.sigma
            A = np.vstack([np.ones(k), u, u * u])
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.all(sol >= -tol) and np.allclose(A @ sol, rhs, atol=tol):
                sol = np.clip(sol, 0.0, None)
                d = DiscreteDistribution(sub, tuple(sol / sol.sum()))
                if len(d) == k and not any(d.approx_equal(e) for e in out):
                    out.append(d)
    return out


def _table_points(pi, inst):
    """Stage-1 demands at which a table rule is defined."""
    rule = pi.rules[0]
    ms = inst.stage(1).demand
    return [pi.x1 - y for y in rule if ms.alpha - 1e-9 <= pi.x1 - y <= ms.beta + 1e-9]


def _eval_fixed_q1(pi, inst, q1, cfg):
    """Exact value of sup_Q2 for a fixed stage-1 measure."""
    s2 = inst.stage(2)
    levels = [_x2(pi, pi.x1, a) for a in q1.points]
    zeta = _mixture(s2, levels, q1.masses)
    sol = worst_case_expectation(zeta, s2.demand, cfg)
    base = sum(p * _g(pi, inst, a) for a, p in q1)
    return base, sol


# ------------------------------------------------------------ evaluation
def static_evaluate_policy(pi: TabularPolicy, inst: Instance, cfg: GridConfig = GridConfig(),
                           certificate=None, stage1_candidates=None, tol=CERT_TOL):
    """Worst-case expected cost of ``pi`` when nature commits to Q1 x Q2 up front.

    Routes: singleton stage-1 set (exact); stage 1 restricted to a finite
    set of points (table rules) or an explicit candidate list (exact over
    that set); otherwise alternating maximisation for the value plus an
    upper bound from a quadratic majorant of sup_Q1 phi_Q1.
    ``certificate`` may supply that majorant (coefficients in d).
    """
    _require_two_stage(inst)
    _check_first_stage(pi, inst)
    s1, s2 = inst.stage(1), inst.stage(2)
    rho = inst.rho
    single = singleton_member(s1.demand)
    if single is not None:
        base, sol = _eval_fixed_q1(pi, inst, single, cfg)
        value = base + rho * sol.value
        upper = base + rho * sol.upper
        exact = sol.provenance == "closed-form" or sol.gap <= tol * max(1.0, abs(sol.value))
        return StaticEvalResult(value, (single, sol.distribution), sol.certificate, exact,
                                upper, sol.provenance, {"route": "singleton stage 1"})
    if stage1_candidates is not None or isinstance(pi.rules[0], dict):
        if stage1_candidates is not None:
            cands = list(stage1_candidates)
            route = "candidate list"
        else:
            pts = _table_points(pi, inst)
            cands = vertex_measures(pts, s1.demand)
            route = "table support"
            if not cands:
                raise PolicyDomainError(
                    "stage-2 table covers no stage-1 measure in the ambiguity set; "
                    f"covered stage-1 demands: {sorted(pts)}")
        best = None
        for q1 in cands:
            base, sol = _eval_fixed_q1(pi, inst, q1, cfg)
            val = base + rho * sol.value
            if best is None or val > best[0]:
                best = (val, base + rho * sol.upper, q1, sol)
        val, upper, q1, sol = best
        exact = route == "table support" and all(
            _eval_fixed_q1(pi, inst, q, cfg)[1].provenance == "closed-form" for q in [q1])
        return StaticEvalResult(val, (q1, sol.distribution), sol.certificate, exact, upper,
                                sol.provenance, {"route": route, "candidates": len(cands)})
    return _alternating(pi, inst, cfg, certificate, tol)


def _stage1_grid(ms, cfg):
    from ..moment_oracle import build_grid
    return build_grid(ms, PiecewiseLinear.constant(0.0), cfg)


class _Memo:
    """Vectorised d1 -> x2(x1 - d1) with a cache (rules may be slow callables)."""

    def __init__(self, pi):
        self.pi = pi
        self.cache = {}

    def __call__(self, d1):
        d1 = np.atleast_1d(np.asarray(d1, dtype=float))
        out = np.empty(d1.size)
        for i, d in enumerate(d1):
            v = self.cache.get(d)
            if v is None:
                v = _x2(self.pi, self.pi.x1, d)
                self.cache[d] = v
            out[i] = v
        return out


def _psi2(st, x, d):
    return st.b * np.maximum(d - x, 0.0) + st.h * np.maximum(x - d, 0.0)


def _alternating(pi, inst, cfg, certificate, tol, max_iter=30):
    s1, s2 = inst.stage(1), inst.stage(2)
    ms1, ms2 = s1.demand, s2.demand
    rho = inst.rho
    x2 = _Memo(pi)

    def g_vec(d1):
        d1 = np.atleast_1d(np.asarray(d1, dtype=float))
        y2 = pi.x1 - d1
        return (s1.c * (pi.x1 - inst.y1) + s1.b * np.maximum(d1 - pi.x1, 0.0)
                + s1.h * np.maximum(pi.x1 - d1, 0.0) + rho * s2.c * (x2(d1) - y2))

    def pair_value(q1, q2):
        lv = x2(np.array(q1.points))
        inner = sum(p * q2.expect(lambda d, x=x: _psi2(s2, x, d)) for x, p in zip(lv, q1.masses))
        return float(np.dot(g_vec(np.array(q1.points)), q1.masses) + rho * inner)

    starts = [canonical_member(ms1)]
    if math.isfinite(ms1.alpha) and ms1.mu > ms1.alpha:
        r = ms1.mu + ms1.variance / (ms1.mu - ms1.alpha)
        if r <= ms1.beta:
            starts.append(DiscreteDistribution((ms1.alpha, r), (1 - (ms1.mu - ms1.alpha) / (r - ms1.alpha),
                                                               (ms1.mu - ms1.alpha) / (r - ms1.alpha))))
    if math.isfinite(ms1.beta) and ms1.beta > ms1.mu:
        l = ms1.mu - ms1.variance / (ms1.beta - ms1.mu)
        if l >= ms1.alpha:
            w = (ms1.beta - ms1.mu) / (ms1.beta - l)
            starts.append(DiscreteDistribution((l, ms1.beta), (w, 1 - w)))
    best = None
    last_cert = None
    for q1 in starts:
        prev = -math.inf
        for _ in range(max_iter):
            lv = x2(np.array(q1.points))
            sol2 = worst_case_expectation(_mixture(s2, lv, q1.masses), ms2, cfg)
            q2 = sol2.distribution

            def zeta1(d1, q2=q2):
                d1 = np.atleast_1d(np.asarray(d1, dtype=float))
                xv = x2(d1)
                inner = np.zeros(d1.size)
                for d, p in q2:
                    inner += p * _psi2(s2, xv, d)
                return g_vec(d1) + rho * inner
            sol1 = worst_case_expectation(zeta1, ms1, cfg, refine=False)
            q1_new = sol1.distribution
            v = pair_value(q1_new, q2)
            v_old = pair_value(q1, q2)
            if v_old >= v:
                q1_new, v = q1, v_old
            if best is None or v > best[0]:
                best = (v, q1_new, q2)
                last_cert = sol2.certificate
            if v <= prev + 1e-12 * max(1.0, abs(v)):
                break
            prev = v
            q1 = q1_new
    value, q1, q2 = best
    cert = certificate if certificate is not None else last_cert
    upper, parts = _static_upper(pi, inst, cfg, cert, x2, g_vec)
    exact = upper - value <= tol * max(1.0, abs(value))
    info = {"route": "alternating", **parts}
    return StaticEvalResult(value, (q1, q2), cert, exact, upper, "oracle" if not exact else "closed-form", info)


def _static_upper(pi, inst, cfg, cert, x2, g_vec, n_cells=200):
    """sup_Q1 E g(D1) + rho * (E q(D2) + deficit), where deficit bounds
    sup_d [sup_Q1 phi_Q1(d) - q(d)] via convexity of phi_Q1 in d."""
    s1, s2 = inst.stage(1), inst.stage(2)
    ms1, ms2 = s1.demand, s2.demand
    parts = {}
    gsol = worst_case_expectation(g_vec, ms1, cfg, refine=False)
    parts["stage1_upper"] = gsol.upper
    if cert is None:
        return math.inf, parts
    lam = cert.lam if hasattr(cert, "lam") else tuple(cert)
    grid = _stage1_grid(ms1, cfg)
    xs = x2(grid)
    m, M = float(xs.min()), float(xs.max())
    # sup / inf of E x2 over Q1, needed on the tails where phi_Q1 is affine
    xhi = worst_case_expectation(lambda d: x2(d), ms1, cfg, refine=False).upper
    xlo = -worst_case_expectation(lambda d: -x2(d), ms1, cfg, refine=False).upper
    deficit = -math.inf
    lo2, hi2 = ms2.alpha, ms2.beta
    if lo2 < m:
        left = PiecewiseLinear.affine(-s2.h, s2.h * xhi)
        v, _ = left.max_minus_quadratic(lam, lo2, min(m, hi2))
        deficit = max(deficit, v)
    if hi2 > M:
        right = PiecewiseLinear.affine(s2.b, -s2.b * xlo)
        v, _ = right.max_minus_quadratic(lam, max(M, lo2), hi2)
        deficit = max(deficit, v)
    a, b = max(m, lo2), min(M, hi2)
    if b > a:
        nodes = np.linspace(a, b, n_cells + 1)
        vals = []
        for u in nodes:
            sol = solve_moment_problem(lambda d, u=u: _psi2(s2, x2(d), u), ms1, cfg, refine=False)
            vals.append(sol.upper)
        vals = np.array(vals)
        slopes = np.diff(vals) / np.diff(nodes)
        interp = PiecewiseLinear.from_values(nodes, vals, slopes[0], slopes[-1])
        v, _ = interp.max_minus_quadratic(lam, a, b)
        deficit = max(deficit, v)
    elif b == a and lo2 <= a <= hi2:
        sol = solve_moment_problem(lambda d: _psi2(s2, x2(d), a), ms1, cfg, refine=False)
        deficit = max(deficit, sol.upper - (lam[0] + lam[1] * a + lam[2] * a * a))
    parts["majorant_deficit"] = deficit
    repair = max(0.0, deficit)
    eq = lam[0] + lam[1] * ms2.mu + lam[2] * ms2.second_moment
    parts["majorant_value"] = eq
    return gsol.upper + inst.rho * (eq + repair), parts


# ------------------------------------------------------------ base-stock lower bound
def base_stock_static_lower_bound(inst: Instance, level1, level2, stage1_measures, cfg=None):
    """Lower bound on the static cost of a base-stock policy from fixed
    stage-1 measures: for each Q1, Jensen in the stage-2 decision gives
    E_Q1 g(D1) + rho * G2(E_Q1 x2) with G2(x) = sup_Q2 E Psi_2(x, D2)."""
    _require_two_stage(inst)
    s1, s2 = inst.stage(1), inst.stage(2)
    x1 = max(inst.y1, level1)
    best = -math.inf
    for q1 in stage1_measures:
        pts = np.array(q1.points)
        y2 = x1 - pts
        x2 = np.maximum(y2, level2)
        g = (s1.c * (x1 - inst.y1) + s1.b * np.maximum(pts - x1, 0.0)
             + s1.h * np.maximum(x1 - pts, 0.0) + inst.rho * s2.c * (x2 - y2))
        mbar = float(np.dot(x2, q1.masses))
        G2 = worst_case_expectation(hinge(mbar, s2), s2.demand, cfg).value
        best = max(best, float(np.dot(g, q1.masses)) + inst.rho * G2)
    return best


def first_stage_floor(inst: Instance, x1, stage1_measures, cfg=None):
    """Lower bound on the static cost of any policy whose first decision is x1:
    E_Q1[c1(x1 - y1) + Psi_1(x1, D1) - rho c2 (x1 - D1)] + rho * eta_hat_2."""
    s1, s2 = inst.stage(1), inst.stage(2)
    e2, _ = eta_hat(2, inst, cfg)
    best = -math.inf
    for q1 in stage1_measures:
        v = q1.expect(lambda d: s1.c * (x1 - inst.y1) + s1.b * max(d - x1, 0.0)
                      + s1.h * max(x1 - d, 0.0) - inst.rho * s2.c * (x1 - d))
        best = max(best, v + inst.rho * e2)
    return best


def best_base_stock_bound(inst: Instance, stage1_measures, level2_grid, cfg=None):
    """min over the level grid of base_stock_static_lower_bound with the
    first level at or below y1 (all such levels give the same policy)."""
    vals = np.array([base_stock_static_lower_bound(inst, inst.y1, l2, stage1_measures, cfg)
                     for l2 in level2_grid])
    k = int(np.argmin(vals))
    return float(vals[k]), float(level2_grid[k])


# ------------------------------------------------------------ optimisation
@dataclass
class StaticOptimum:
    policy: TabularPolicy
    value: float                  # exact static evaluation of ``policy``
    lower: float                  # LP lower bound on the optimum
    exact: bool
    evaluation: StaticEvalResult = None
    info: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.policy
        yield self.value

    @property
    def x1(self):
        return self.policy.x1

    @property
    def table(self):
        return dict(self.policy.rules[0])


class _StaticLP:
    """Semi-infinite LP for min over (x1, x2_a) of max_j [ E_{Q1^j} g + rho sup_Q2 ... ].

    The inner sup is replaced by its moment dual: a quadratic q^j majorising
    phi_j(d) = sum_a p_a^j Psi_2(x2_a, d), represented in standardised
    coordinates u = (d - mu2)/sigma2 so that E q^j = th0 + th2.  Majorisation
    is imposed by cuts generated at maximisers of phi_j - q^j.
    """

    def __init__(self, inst: Instance, candidates, box=1e7):
        self.inst = inst
        self.cands = [DiscreteDistribution(c.points, c.masses) for c in candidates]
        self.atoms = sorted(set(a for c in self.cands for a in c.points))
        s2 = inst.stage(2)
        self.ms2 = s2.demand
        self.single2 = singleton_member(self.ms2)
        nA, nJ = len(self.atoms), len(self.cands)
        self.ix1, self.it = 0, 1
        self.ix2 = list(range(2, 2 + nA))
        self.ie = list(range(2 + nA, 2 + 2 * nA))
        off = 2 + 2 * nA
        if self.single2 is None:
            self.ith = [list(range(off + 3 * j, off + 3 * j + 3)) for j in range(nJ)]
            self.n = off + 3 * nJ
        else:
            nd = len(self.single2)
            self.iw = {(i, k): off + i * nd + k for i in range(nA) for k in range(nd)}
            self.n = off + nA * nd
        scale = max(1.0, abs(inst.y1), self.ms2.mu + 10 * self.ms2.sigma,
                    max(abs(a) for a in self.atoms))
        self.box = box * scale
        self.rows, self.rhs = [], []
        self._base_rows()
        self.cuts = set()
        if self.single2 is None:
            self._initial_cuts()

    # -- helpers
    def _row(self):
        return np.zeros(self.n)

    def _add(self, row, rhs):
        self.rows.append(row)
        self.rhs.append(rhs)

    def _base_rows(self):
        inst, s1, s2 = self.inst, self.inst.stage(1), self.inst.stage(2)
        rho = inst.rho
        for i, a in enumerate(self.atoms):
            # x2_a >= x1 - a
            r = self._row(); r[self.ix1] = 1.0; r[self.ix2[i]] = -1.0; self._add(r, a)
            # e_a >= b1 (a - x1), e_a >= h1 (x1 - a)
            r = self._row(); r[self.ix1] = -s1.b; r[self.ie[i]] = -1.0; self._add(r, -s1.b * a)
            r = self._row(); r[self.ix1] = s1.h; r[self.ie[i]] = -1.0; self._add(r, s1.h * a)
            if self.single2 is not None:
                for k, (d, _) in enumerate(self.single2):
                    w = self.iw[(i, k)]
                    r = self._row(); r[self.ix2[i]] = -s2.b; r[w] = -1.0; self._add(r, -s2.b * d)
                    r = self._row(); r[self.ix2[i]] = s2.h; r[w] = -1.0; self._add(r, s2.h * d)
        # t >= F_j
        for j, c in enumerate(self.cands):
            r = self._row()
            r[self.it] = -1.0
            const = -s1.c * inst.y1
            r[self.ix1] += s1.c
            for a, p in c:
                i = self.atoms.index(a)
                r[self.ie[i]] += p
                r[self.ix2[i]] += rho * s2.c * p
                r[self.ix1] -= rho * s2.c * p
                const += rho * s2.c * p * a
                if self.single2 is not None:
                    for k, (d, qd) in enumerate(self.single2):
                        r[self.iw[(i, k)]] += rho * p * qd
            if self.single2 is None:
                th = self.ith[j]
                r[th[0]] += rho
                r[th[2]] += rho
            self._add(r, -const)

    def _cut(self, j, tau, pattern):
        """sum_a p_a s_a (tau - x2_a) <= q^j(tau) for a fixed sign pattern."""
        key = (j, round(tau, 12), pattern)
        if key in self.cuts:
            return False
        self.cuts.add(key)
        s2 = self.inst.stage(2)
        mu, sg = self.ms2.mu, self.ms2.sigma
        u = (tau - mu) / sg
        r = self._row()
        rhs = 0.0
        for (a, p), up in zip(self.cands[j], pattern):
            s = s2.b if up else -s2.h
            i = self.atoms.index(a)
            r[self.ix2[i]] -= p * s
            rhs -= p * s * tau
        th = self.ith[j]
        r[th[0]] -= 1.0
        r[th[1]] -= u
        r[th[2]] -= u * u
        self._add(r, rhs)
        return True

    def _initial_cuts(self):
        ms = self.ms2
        lo = ms.alpha if math.isfinite(ms.alpha) else ms.mu - 50 * ms.sigma
        hi = ms.beta if math.isfinite(ms.beta) else ms.mu + 50 * ms.sigma
        taus = list(np.linspace(max(lo, ms.mu - 6 * ms.sigma), min(hi, ms.mu + 6 * ms.sigma), 41))
        taus += [lo, hi, ms.mu + 200 * ms.sigma if math.isinf(ms.beta) else hi]
        for j, c in enumerate(self.cands):
            n = len(c)
            pats = list(itertools.product((False, True), repeat=n)) if n <= 4 else \
                [tuple([False] * n), tuple([True] * n)]
            for tau in taus:
                for pat in pats:
                    self._cut(j, float(tau), pat)

    def _bounds(self, x1_lo=None, x1_hi=None, x2_bounds=None):
        b = [(-self.box, self.box)] * self.n
        lo = self.inst.y1 if x1_lo is None else max(self.inst.y1, x1_lo)
        b[self.ix1] = (lo, self.box if x1_hi is None else x1_hi)
        if self.single2 is None and math.isinf(self.ms2.beta):
            for th in self.ith:
                b[th[2]] = (0.0, self.box)
        if x2_bounds:
            for i, (l, h) in x2_bounds.items():
                b[self.ix2[i]] = (max(-self.box, l), min(self.box, h))
        return b

    def _separate(self, z, tol):
        """Add cuts at the maximisers of phi_j - q^j; returns the largest violation."""
        if self.single2 is not None:
            return 0.0
        s2 = self.inst.stage(2)
        worst = 0.0
        x2 = z[self.ix2]
        for j, c in enumerate(self.cands):
            lam = _theta_to_lambda(z[self.ith[j]], self.ms2)
            phi = _mixture(s2, [x2[self.atoms.index(a)] for a in c.points], c.masses)
            a_, b_, s_, k_ = phi.piece_arrays(self.ms2.alpha, self.ms2.beta)
            cands = [t for t in np.concatenate([a_, b_]) if math.isfinite(t)]
            if lam[2] > 0:
                cands += list(np.clip((s_ - lam[1]) / (2 * lam[2]), a_, b_))
            cands = np.array([t for t in cands if math.isfinite(t)])
            viol = phi(cands) - (lam[0] + lam[1] * cands + lam[2] * cands * cands)
            vmax, _ = phi.max_minus_quadratic(lam, self.ms2.alpha, self.ms2.beta)
            worst = max(worst, vmax)
            order = np.argsort(-viol)[:8]
            for k in order:
                if viol[k] > tol:
                    tau = float(cands[k])
                    pat = tuple(bool(tau >= x2[self.atoms.index(a)]) for a in c.points)
                    self._cut(j, tau, pat)
            if not math.isfinite(vmax):
                far = self.ms2.mu + 1e3 * self.ms2.sigma * (1 + len(self.cuts))
                self._cut(j, far, tuple([True] * len(c)))
        return worst

    def solve(self, obj, extra=(), x1_lo=None, x1_hi=None, x2_bounds=None, tol=1e-10, max_rounds=400):
        """Minimise obj . z subject to the cuts generated so far, refining until
        the majorant constraints hold to ``tol``.  Returns (z, fun, violation)
        or None when infeasible."""
        bounds = self._bounds(x1_lo, x1_hi, x2_bounds)
        scale = max(1.0, abs(self.inst.y1))
        for _ in range(max_rounds):
            A = np.array(self.rows + [r for r, _ in extra])
            bvec = np.array(self.rhs + [v for _, v in extra])
            res = linprog(obj, A_ub=A, b_ub=bvec, bounds=bounds, method="highs",
                          options={"dual_feasibility_tolerance": 1e-10,
                                   "primal_feasibility_tolerance": 1e-10})
            if res.status == 2:
                return None
            if res.status != 0:
                raise GridResolutionError(f"static LP failed: {res.message}")
            z = res.x
            viol = self._separate(z, tol * max(scale, abs(z[self.it])))
            if viol <= tol * max(scale, abs(z[self.it])):
                if np.any(np.abs(z[[self.ix1] + self.ix2]) >= 0.999 * self.box):
                    raise GridResolutionError("static LP solution hit the safety box")
                return z, float(res.fun), max(viol, 0.0)
        raise GridResolutionError("static LP cut loop did not converge")

    def t_objective(self):
        c = np.zeros(self.n)
        c[self.it] = 1.0
        return c

    def near_optimal_row(self, tstar, delta):
        r = np.zeros(self.n)
        r[self.it] = 1.0
        return (r, tstar + delta)

    def policy(self, z):
        x1 = float(z[self.ix1])
        table = {}
        for i, a in enumerate(self.atoms):
            y = x1 - a
            table[y] = max(float(z[self.ix2[i]]), y)
        return TabularPolicy(x1, [table])


def _candidates(inst, stage1_candidates):
    ms1 = inst.stage(1).demand
    single = singleton_member(ms1)
    if single is not None:
        return [single]
    if stage1_candidates is None:
        raise NotSupportedError("non-singleton stage-1 ambiguity needs an explicit list of "
                                "candidate stage-1 measures")
    return list(stage1_candidates)


def _max_x1(lp: _StaticLP, tstar):
    """Largest x1 among (LP-)near-optimal solutions."""
    delta = 1e-9 * max(1.0, abs(tstar))
    c = np.zeros(lp.n)
    c[lp.ix1] = -1.0
    out = lp.solve(c, [lp.near_optimal_row(tstar, delta)])
    return None if out is None else float(out[0][lp.ix1])


def _common_level(inst, pol, cfg, stage1_candidates):
    """Best policy of the form x2(y) = max(z, y) with the same x1."""
    from .common import golden_min
    x1 = pol.x1
    ys = sorted(pol.rules[0])
    xs = [pol.rules[0][y] for y in ys]

    def make(z):
        return TabularPolicy(x1, [{y: max(z, y) for y in ys}])

    def f(z):
        return static_evaluate_policy(make(z), inst, cfg, stage1_candidates=stage1_candidates).value
    lo, hi = min(xs) - 1.0, max(xs) + 1.0
    z, v = golden_min(f, lo, hi, xtol=1e-12)
    return make(z), v


def static_optimize_two_stage(inst: Instance, cfg: GridConfig = GridConfig(),
                              stage1_candidates=None, evaluate=True):
    """Optimal static policy for T = 2 on the reachable stage-2 inventories.

    Solved as a linear program in (x1, x2 per stage-1 atom, dual quadratics)
    with cutting planes.  Ties are broken towards the largest x1 and then
    towards a common stage-2 level, each accepted only when the exact
    static value does not get worse.  The reported value is the exact static
    evaluation of the returned policy; ``lower`` is the LP bound.
    """
    _require_two_stage(inst)
    cands = _candidates(inst, stage1_candidates)
    sc = None if singleton_member(inst.stage(1).demand) is not None else stage1_candidates
    lp = _StaticLP(inst, cands)
    out = lp.solve(lp.t_objective())
    if out is None:
        raise GridResolutionError("static LP infeasible")
    z, tstar, _ = out
    pol = lp.policy(z)
    info = {"cuts": len(lp.cuts), "lp_value": tstar}
    if not evaluate:
        return StaticOptimum(pol, tstar, tstar, False, None, info)

    def value(p):
        return static_evaluate_policy(p, inst, cfg, stage1_candidates=sc).value
    best_v = value(pol)
    accept = 1e-10 * max(1.0, abs(best_v))
    x1max = _max_x1(lp, tstar)
    if x1max is not None and x1max > pol.x1 + 1e-9 * max(1.0, abs(pol.x1)):
        # largest x1 whose LP value stays within ``accept`` of the optimum
        def lp_at(x1):
            return lp.solve(lp.t_objective(), x1_lo=x1, x1_hi=x1)
        good, bad = pol.x1, x1max
        o = lp_at(bad)
        if o is not None and o[1] <= tstar + accept:
            good = bad
        else:
            for _ in range(60):
                mid = 0.5 * (good + bad)
                o = lp_at(mid)
                if o is not None and o[1] <= tstar + accept:
                    good = mid
                else:
                    bad = mid
                if bad - good <= 1e-11 * max(1.0, abs(good)):
                    break
        # only a genuinely flat stretch justifies moving; near a smooth
        # minimum the value tolerance alone allows O(sqrt(tol)) drift
        o = lp_at(good) if good - pol.x1 > 1e-3 * max(1.0, abs(pol.x1)) else None
        if o is not None:
            cand = lp.policy(o[0])
            v = value(cand)
            if v <= best_v + 10 * accept:
                pol, best_v = cand, min(v, best_v)
    if len(pol.rules[0]) > 1:
        cand, v = _common_level(inst, pol, cfg, sc)
        if v <= best_v + accept:
            pol, best_v = cand, v
    ev = static_evaluate_policy(pol, inst, cfg, stage1_candidates=sc)
    exact = ev.exact and ev.value - tstar <= CERT_TOL * max(1.0, abs(tstar))
    return StaticOptimum(pol, ev.value, tstar, exact, ev, info | {"lp": lp})
