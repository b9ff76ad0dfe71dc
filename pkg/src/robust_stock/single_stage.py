"""Single-stage robust newsvendor: closed forms, worst cases, certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_types import (DiscreteDistribution, DualCertificate, Interval,
                         MomentSet, MomentSolution, StageParams,
                         canonical_member, check_membership, require_nonempty,
                         singleton_member)
from .errors import NotApplicableError, OutOfRangeError, UnsupportedParametersError
from .piecewise import PiecewiseLinear, PiecewiseLinearConvex

BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class ScarfAuxiliary:
    mu: float
    sigma: float
    kappa: float
    chi: float
    threshold: float

    @classmethod
    def from_params(cls, p: StageParams):
        mu, sigma = p.demand.mu, p.demand.sigma
        kappa = (p.b - p.h - 2 * p.c) / (p.b + p.h)
        chi = mu + kappa * sigma / math.sqrt(1 - kappa * kappa)
        return cls(mu, sigma, kappa, chi, (mu * mu + sigma * sigma) / (2 * mu))

    def f(self, z):
        return math.hypot(z - self.mu, self.sigma)


def scarf_applicable(p: StageParams):
    """Reason string when the closed form does not apply, else ''."""
    ms = p.demand
    if not ms.is_halfline:
        return f"support [{ms.alpha}, {ms.beta}] is not [0, inf)"
    if not (ms.mu > 0 and ms.sigma > 0):
        return "need mu > 0 and sigma > 0"
    if not p.b > p.c:
        return f"need b > c (b={p.b}, c={p.c})"
    if not p.c + p.h > 0:
        return f"need c + h > 0 (c={p.c}, h={p.h})"
    return ""


def _require_scarf(p):
    why = scarf_applicable(p)
    if why:
        raise UnsupportedParametersError(why + "; use moment_oracle for these parameters")


def psi_value(x, params: StageParams):
    """Worst-case expected newsvendor cost sup_Q E[Psi(x, D)]."""
    _require_scarf(params)
    aux = ScarfAuxiliary.from_params(params)
    c, b, h = params.c, params.b, params.h
    mu, s2 = aux.mu, aux.sigma ** 2
    if x >= aux.threshold:
        return c * mu + 0.5 * (b + h) * aux.f(x) - 0.5 * (b - h - 2 * c) * (x - mu)
    if x >= 0:
        return ((h + c) * s2 - (b - c) * mu * mu) / (mu * mu + s2) * x + b * mu
    return b * mu - (b - c) * x


def scarf_case(params: StageParams):
    """'i', 'ii' or 'iii' according to sigma^2/mu^2 versus (b-c)/(h+c)."""
    _require_scarf(params)
    mu, s = params.demand.mu, params.demand.sigma
    lhs = s * s * (params.h + params.c)
    rhs = mu * mu * (params.b - params.c)
    if abs(lhs - rhs) <= BOUNDARY_RTOL * max(lhs, rhs):
        return "iii"
    return "i" if lhs > rhs else "ii"


def psi_minimize(params: StageParams, lower=None):
    """Minimiser set and value of psi, optionally subject to x >= lower."""
    aux = ScarfAuxiliary.from_params(params) if not scarf_applicable(params) else None
    case = scarf_case(params)
    mu, s = params.demand.mu, params.demand.sigma
    if case == "i":
        arg, val = Interval.point(0.0), params.b * mu
    elif case == "ii":
        arg = Interval.point(aux.chi)
        val = params.c * mu + math.sqrt((params.h + params.c) * (params.b - params.c)) * s
    else:
        arg, val = Interval(0.0, max(0.0, aux.chi)), params.b * mu
    if lower is None or lower <= arg.lo:
        return arg, val
    if lower <= arg.hi:
        return Interval(float(lower), arg.hi), val
    return Interval.point(float(lower)), psi_value(float(lower), params)


# ------------------------------------------------------------ worst cases
def abs_deviation_solution(x, ms: MomentSet) -> MomentSolution:
    """sup_Q E|x - D| over measures on [0, inf) with the given moments.

    Returns the two-point maximiser and the quadratic majorant of |x - d|;
    for x < 0 the integrand is linear on the support, every member is
    optimal and the canonical member {0, m2/mu} is returned.
    """
    mu, sigma = ms.mu, ms.sigma
    if not (ms.is_halfline and mu > 0 and sigma > 0):
        raise UnsupportedParametersError("closed form needs support [0, inf), mu > 0, sigma > 0")
    m2 = mu * mu + sigma * sigma
    thr = m2 / (2 * mu)
    if x >= thr:
        f = math.hypot(x - mu, sigma)
        lo, hi = x - f, x + f
        p_lo = sigma ** 2 / (sigma ** 2 + (lo - mu) ** 2)
        dist = DiscreteDistribution((lo, hi), (p_lo, 1 - p_lo))
        cert = DualCertificate(0.5 * (x * x / f + f), -x / f, 0.5 / f, (lo, hi))
        value = f
    elif x >= 0:
        dhat = m2 / mu
        dist = DiscreteDistribution((0.0, dhat), (1 - mu * mu / m2, mu * mu / m2))
        r = mu / m2
        cert = DualCertificate(x, 1 - 4 * x * r, 2 * x * r * r, (0.0, dhat))
        value = x + mu - 2 * x * mu * mu / m2
    else:
        dhat = m2 / mu
        dist = DiscreteDistribution((0.0, dhat), (1 - mu * mu / m2, mu * mu / m2))
        cert = DualCertificate(-x, 1.0, 0.0, (0.0, dhat))
        value = mu - x
    return MomentSolution(dist, value, cert.dual_value(ms), cert, "closed-form")


def _lift_abs_certificate(cert, scale, a0, a1):
    """Certificate for scale*|x-d| + a0 + a1*d given one for |x-d|."""
    return cert.scaled(scale, (a0, a1, 0.0))


def worst_case_two_point(x, params: StageParams):
    """Worst-case demand measure at order level x and the dual certificate
    for the integrand d -> Psi(x, d).  Defined for x >= 0; below zero the
    cost is linear in d and every member is a worst case."""
    _require_scarf(params)
    if x < 0:
        raise OutOfRangeError(f"x = {x} < 0: every member of the moment set is a worst case")
    c, b, h = params.c, params.b, params.h
    sol = abs_deviation_solution(x, params.demand)
    # Psi(x, d) = c x + (h - b)(x - d)/2 + (b + h)/2 |x - d|
    cert = _lift_abs_certificate(sol.certificate, 0.5 * (b + h),
                                 c * x + 0.5 * (h - b) * x, 0.5 * (b - h))
    return sol.distribution, cert


@dataclass(frozen=True)
class CCPAInstance:
    """zeta(d) = max{-d + c1, 0, d - c2} with the demand moment set."""
    c1: float
    c2: float
    ms: MomentSet

    def __post_init__(self):
        if not self.c1 < self.c2:
            raise NotApplicableError(f"need c1 < c2, got {self.c1}, {self.c2}")

    @property
    def eta(self):
        return 0.5 * (self.c1 + self.c2)

    @property
    def f_eta(self):
        return math.hypot(self.eta - self.ms.mu, self.ms.sigma)

    @property
    def quarter_product(self):
        mu, c1, c2 = self.ms.mu, self.c1, self.c2
        return 0.25 * (2 * mu - 3 * c1 + c2) * (3 * c2 - c1 - 2 * mu)

    @property
    def quarter_product_ok(self):
        s2 = self.ms.sigma ** 2
        return self.quarter_product <= s2 + BOUNDARY_RTOL * max(1.0, s2)

    @property
    def eta_condition_ok(self):
        return self.eta - self.f_eta >= -BOUNDARY_RTOL * max(1.0, abs(self.eta))

    @property
    def zeta(self):
        return PiecewiseLinearConvex.ccpa(self.c1, self.c2)

    def failures(self):
        out = []
        ms = self.ms
        if not ms.is_halfline:
            out.append("support is not [0, inf)")
        if not ms.sigma > 0:
            out.append("sigma must be positive")
        if not (self.c1 > 0 and self.c2 > 0):
            out.append("kinks must be positive")
        if not self.quarter_product_ok:
            out.append(f"quarter product {self.quarter_product:.6g} exceeds variance")
        if not self.eta_condition_ok:
            out.append("eta - f(eta) is negative")
        return out


def ccpa3_solve(inst: CCPAInstance):
    """Two-point worst case, dual and value for the three-piece objective."""
    bad = inst.failures()
    if bad:
        raise NotApplicableError("; ".join(bad) + "; use moment_oracle instead")
    ms = inst.ms
    mu, s2 = ms.mu, ms.sigma ** 2
    eta, f = inst.eta, inst.f_eta
    lo, hi = max(eta - f, 0.0), eta + f
    p_lo = s2 / (s2 + (eta - f - mu) ** 2)
    dist = DiscreteDistribution((lo, hi), (p_lo, 1 - p_lo))
    lam0 = 0.5 * (eta * eta + (eta - mu) ** 2 + s2) / f + 0.5 * (inst.c1 - inst.c2)
    cert = DualCertificate(lam0, -eta / f, 0.5 / f, (lo, hi))
    value = f - 0.5 * (inst.c2 - inst.c1)
    return dist, cert, value


# ------------------------------------------------------------ certificates
@dataclass(frozen=True)
class Verification:
    ok: bool
    reason: str = ""
    primal: float = math.nan
    dual: float = math.nan
    max_violation: float = math.nan

    def __bool__(self):
        return self.ok

    @property
    def gap(self):
        return self.dual - self.primal


def _scale(cert, ms, zeta_vals=()):
    terms = [1.0, abs(cert.lambda0), abs(cert.lambda1 * ms.mu), abs(cert.lambda2 * ms.second_moment)]
    terms.extend(abs(v) for v in zeta_vals)
    return max(terms)


def verify_certificate(d: DiscreteDistribution, cert: DualCertificate, zeta,
                       ms: MomentSet, tol: float = 1e-9) -> Verification:
    """Check that (d, cert) is a primal-dual optimal pair for sup E zeta.

    Conditions: d belongs to the moment set, the quadratic majorises zeta on
    the whole support and every atom of d is a contact point.  Majorisation
    is tested exactly: zeta - q is a quadratic on each linear piece, so its
    supremum is attained at a piece end or at the clipped stationary point.
    The tolerance is relative to the magnitude of the dual terms.
    """
    pts = np.asarray(d.points)
    zv = np.asarray(zeta(pts), dtype=float)
    qv = cert(pts)
    primal = float(np.dot(zv, d.masses))
    dual = cert.dual_value(ms)
    scale = _scale(cert, ms, zv)
    eps = tol * scale
    if not check_membership(d, ms, tol):
        return Verification(False, f"moment mismatch: mean {d.mean:.12g} vs {ms.mu}, "
                                   f"second moment {d.second_moment:.12g} vs {ms.second_moment}",
                            primal, dual)
    if isinstance(zeta, PiecewiseLinear):
        viol, where = zeta.max_minus_quadratic(cert.lam, ms.alpha, ms.beta)
    else:
        raise TypeError("verify_certificate needs a piecewise-linear integrand")
    if viol > eps:
        return Verification(False, f"majorization fails: zeta - q = {viol:.3g} at t = {where:.12g}",
                            primal, dual, viol)
    slack = np.abs(qv - zv)
    j = int(np.argmax(slack))
    if slack[j] > eps:
        return Verification(False, f"atom {pts[j]:.12g} not in contact set (q - zeta = {slack[j]:.3g})",
                            primal, dual, viol)
    if abs(dual - primal) > eps:
        return Verification(False, f"duality gap {dual - primal:.3g}", primal, dual, viol)
    return Verification(True, "ok", primal, dual, viol)


# ------------------------------------------------------------ recognised integrands
def closed_form_sup(zeta, ms: MomentSet):
    """Closed-form sup E zeta(D) when zeta restricted to the support is one of
    the covered shapes, else None.

    Covered (support [0, inf), mu > 0, sigma > 0): affine; two pieces
    (a + m d + k |p - d|); three pieces with equal slope jumps
    (a + s d + k max{-d + c1, 0, d - c2}) when the three-piece hypotheses hold.
    """
    if not isinstance(zeta, PiecewiseLinear):
        return None
    if not (ms.is_halfline and ms.mu > 0 and ms.sigma > 0):
        return None
    g = zeta.restrict(0.0, math.inf)
    bp, sl = g.breakpoints, g.slopes
    if len(sl) == 1:
        k = g(0.0)
        cert = DualCertificate(k, sl[0], 0.0, ())
        return MomentSolution(canonical_member(ms), k + sl[0] * ms.mu, cert.dual_value(ms), cert,
                              "closed-form", {"shape": "affine"})
    if len(sl) == 2:
        p = bp[0]
        m, k = 0.5 * (sl[0] + sl[1]), 0.5 * (sl[1] - sl[0])
        if k < 0:
            return None
        a = g(p) - m * p
        base = abs_deviation_solution(p, ms)
        cert = base.certificate.scaled(k, (a, m, 0.0))
        value = a + m * ms.mu + k * base.value
        return MomentSolution(base.distribution, value, cert.dual_value(ms), cert,
                              "closed-form", {"shape": "two-piece"})
    if len(sl) == 3:
        k1, k2 = sl[1] - sl[0], sl[2] - sl[1]
        if not (k1 > 0 and abs(k1 - k2) <= 1e-9 * max(1.0, abs(k1))):
            return None
        k = 0.5 * (k1 + k2)
        c1, c2 = bp
        try:
            dist, base_cert, base_val = ccpa3_solve(CCPAInstance(c1, c2, ms))
        except NotApplicableError:
            return None
        a = g(c1) - sl[1] * c1
        cert = base_cert.scaled(k, (a, sl[1], 0.0))
        value = a + sl[1] * ms.mu + k * base_val
        return MomentSolution(dist, value, cert.dual_value(ms), cert,
                              "closed-form", {"shape": "three-piece"})
    return None


def worst_case_expectation(zeta, ms: MomentSet, cfg=None, refine=True):
    """sup E zeta(D) over the moment set by the cheapest exact route.

    Singleton sets are integrated directly, recognised shapes use the closed
    forms, and everything else goes to the moment oracle.
    """
    require_nonempty(ms)
    single = singleton_member(ms)
    if single is not None:
        v = single.expect(zeta)
        return MomentSolution(single, v, v, None, "closed-form", {"shape": "singleton"})
    sol = closed_form_sup(zeta, ms)
    if sol is not None:
        return sol
    from .moment_oracle import GridConfig, solve_moment_problem
    return solve_moment_problem(zeta, ms, cfg or GridConfig(), refine=refine)


# ------------------------------------------------------------ randomized orders
def randomized_order_gap(q1: DiscreteDistribution, params: StageParams, cfg=None):
    """phi(q1) - b mu where phi(q1) is the worst-case cost of drawing the
    order quantity from q1; zero exactly when q1 is the point mass at 0."""
    _require_scarf(params)
    if scarf_case(params) != "i":
        raise NotApplicableError("needs sigma^2/mu^2 > (b - c)/(h + c)")
    ms = params.demand
    zeta = PiecewiseLinear.constant(0.0)
    for x, p in q1:
        zeta = zeta + p * PiecewiseLinearConvex.newsvendor(x, params.b, params.h, params.c)
    # inner bound: the canonical worst case {0, m2/mu} used for x = 0
    base = abs_deviation_solution(0.0, ms).distribution
    inner = base.expect(zeta)
    sol = worst_case_expectation(zeta, ms, cfg)
    phi = max(inner, sol.value)
    return phi - params.b * ms.mu


def classical_quantile(demand: DiscreteDistribution, params: StageParams):
    """Smallest x with F(x) >= (b - c)/(b + h)."""
    ratio = (params.b - params.c) / (params.b + params.h)
    cum = np.cumsum(demand.masses)
    j = int(np.searchsorted(cum, ratio - 1e-12, side="left"))
    j = min(j, len(cum) - 1)
    return float(demand.points[j])
