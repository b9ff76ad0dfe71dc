"""Domain types shared by the solvers: moment sets, discrete measures,
stage data, instances, policies and dual certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (EmptyMomentSetError, MalformedInputError,
                     PolicyDomainError)
from .piecewise import PiecewiseLinear, PiecewiseLinearConvex, as_convex  # noqa: F401

INF = math.inf
MEMBERSHIP_TOL = 1e-9
MERGE_TOL = 1e-12
DROP_TOL = 1e-14


def _mul0(a, b):
    """Product with the 0 * inf = 0 convention."""
    if a == 0 or b == 0:
        return 0.0
    return a * b


@dataclass(frozen=True)
class MomentSet:
    """All measures on [alpha, beta] with mean mu and std sigma."""
    alpha: float
    beta: float
    mu: float
    sigma: float

    @classmethod
    def nonnegative(cls, mu, sigma):
        return cls(0.0, INF, float(mu), float(sigma))

    @property
    def second_moment(self):
        return self.mu ** 2 + self.sigma ** 2

    @property
    def variance(self):
        return self.sigma ** 2

    @property
    def is_halfline(self):
        """Support equal to [0, inf)."""
        return self.alpha == 0.0 and self.beta == INF

    @property
    def is_singleton(self):
        return singleton_member(self) is not None

    def contains_point(self, x, tol=0.0):
        return self.alpha - tol <= x <= self.beta + tol

    def f(self, z):
        """sqrt((z - mu)^2 + sigma^2)."""
        return np.hypot(np.asarray(z, dtype=float) - self.mu, self.sigma) if np.ndim(z) else \
            math.hypot(z - self.mu, self.sigma)


@dataclass(frozen=True)
class Validation:
    nonempty: bool
    reason: str = ""

    def __bool__(self):
        return self.nonempty


def validate_moment_set(ms: MomentSet) -> Validation:
    vals = (ms.alpha, ms.beta, ms.mu, ms.sigma)
    if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vals):
        raise MalformedInputError("moment set has missing or NaN fields")
    if ms.alpha > ms.beta:
        raise MalformedInputError(f"alpha={ms.alpha} exceeds beta={ms.beta}")
    if ms.sigma < 0:
        raise MalformedInputError(f"sigma={ms.sigma} is negative")
    if not (ms.alpha <= ms.mu <= ms.beta):
        return Validation(False, f"mean {ms.mu} outside support [{ms.alpha}, {ms.beta}]")
    room = _mul0(ms.beta - ms.mu, ms.mu - ms.alpha)
    # tiny relative slack so that boundary sets given in decimal survive
    if ms.sigma ** 2 > room * (1 + 1e-12) + 1e-300:
        return Validation(False, f"variance {ms.sigma ** 2} exceeds (beta-mu)(mu-alpha)={room}")
    return Validation(True)


def require_nonempty(ms):
    v = validate_moment_set(ms)
    if not v:
        raise EmptyMomentSetError(v.reason)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite-support probability measure, normalised on construction."""
    points: tuple
    masses: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        ms = np.asarray(self.masses, dtype=float).ravel()
        if pts.size != ms.size or pts.size == 0:
            raise MalformedInputError("need matching, nonempty points and masses")
        if np.any(~np.isfinite(pts)) or np.any(~np.isfinite(ms)):
            raise MalformedInputError("points and masses must be finite")
        if np.any(ms < -DROP_TOL):
            raise MalformedInputError("negative mass")
        order = np.argsort(pts, kind="stable")
        pts, ms = pts[order], np.clip(ms[order], 0.0, None)
        # merge near-duplicates, keeping the location of the heavier atom
        out_p, out_m = [pts[0]], [ms[0]]
        for p, m in zip(pts[1:], ms[1:]):
            if abs(p - out_p[-1]) <= MERGE_TOL * max(1.0, abs(p)):
                if m > out_m[-1]:
                    out_p[-1] = p
                out_m[-1] += m
            else:
                out_p.append(p)
                out_m.append(m)
        out_p, out_m = np.array(out_p), np.array(out_m)
        keep = out_m >= DROP_TOL
        out_p, out_m = out_p[keep], out_m[keep]
        total = out_m.sum()
        if out_p.size == 0 or abs(total - 1.0) > 1e-9:
            raise MalformedInputError(f"masses sum to {total}, not 1")
        out_m = out_m / total
        object.__setattr__(self, "points", tuple(out_p.tolist()))
        object.__setattr__(self, "masses", tuple(out_m.tolist()))

    @classmethod
    def point_mass(cls, x):
        return cls((float(x),), (1.0,))

    @classmethod
    def from_dict(cls, d: Mapping[float, float]):
        return cls(tuple(d.keys()), tuple(d.values()))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(zip(self.points, self.masses))

    def __repr__(self):
        inner = ", ".join(f"{p:.10g}: {m:.10g}" for p, m in self)
        return f"DiscreteDistribution({{{inner}}})"

    @property
    def atoms(self):
        return list(zip(self.points, self.masses))

    @property
    def mean(self):
        return float(np.dot(self.points, self.masses))

    @property
    def second_moment(self):
        p = np.asarray(self.points)
        return float(np.dot(p * p, self.masses))

    @property
    def variance(self):
        return self.second_moment - self.mean ** 2

    def expect(self, func):
        p = np.asarray(self.points)
        try:
            vals = np.asarray(func(p), dtype=float)
            if vals.shape != p.shape:
                raise ValueError
        except Exception:
            vals = np.array([func(float(x)) for x in p], dtype=float)
        return float(np.dot(vals, self.masses))

    def cdf(self, x):
        p = np.asarray(self.points)
        return float(np.sum(np.asarray(self.masses)[p <= x]))

    def mass_at(self, x, tol=1e-9):
        for p, m in self:
            if abs(p - x) <= tol:
                return m
        return 0.0

    def approx_equal(self, other, tol=1e-9):
        if len(self) != len(other):
            return False
        return all(abs(p - q) <= tol and abs(m - n) <= tol
                   for (p, m), (q, n) in zip(self, other))


def singleton_member(ms: MomentSet):
    """The unique member of ms when the set is a single measure, else None."""
    require_nonempty(ms)
    if ms.sigma == 0:
        return DiscreteDistribution.point_mass(ms.mu)
    if math.isfinite(ms.alpha) and math.isfinite(ms.beta):
        room = (ms.beta - ms.mu) * (ms.mu - ms.alpha)
        if abs(ms.sigma ** 2 - room) <= 1e-12 * max(1.0, room):
            w = ms.beta - ms.alpha
            return DiscreteDistribution((ms.alpha, ms.beta),
                                        ((ms.beta - ms.mu) / w, (ms.mu - ms.alpha) / w))
    return None


def canonical_member(ms: MomentSet):
    """A simple member of ms with at most two atoms.

    Uses mu +- sigma when that fits in the support; otherwise the two-point
    measure with one atom at the binding endpoint.
    """
    require_nonempty(ms)
    single = singleton_member(ms)
    if single is not None:
        return single
    mu, s = ms.mu, ms.sigma
    if ms.alpha <= mu - s and mu + s <= ms.beta:
        return DiscreteDistribution((mu - s, mu + s), (0.5, 0.5))
    if mu - s < ms.alpha:
        a = ms.alpha
        b = mu + s * s / (mu - a)
        p = (b - mu) / (b - a)
        return DiscreteDistribution((a, b), (p, 1 - p))
    b = ms.beta
    a = mu - s * s / (b - mu)
    p = (b - mu) / (b - a)
    return DiscreteDistribution((a, b), (p, 1 - p))


def check_membership(d: DiscreteDistribution, ms: MomentSet, tol: float = MEMBERSHIP_TOL) -> bool:
    if any(not ms.contains_point(p, tol) for p in d.points):
        return False
    # moments are compared on the scale of the set (large means would make
    # a purely absolute test fail on round-off alone)
    if abs(d.mean - ms.mu) > tol * max(1.0, abs(ms.mu)):
        return False
    return abs(d.second_moment - ms.second_moment) <= tol * max(1.0, ms.second_moment)


@dataclass(frozen=True)
class StageParams:
    c: float
    b: float
    h: float
    demand: MomentSet

    @property
    def standing_assumptions(self):
        """True when b > c and h >= 0; other cost data are allowed but flagged."""
        return self.b > self.c and self.h >= 0


def newsvendor_cost(x, d, params: StageParams):
    return params.c * x + params.b * max(d - x, 0.0) + params.h * max(x - d, 0.0)


@dataclass(frozen=True)
class Instance:
    T: int
    rho: float
    y1: float
    stages: tuple

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.T < 1 or len(self.stages) != self.T:
            raise MalformedInputError(f"T={self.T} but {len(self.stages)} stages given")
        if not (0 < self.rho <= 1):
            raise MalformedInputError(f"rho={self.rho} outside (0, 1]")
        for t, st in enumerate(self.stages, 1):
            v = validate_moment_set(st.demand)
            if not v:
                raise EmptyMomentSetError(f"stage {t}: {v.reason}")

    def stage(self, t) -> StageParams:
        return self.stages[t - 1]

    def c_next(self, t):
        """c_{t+1} with c_{T+1} = 0."""
        return self.stages[t].c if t < self.T else 0.0


@dataclass(frozen=True)
class DualCertificate:
    lambda0: float
    lambda1: float
    lambda2: float
    contact_points: tuple = ()

    @property
    def lam(self):
        return (self.lambda0, self.lambda1, self.lambda2)

    def __call__(self, t):
        t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
        return self.lambda0 + self.lambda1 * t + self.lambda2 * t * t

    def dual_value(self, ms: MomentSet):
        return self.lambda0 + self.lambda1 * ms.mu + self.lambda2 * ms.second_moment

    def scaled(self, k, add=(0.0, 0.0, 0.0)):
        """k * q + (a0 + a1 t + a2 t^2)."""
        return DualCertificate(k * self.lambda0 + add[0], k * self.lambda1 + add[1],
                               k * self.lambda2 + add[2], self.contact_points)

    def shifted(self, delta):
        return DualCertificate(self.lambda0 + delta, self.lambda1, self.lambda2, self.contact_points)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise MalformedInputError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x):
        return cls(float(x), float(x))

    @property
    def is_point(self):
        return self.lo == self.hi

    def contains(self, x, tol=0.0):
        return self.lo - tol <= x <= self.hi + tol

    def project(self, x):
        return min(max(x, self.lo), self.hi)

    def __repr__(self):
        if self.is_point:
            return f"{{{self.lo:.10g}}}"
        return f"[{self.lo:.10g}, {self.hi:.10g}]"


# ------------------------------------------------------------------ policies
class BaseStockPolicy:
    """Order up to level x*_t whenever inventory is below it."""

    def __init__(self, levels: Sequence[float]):
        self.levels = tuple(float(v) for v in levels)

    @property
    def T(self):
        return len(self.levels)

    def order_up_to(self, t, y):
        return max(y, self.levels[t - 1])

    def __repr__(self):
        return f"BaseStockPolicy(levels={self.levels})"


class TabularPolicy:
    """x1 plus, for stages 2..T, a table y -> x (or a callable rule)."""

    key_tol = 1e-9

    def __init__(self, x1: float, rules: Sequence[Mapping[float, float] | Callable] = ()):
        self.x1 = float(x1)
        self.rules = tuple(dict(r) if isinstance(r, Mapping) else r for r in rules)
        for t, r in enumerate(self.rules, 2):
            if isinstance(r, dict):
                for y, x in r.items():
                    if x < y - 1e-12 * max(1.0, abs(y)):
                        raise MalformedInputError(
                            f"stage {t}: order-up-to {x} below inventory {y} (negative order)")

    @property
    def T(self):
        return 1 + len(self.rules)

    def order_up_to(self, t, y=None):
        if t == 1:
            return self.x1
        rule = self.rules[t - 2]
        if callable(rule):
            x = float(rule(y))
            if x < y - 1e-9 * max(1.0, abs(y)):
                raise MalformedInputError(f"stage {t}: rule orders a negative amount at y={y}")
            return x
        for key, x in rule.items():
            if abs(key - y) <= self.key_tol * max(1.0, abs(y)):
                return x
        raise PolicyDomainError(
            f"stage {t} table has no entry for inventory level y={y:.12g}; "
            f"covered levels: {sorted(rule)}")

    def __repr__(self):
        parts = [f"x1={self.x1:.10g}"]
        for t, r in enumerate(self.rules, 2):
            if isinstance(r, dict):
                body = ", ".join(f"{y:.10g}->{x:.10g}" for y, x in sorted(r.items()))
                parts.append(f"x{t}: {{{body}}}")
            else:
                parts.append(f"x{t}: {getattr(r, '__name__', 'rule')}")
        return "TabularPolicy(" + "; ".join(parts) + ")"


def order_up_to(policy, t, y):
    return policy.order_up_to(t, y)


@dataclass(frozen=True, eq=False)
class MomentSolution:
    """Outcome of a worst-case expectation computation.

    ``value`` is attained by ``distribution`` (a lower bound on the sup);
    ``upper`` is the dual value of ``certificate`` (an upper bound when the
    certificate majorises the integrand).  ``provenance`` is one of
    'closed-form', 'oracle' or 'heuristic'.
    """
    distribution: DiscreteDistribution
    value: float
    upper: float
    certificate: DualCertificate | None = None
    provenance: str = "closed-form"
    info: dict = field(default_factory=dict)

    @property
    def gap(self):
        return self.upper - self.value
