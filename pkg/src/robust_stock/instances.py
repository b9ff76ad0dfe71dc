"""The four reference two-stage instances and a random instance sampler."""
from __future__ import annotations

import math

import numpy as np

from .core_types import INF, Instance, MomentSet, StageParams
from .errors import OutOfRangeError

EPS_MAX = (math.sqrt(6) - 2) / 2


def _stage(c, b, h, alpha, beta, mu, sigma):
    return StageParams(float(c), float(b), float(h), MomentSet(float(alpha), float(beta), float(mu), float(sigma)))


def not_weakly_consistent():
    """High initial stock blocks the stagewise minimisers (static 18 < dynamic)."""
    return Instance(2, 1.0, 10.0, (_stage(0, 2, 2, 1, 3, 2, 1), _stage(0, 1, 1, 0, INF, 8, 2)))


def weak_not_strong():
    """Static and dynamic optima agree (value 2) but not every static optimum is dynamic."""
    return Instance(2, 1.0, 0.0, (_stage(0, 1, 1, 1, 3, 2, 1), _stage(0, 1, 1, 0, INF, 10, 1)))


def strong_with_gap():
    """Same optimal policies, different optimal values (5 versus sqrt 26)."""
    return Instance(2, 1.0, 0.0, (_stage(0, 0, 0, 1, 3, 2, 1), _stage(2, 1, 1, 0, INF, 100, 5)))


def no_base_stock(eps=0.1):
    """Widened first-stage support; no base-stock policy is static-optimal."""
    if not 0 < eps < EPS_MAX:
        raise OutOfRangeError(f"epsilon must lie in (0, {EPS_MAX:.6f})")
    return Instance(2, 1.0, 10.0 - eps,
                    (_stage(0, 2, 2, 1 - eps, 3 + eps, 2, 1), _stage(0, 1, 1, 0, INF, 8, 3)))


def adversarial_stage1_measures(eps=0.1):
    """Two stage-1 members whose mixture defeats every base-stock policy."""
    from .core_types import DiscreteDistribution
    r = (1 + eps) ** 2
    return (DiscreteDistribution((1.0, 3.0), (0.5, 0.5)),
            DiscreteDistribution(((1 + 2 * eps) / (1 + eps), 3 + eps), (r / (r + 1), 1 / (r + 1))))


def strong_tc_instance():
    """Passes the coefficient-of-variation test at every stage."""
    return Instance(2, 1.0, 0.0, (_stage(0.5, 1, 1, 0, INF, 1, 2), _stage(0.5, 1, 1, 0, INF, 1, 2)))


def iid_instance():
    """Identical stages (no ordering cost, so the adjusted costs coincide too)."""
    return Instance(2, 0.95, 0.0, (_stage(0, 3, 1, 0, INF, 10, 2), _stage(0, 3, 1, 0, INF, 10, 2)))


EXAMPLES = {1: not_weakly_consistent, 2: weak_not_strong, 3: strong_with_gap, 4: no_base_stock}


# ------------------------------------------------------------ sampling
def sample_stage_params(rng: np.random.Generator, support=(0.0, INF)):
    """Random valid stage: mu in [1, 20], sigma up to 0.9 sqrt((beta-mu)(mu-alpha))
    (capped at 1.5 mu on the half line), c in [0, 2], b in (c, c + 5], h in [0, 5]
    with c + h > 0."""
    alpha, beta = support
    mu = rng.uniform(1.0, 20.0)
    if math.isfinite(beta):
        mu = rng.uniform(alpha + 0.1 * (beta - alpha), beta - 0.1 * (beta - alpha))
        smax = 0.9 * math.sqrt((beta - mu) * (mu - alpha))
    else:
        smax = 1.5 * mu
    sigma = rng.uniform(0.05 * smax, smax)
    c = rng.uniform(0.0, 2.0)
    b = c + rng.uniform(1e-3, 5.0)
    h = rng.uniform(0.0, 5.0)
    if c + h <= 1e-3:
        h = 0.5
    return StageParams(c, b, h, MomentSet(alpha, beta, mu, sigma))


def sample_two_stage(rng: np.random.Generator):
    """Two-stage instance with a singleton first stage (two atoms on [a, b])
    and a half-line second stage, for which static evaluation is exact."""
    a = rng.uniform(0.0, 5.0)
    w = rng.uniform(0.5, 6.0)
    p = rng.uniform(0.2, 0.8)
    mu1 = a * p + (a + w) * (1 - p)
    sigma1 = math.sqrt((a + w - mu1) * (mu1 - a))
    c1 = rng.uniform(0.0, 1.5)
    s1 = StageParams(c1, c1 + rng.uniform(0.5, 4.0), rng.uniform(0.1, 3.0),
                     MomentSet(a, a + w, mu1, sigma1))
    s2 = sample_stage_params(rng)
    rho = rng.uniform(0.7, 1.0)
    # keep the adjusted first-stage cost inside (-h1, b1) so the bound is finite
    c2 = min(s2.c, 0.9 * (s1.h + s1.c) / rho)
    s2 = StageParams(c2, max(s2.b, c2 + 0.5), s2.h, s2.demand)
    y1 = rng.uniform(-2.0, 8.0)
    return Instance(2, rho, y1, (s1, s2))
