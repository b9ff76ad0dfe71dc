import math

import pytest

from robust_stock.core_types import MomentSet, StageParams
from robust_stock.moment_oracle import GridConfig


@pytest.fixture
def cfg():
    return GridConfig()


def nv(mu, sigma, c=0.0, b=1.0, h=1.0, alpha=0.0, beta=math.inf):
    return StageParams(c, b, h, MomentSet(alpha, beta, mu, sigma))
