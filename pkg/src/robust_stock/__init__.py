"""Distributionally robust inventory control under moment ambiguity."""
from .core_types import (BaseStockPolicy, DiscreteDistribution, DualCertificate, Instance,
                         Interval, MomentSet, MomentSolution, StageParams, TabularPolicy,
                         canonical_member, check_membership, singleton_member,
                         validate_moment_set)
from .errors import (EmptyMomentSetError, GridResolutionError, InfeasibleGridError,
                     MalformedInputError, NotApplicableError, NotSupportedError,
                     OutOfRangeError, ParseError, PolicyDomainError, RobustStockError,
                     UnsupportedParametersError)
from .moment_oracle import GridConfig, dual_lp, primal_lp, solve_moment_problem
from .piecewise import PiecewiseLinear, PiecewiseLinearConvex
from .single_stage import (CCPAInstance, abs_deviation_solution, ccpa3_solve, psi_minimize,
                           psi_value, scarf_case, verify_certificate, worst_case_expectation,
                           worst_case_two_point)

__version__ = "0.1.0"
