"""Multistage solvers: stagewise DP, two-stage static formulation, time consistency."""
from .common import (adjusted_c, check_strong_tc, check_weak_tc, eta_hat, psi_hat,
                     stage_cost, static_bound_terms, static_lower_bound, strong_tc_margins)
from .consistency import TCReport, classify_consistency
from .dp import DPResult, ValueFunction, dp_solve, dynamic_evaluate_policy
from .static import (StaticEvalResult, StaticOptimum, base_stock_static_lower_bound,
                     best_base_stock_bound, first_stage_floor, static_evaluate_policy,
                     static_optimize_two_stage, vertex_measures)
