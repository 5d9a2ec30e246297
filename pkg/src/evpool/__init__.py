"""Capacity planning for EV fleets backed by a shared range-extender pool.

Plan minimal total battery capacity (personal packs plus an optional
shared pool) so that every driver's daily energy need is met with a
target probability. Scenario LPs give certified-conservative plans,
bisection and multi-trial heuristics trade that conservatism away against
held-out reliability estimates, and allocation-rule simulators check what
the pool delivers per driver.
"""

from .allocation import (RULE_KINDS, AllocationResult, AllocationRule,
                         allocate_fcfs, allocate_proportional,
                         allocate_utilitarian, apply_rule,
                         check_shortfall_minimizing, shortfall,
                         utilitarian_order)
from .analysis import (GapRow, GaussianFleetSpec, gaussian_gap,
                       gaussian_gap_experiment, gaussian_nonshared_opt,
                       gaussian_shared_feasible, gaussian_shared_pool,
                       mc_rectified_sum_mean, normal_quantile)
from .backend import BACKEND
from .core import (BatteryConfig, ScenarioSet, as_scenario_matrix, ceil_guard,
                   rng_from)
from .ingest import (DailyDemandSeries, EmpiricalDemandModel,
                     SyntheticFleetSpec, TripRecord, fit_histogram,
                     fit_histogram_from_samples, generate_synthetic_fleet,
                     models_from_json, models_to_json, parse_trip_log,
                     sample_scenarios)
from .lp import (FeasibilityReport, LinearProgram, LpSolution,
                 check_feasibility, dump_lp, solve_lp)
from .planner import (HeuristicPlan, PlannerParams, ReducedPlan,
                      binary_search_reduce, build_scenario_lp,
                      conservatism_heuristic, empirical_quantile,
                      plan_nonshared, scenario_count, solve_scenario_problem)
from .reliability import (ReliabilityEstimate, chernoff_sample_size,
                          estimate_aggregate_reliability,
                          estimate_min_reliability)

__version__ = "0.1.0"

__all__ = [
    "AllocationResult", "AllocationRule", "BACKEND", "BatteryConfig",
    "DailyDemandSeries", "EmpiricalDemandModel", "FeasibilityReport",
    "GapRow", "GaussianFleetSpec", "HeuristicPlan", "LinearProgram",
    "LpSolution", "PlannerParams", "ReducedPlan", "ReliabilityEstimate",
    "RULE_KINDS", "ScenarioSet", "SyntheticFleetSpec", "TripRecord",
    "allocate_fcfs", "allocate_proportional", "allocate_utilitarian",
    "apply_rule", "as_scenario_matrix", "binary_search_reduce",
    "build_scenario_lp", "ceil_guard", "check_feasibility",
    "check_shortfall_minimizing", "chernoff_sample_size",
    "conservatism_heuristic", "dump_lp", "empirical_quantile",
    "estimate_aggregate_reliability", "estimate_min_reliability",
    "fit_histogram", "fit_histogram_from_samples", "gaussian_gap",
    "gaussian_gap_experiment", "gaussian_nonshared_opt",
    "gaussian_shared_feasible", "gaussian_shared_pool",
    "generate_synthetic_fleet", "mc_rectified_sum_mean", "models_from_json",
    "models_to_json", "normal_quantile", "parse_trip_log", "plan_nonshared",
    "rng_from", "sample_scenarios", "scenario_count", "shortfall",
    "solve_lp", "solve_scenario_problem", "utilitarian_order",
    "__version__",
]
