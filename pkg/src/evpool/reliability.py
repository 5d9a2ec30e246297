"""Empirical reliability estimation and Chernoff sample sizing.

Per-driver satisfaction probabilities are estimated by simulating an
allocation rule over every column of an evaluation scenario set; the
Chernoff-plus-union-bound sample size makes all N estimates accurate to
epsilon with confidence 1 - delta simultaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .allocation import AllocationRule
from .core import SATISFY_TOL, BatteryConfig, as_scenario_matrix, ceil_guard, rng_from


@dataclass
class ReliabilityEstimate:
    """Empirical satisfaction probabilities and their sample provenance.

    Attributes:
        per_driver: fraction of evaluation days each driver was satisfied.
        min_over_drivers: worst driver's fraction (the planning metric).
        aggregate: fraction of days the pool covered the aggregate shortfall.
        n_samples: evaluation columns used.
        epsilon/delta: accuracy/confidence the sample size was chosen for,
            when the caller sized it; informational otherwise.
    """

    per_driver: np.ndarray
    min_over_drivers: float
    aggregate: float
    n_samples: int
    epsilon: float | None = None
    delta: float | None = None

    def __post_init__(self):
        self.per_driver = np.asarray(self.per_driver, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if np.any(self.per_driver < 0) or np.any(self.per_driver > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0 <= self.aggregate <= 1:
            raise ValueError("aggregate probability must lie in [0, 1]")
        if abs(self.min_over_drivers - float(self.per_driver.min())) > 1e-15:
            raise ValueError("min_over_drivers must be min(per_driver)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def to_dict(self) -> dict:
        return {
            "per_driver": [float(v) for v in self.per_driver],
            "min": self.min_over_drivers,
            "aggregate": self.aggregate,
            "n_samples": self.n_samples,
        }


def chernoff_sample_size(n_drivers: int, epsilon: float, delta: float) -> int:
    """m = ceil(4 ln(2N/delta) / epsilon^2).

    With m evaluation samples, every one of the N per-driver estimates is
    within epsilon of its true probability except with probability delta
    (Chernoff bound on each driver, union bound across drivers).
    """
    if n_drivers < 1:
        raise ValueError("n_drivers must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return ceil_guard(4.0 * math.log(2.0 * n_drivers / delta) / (epsilon * epsilon))


def _satisfaction_matrix(config: BatteryConfig, rule, demands: np.ndarray,
                         seed) -> np.ndarray:
    """(N, M) satisfaction indicators for one rule over all columns."""
    personal = config.personal
    pool = config.shared
    sf = demands - personal[:, None]
    np.maximum(sf, 0.0, out=sf)
    kind = rule.kind if isinstance(rule, AllocationRule) else str(rule)
    if kind == "proportional":
        agg = sf.sum(axis=0)
        safe = np.where(agg > 0.0, agg, 1.0)
        alloc = pool * sf / safe
        return personal[:, None] + alloc >= demands - SATISFY_TOL
    if kind == "fcfs":
        if isinstance(rule, AllocationRule) and rule.permutation_seed is not None:
            seed = rule.permutation_seed
        rng = rng_from(seed, "fcfs-perms")
        # row j of the key matrix fixes column j's permutation, so the
        # draw is deterministic per (seed, column index)
        orders = np.argsort(rng.random((demands.shape[1], personal.size)), axis=1)
        return backend.prefix_satisfied(np.ascontiguousarray(sf),
                                        np.ascontiguousarray(orders), pool,
                                        SATISFY_TOL)
    if kind == "utilitarian":
        orders = np.argsort(sf.T, axis=1, kind="stable")
        return backend.prefix_satisfied(np.ascontiguousarray(sf),
                                        np.ascontiguousarray(orders), pool,
                                        SATISFY_TOL)
    raise ValueError(f"unknown rule {rule!r}")


def estimate_min_reliability(config: BatteryConfig, rule, eval_scenarios,
                             seed: int = 0, epsilon: float | None = None,
                             delta: float | None = None) -> ReliabilityEstimate:
    """Simulate the rule on every evaluation column and average
    per-driver satisfaction indicators.

    FCFS draws one fresh uniform permutation per column, derived from the
    seed (or the rule's own permutation_seed when it carries one).
    """
    demands = as_scenario_matrix(eval_scenarios)
    if demands.shape[0] != config.n_drivers:
        raise ValueError(
            f"scenario rows {demands.shape[0]} do not match fleet size "
            f"{config.n_drivers}"
        )
    sat = _satisfaction_matrix(config, rule, demands, seed)
    per_driver = sat.mean(axis=1)
    agg = estimate_aggregate_reliability(config, demands)
    return ReliabilityEstimate(
        per_driver=per_driver,
        min_over_drivers=float(per_driver.min()),
        aggregate=agg,
        n_samples=demands.shape[1],
        epsilon=epsilon,
        delta=delta,
    )


def estimate_aggregate_reliability(config: BatteryConfig, eval_scenarios) -> float:
    """Fraction of evaluation columns whose aggregate shortfall fits the pool."""
    demands = as_scenario_matrix(eval_scenarios)
    if demands.shape[0] != config.n_drivers:
        raise ValueError(
            f"scenario rows {demands.shape[0]} do not match fleet size "
            f"{config.n_drivers}"
        )
    agg = backend.aggregate_shortfall(demands, config.personal)
    covered = agg <= config.shared + SATISFY_TOL
    return float(covered.mean())
