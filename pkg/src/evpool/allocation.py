"""Allocation rules for the shared pool: proportional, FCFS, utilitarian.

All three rules are budget-feasible and shortfall-minimizing: whenever the
pool covers the aggregate shortfall, every driver receives at least its
shortfall. That property is what makes aggregate-shortfall planning an
inner approximation of the per-driver problem, and it is checked per
sample, not statistically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SATISFY_TOL, BatteryConfig

RULE_KINDS = ("proportional", "fcfs", "utilitarian")


@dataclass
class AllocationRule:
    """Rule selector; FCFS carries the seed its permutations derive from."""

    kind: str
    permutation_seed: int | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind == "fcfs" and self.permutation_seed is None:
            self.permutation_seed = 0


@dataclass
class AllocationResult:
    """Per-driver disbursement of the pool for one realized demand vector."""

    allocations: np.ndarray
    satisfied: np.ndarray

    def validate(self, config: BatteryConfig) -> None:
        if np.any(self.allocations < 0):
            raise ValueError("allocations must be non-negative")
        if float(self.allocations.sum()) > config.shared + SATISFY_TOL:
            raise ValueError("allocations exceed the shared pool")


def _check_lengths(config: BatteryConfig, demand: np.ndarray) -> np.ndarray:
    demand = np.asarray(demand, dtype=np.float64)
    if demand.shape != (config.n_drivers,):
        raise ValueError(
            f"demand length {demand.shape} does not match fleet size "
            f"{config.n_drivers}"
        )
    return demand


def shortfall(config: BatteryConfig, demand) -> np.ndarray:
    """(demand_i - personal_i)_+ per driver, in kWh."""
    demand = _check_lengths(config, demand)
    return np.maximum(demand - config.personal, 0.0)


def _satisfied(config: BatteryConfig, demand: np.ndarray,
               allocations: np.ndarray) -> np.ndarray:
    return config.personal + allocations >= demand - SATISFY_TOL


def allocate_proportional(config: BatteryConfig, demand) -> AllocationResult:
    """Split the pool in proportion to shortfalls; zeros when none exist."""
    demand = _check_lengths(config, demand)
    sf = shortfall(config, demand)
    total = float(sf.sum())
    if total > 0.0:
        alloc = config.shared * sf / total
    else:
        alloc = np.zeros_like(sf)
    return AllocationResult(alloc, _satisfied(config, demand, alloc))


def allocate_fcfs(config: BatteryConfig, demand, permutation) -> AllocationResult:
    """Serve drivers in the given order; each receives its full shortfall
    iff the running shortfall total up to and including it fits the pool,
    and nothing otherwise (the literal no-skip prefix rule)."""
    demand = _check_lengths(config, demand)
    perm = np.asarray(permutation, dtype=np.int64)
    n = config.n_drivers
    if perm.shape != (n,) or np.any(np.sort(perm) != np.arange(n)):
        raise ValueError("permutation must be a bijection on range(n_drivers)")
    sf = shortfall(config, demand)
    prefix = np.cumsum(sf[perm])
    # the 1e-12-relative term keeps the boundary stable when the pool was
    # sized from the same shortfalls summed in a different order
    served_in_order = prefix <= config.shared + SATISFY_TOL + 1e-12 * prefix
    alloc = np.zeros(n)
    alloc[perm] = np.where(served_in_order, sf[perm], 0.0)
    return AllocationResult(alloc, _satisfied(config, demand, alloc))


def utilitarian_order(sf: np.ndarray) -> np.ndarray:
    """Ascending-shortfall service order, ties broken by driver index."""
    return np.argsort(sf, kind="stable")


def allocate_utilitarian(config: BatteryConfig, demand) -> AllocationResult:
    """Prefix rule under the ascending-shortfall order: serves the largest
    possible number of drivers."""
    demand = _check_lengths(config, demand)
    sf = shortfall(config, demand)
    return allocate_fcfs(config, demand, utilitarian_order(sf))


def apply_rule(rule, config: BatteryConfig, demand,
               permutation=None) -> AllocationResult:
    """Dispatch on a rule name, AllocationRule, or custom callable.

    FCFS needs an order: pass one explicitly, or it is drawn uniformly
    from the rule's permutation_seed.
    """
    if callable(rule) and not isinstance(rule, AllocationRule):
        return rule(config, demand)
    kind = rule.kind if isinstance(rule, AllocationRule) else str(rule)
    if kind == "proportional":
        return allocate_proportional(config, demand)
    if kind == "utilitarian":
        return allocate_utilitarian(config, demand)
    if kind == "fcfs":
        if permutation is None:
            from .core import rng_from

            seed = rule.permutation_seed if isinstance(rule, AllocationRule) else 0
            permutation = rng_from(seed, "fcfs").permutation(config.n_drivers)
        return allocate_fcfs(config, demand, permutation)
    raise ValueError(f"unknown rule {rule!r}")


def check_shortfall_minimizing(rule, config: BatteryConfig, demand,
                               permutation=None) -> bool:
    """Witness for the defining implication of shortfall-minimizing rules:
    if the pool covers the aggregate shortfall, every driver must receive
    at least its shortfall. Vacuously true when the pool falls short."""
    demand = _check_lengths(config, demand)
    sf = shortfall(config, demand)
    if config.shared < float(sf.sum()) - SATISFY_TOL:
        return True
    result = apply_rule(rule, config, demand, permutation=permutation)
    return bool(np.all(result.allocations >= sf - SATISFY_TOL))
