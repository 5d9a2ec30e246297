"""Shared domain types and numeric helpers used across the toolkit.

Keeps the leaf modules import-cycle free: planner, allocation and
reliability all consume :class:`BatteryConfig` and :class:`ScenarioSet`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Absolute slack for satisfaction/budget comparisons at constraint
# boundaries (kWh). Problem quantities are O(1)-O(1e3) kWh, so this
# absorbs round-off without being visible at problem scale.
SATISFY_TOL = 1e-12

# Feasibility/optimality tolerance for LP-derived quantities.
LP_TOL = 1e-9


def ceil_guard(x: float) -> int:
    """Ceiling that ignores float dust just above an exact integer.

    Sample-size formulas and quantile indices are of the form ceil(f(...))
    where f is supposed to hit integers exactly in edge cases, but the
    arithmetic leaves dust (summing 0.9 ten times gives
    9.000000000000002). A raw ceil would round such values up one step;
    shaving 1e-9 + 1e-12|x| first keeps them put.
    """
    return math.ceil(x - 1e-9 - 1e-12 * abs(x))


def rng_from(seed: int, *key) -> np.random.Generator:
    """Deterministic generator for (seed, *key), independent across keys.

    Built on SeedSequence spawn keys, so streams for distinct keys never
    overlap and results do not depend on the order streams are consumed.
    Non-integer key parts are hashed into the 32-bit spawn-key space.
    """
    parts = []
    for part in key:
        if isinstance(part, (int, np.integer)):
            parts.append(int(part) & 0xFFFFFFFF)
        else:
            # Stable across processes (not Python's randomized hash()).
            h = 2166136261
            for b in str(part).encode():
                h = ((h ^ b) * 16777619) & 0xFFFFFFFF
            parts.append(h)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(parts))
    return np.random.default_rng(ss)


@dataclass
class BatteryConfig:
    """Personal battery capacities plus one shared pool capacity, in kWh.

    Attributes:
        personal: one non-negative capacity per driver.
        shared: capacity of the shared pool; 0 encodes the non-shared setting.
    """

    personal: np.ndarray
    shared: float = 0.0

    def __post_init__(self):
        self.personal = np.asarray(self.personal, dtype=np.float64)
        self.shared = float(self.shared)
        self.validate()

    def validate(self) -> None:
        if self.personal.ndim != 1:
            raise ValueError("personal capacities must be a 1-d sequence")
        if self.personal.size == 0:
            raise ValueError("fleet must contain at least one driver")
        if np.any(self.personal < 0) or not np.all(np.isfinite(self.personal)):
            raise ValueError("personal capacities must be finite and >= 0")
        if self.shared < 0 or not math.isfinite(self.shared):
            raise ValueError("shared capacity must be finite and >= 0")

    @property
    def n_drivers(self) -> int:
        return self.personal.size

    @property
    def total(self) -> float:
        """Total deployed capacity, the objective of every planning problem."""
        return float(self.personal.sum() + self.shared)

    def to_dict(self, empirical_alpha: float | None = None) -> dict:
        out = {
            "personal": [float(v) for v in self.personal],
            "shared": self.shared,
            "total": self.total,
            "empirical_alpha": empirical_alpha,
        }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BatteryConfig":
        return cls(personal=np.asarray(d["personal"], dtype=np.float64),
                   shared=float(d["shared"]))


@dataclass
class ScenarioSet:
    """An N x M matrix of sampled daily energy requirements (kWh).

    Column j holds one jointly sampled demand vector (one value per driver);
    columns are independent draws.

    Attributes:
        demands: N x M float matrix, all entries >= 0.
        seed: seed the matrix was sampled from, if known.
    """

    demands: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.demands = np.ascontiguousarray(self.demands, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.demands.ndim != 2:
            raise ValueError("demand matrix must be 2-d (drivers x scenarios)")
        if self.demands.shape[1] < 1:
            raise ValueError("scenario set needs at least one column")
        if np.any(self.demands < 0) or not np.all(np.isfinite(self.demands)):
            raise ValueError("demands must be finite and >= 0")

    @property
    def n_drivers(self) -> int:
        return self.demands.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.demands.shape[1]

    def prefix(self, m: int) -> "ScenarioSet":
        """First m scenario columns, as used by the bisection reduction."""
        if not 1 <= m <= self.n_scenarios:
            raise ValueError(f"prefix length {m} outside [1, {self.n_scenarios}]")
        return ScenarioSet(self.demands[:, :m], seed=self.seed)

    def to_csv(self) -> str:
        """One row per driver, one column per scenario; full float precision."""
        lines = [",".join(format(v, ".17g") for v in row) for row in self.demands]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ScenarioSet":
        rows = [
            [float(tok) for tok in line.split(",")]
            for line in text.strip().splitlines()
            if line.strip()
        ]
        return cls(np.asarray(rows, dtype=np.float64))


def as_scenario_matrix(scenarios) -> np.ndarray:
    """Accept a ScenarioSet or a bare matrix; return the C-contiguous matrix."""
    if isinstance(scenarios, ScenarioSet):
        return scenarios.demands
    arr = np.ascontiguousarray(scenarios, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected an N x M demand matrix")
    return arr
