"""Capacity planning: the per-driver quantile baseline, the sampled
aggregate-shortfall LP, and the conservatism-reduction search.

The shared-pool planner replaces the joint chance constraint with sampled
constraints: draw M demand columns, require the pool to cover the aggregate
shortfall in every one, and minimize total capacity. The sample count makes
the result feasible for the chance constraint with confidence 1 - delta,
but conservatively so; the bisection then shortens the scenario prefix
until the empirical reliability (measured on an independent evaluation set)
sits just above the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .core import BatteryConfig, as_scenario_matrix, ceil_guard, rng_from
from .ingest import sample_scenarios
from .lp import LinearProgram, _BoundedSimplex, solve_lp
from .reliability import chernoff_sample_size, estimate_aggregate_reliability

# Above this many rows the composed LP is solved by delayed cut generation
# instead; both routes return the same optimum (differentially tested).
_DIRECT_ROW_LIMIT = 1024

_SELECTION_RULES = ("min_total", "argmin_alpha")


@dataclass
class PlannerParams:
    """Knobs of the shared-pool planning pipeline.

    alpha is the target reliability, delta the confidence budget shared by
    the scenario-count and evaluation-sample rules, epsilon the additive
    accuracy of empirical reliability estimates, trials the number of
    independent heuristic restarts. selection picks among trials:
    "min_total" returns the cheapest trial that met the target (falling
    back, flagged, to the most reliable one), "argmin_alpha" the literal
    least-reliable trial. lp_method forces the scenario-LP route.
    """

    alpha: float
    delta: float = 0.05
    epsilon: float = 0.02
    trials: int = 1
    seed: int = 0
    selection: str = "min_total"
    lp_method: str = "auto"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.selection not in _SELECTION_RULES:
            raise ValueError(f"selection must be one of {_SELECTION_RULES}")
        if self.lp_method not in ("auto", "direct", "cuts"):
            raise ValueError("lp_method must be auto, direct or cuts")

    def to_dict(self) -> dict:
        out = {
            "alpha": self.alpha,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "trials": self.trials,
            "seed": self.seed,
        }
        if self.selection != "min_total":
            out["selection"] = self.selection
        if self.lp_method != "auto":
            out["lp_method"] = self.lp_method
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerParams":
        known = {"alpha", "delta", "epsilon", "trials", "seed",
                 "selection", "lp_method"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown planner config keys: {sorted(extra)}")
        if "alpha" not in d:
            raise ValueError("planner config requires alpha")
        return cls(**{k: d[k] for k in known if k in d})


def empirical_quantile(samples, alpha: float) -> float:
    """inf{x : F_hat(x) >= alpha}: the ceil(alpha*n)-th order statistic."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("samples must be non-empty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = max(1, ceil_guard(alpha * arr.size))
    return float(np.partition(arr, k - 1)[k - 1])


def plan_nonshared(models_or_samples, alpha: float) -> BatteryConfig:
    """Size every driver's personal battery at its alpha-quantile; no pool.

    Accepts demand models (anything with a quantile(alpha) method) or raw
    per-driver sample arrays, one entry per driver.
    """
    personal = []
    for entry in models_or_samples:
        if hasattr(entry, "quantile"):
            personal.append(float(entry.quantile(alpha)))
        else:
            personal.append(empirical_quantile(entry, alpha))
    if not personal:
        raise ValueError("need at least one driver")
    return BatteryConfig(personal=np.array(personal), shared=0.0)


def scenario_count(n_drivers: int, alpha: float, delta: float) -> int:
    """M_sc = ceil((2/(1-alpha)) * (ln(1/delta) + n_drivers + 1)).

    n_drivers + 1 is the decision dimension (personal sizes plus the pool);
    covering the chance constraint at level alpha with confidence 1 - delta
    needs this many sampled constraints.
    """
    if n_drivers < 1:
        raise ValueError("n_drivers must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return ceil_guard(
        (2.0 / (1.0 - alpha)) * (math.log(1.0 / delta) + n_drivers + 1)
    )


def build_scenario_lp(scenarios) -> LinearProgram:
    """Compose the sampled-constraint LP over (p, s, z).

    Variables: p_0..p_{N-1}, then s, then z_{ij} in driver-major order.
    For every sampled column j: z_ij >= d_ij - p_i and sum_i z_ij <= s.
    z never enters the objective, so z_ij = (d_ij - p_i)_+ is always
    optimal (a vertex may leave z higher where a column has pool slack)
    and the value equals the piecewise-linear optimum in (p, s) alone.
    """
    d = as_scenario_matrix(scenarios)
    n, m = d.shape
    n_vars = n + 1 + n * m
    prog = LinearProgram(n_vars=n_vars)
    prog.objective[: n + 1] = 1.0
    prog.upper[:n] = d.max(axis=1)

    def z_index(i, j):
        return n + 1 + i * m + j

    for j in range(m):
        for i in range(n):
            prog.add_constraint({z_index(i, j): 1.0, i: 1.0}, ">=", d[i, j])
        coeffs = {z_index(i, j): 1.0 for i in range(n)}
        coeffs[n] = -1.0
        prog.add_constraint(coeffs, "<=", 0.0)
    return prog


class _CutPool:
    """Registry of the cuts already in a master, keyed by (origin column,
    driver subset) so separation never adds the same cut twice. One entry:
    sum over S of p_i plus s >= rhs.
    """

    def __init__(self):
        self.origin: list[int] = []
        self.subset: list[np.ndarray] = []
        self.rhs: list[float] = []
        self._keys: set = set()

    def __len__(self) -> int:
        return len(self.rhs)

    def add(self, origin: int, subset: np.ndarray, rhs: float) -> bool:
        """Record a cut; False when the (origin, subset) pair is already
        present (same pair always reproduces the same rhs)."""
        key = (origin, subset.tobytes())
        if key in self._keys:
            return False
        self._keys.add(key)
        self.origin.append(origin)
        self.subset.append(subset)
        self.rhs.append(rhs)
        return True


def _recover_primal(eng: _BoundedSimplex, p_upper: np.ndarray) -> tuple[np.ndarray, float]:
    """Map master row duals back to (p, s); duals are <= 0 at optimality."""
    u = eng.duals()
    n = p_upper.size
    p = np.clip(-u[:n], 0.0, p_upper)
    s = max(float(-u[n]), 0.0)
    return p, s


def _add_cuts(eng: _BoundedSimplex, pool: _CutPool, d: np.ndarray,
              point: np.ndarray, s_point: float, agg: np.ndarray,
              tol: float, n: int, limit: int = 16) -> int:
    """Add cuts for the columns most violated at (point, s_point).

    Each violated column j contributes the cut built from its active set
    at the separation point, S = {i : d_ij > point_i}; any such cut is
    valid for the full problem regardless of where it was separated.
    Returns the number of columns genuinely new to the master.
    """
    viol = agg - s_point
    worst = np.nonzero(viol > tol)[0]
    if worst.size == 0:
        return 0
    if worst.size > limit:
        order = np.argsort(-viol[worst], kind="stable")
        worst = worst[order[:limit]]
    added = 0
    for j in worst:
        subset = np.nonzero(d[:, j] > point)[0]
        if subset.size == 0:
            continue
        rhs = float(d[subset, j].sum())
        if pool.add(int(j), subset, rhs):
            rows = np.append(subset, n)
            eng.add_variable(rows, np.ones(rows.size), -rhs, 0.0, np.inf)
            added += 1
    return added


def _solve_scenario_cuts(demands: np.ndarray, pool: _CutPool | None = None,
                         max_rounds: int = 100000) -> tuple[np.ndarray, float]:
    """Delayed cut generation for the scenario LP.

    The master keeps only aggregate-shortfall cuts
        sum_{i in S} p_i + s >= sum_{i in S} d_ij
    each implied by one sampled constraint, and is solved in dual column
    form: rows = one per p_i plus one for s, so the basis stays (N+1)^2
    no matter how many cuts accumulate, and a new cut is a new column that
    warm-starts from the previous basis.

    Separation is stabilized in-out style: cuts are generated at the
    midpoint between the master optimizer and the best exactly-feasible
    point seen so far, which yields far deeper cuts than separating at
    the master point; once the midpoint stops producing violated columns
    the search separates at the master point itself, whose finite cut
    universe forces exact termination. The returned point is the feasible
    incumbent, optimal up to the termination gap, and satisfies every
    sampled constraint exactly.
    """
    d = np.ascontiguousarray(demands, dtype=np.float64)
    n, m = d.shape
    p_upper = d.max(axis=1)
    scale = max(1.0, float(p_upper.sum()))
    tol = 1e-9 * scale
    if pool is None:
        pool = _CutPool()

    # The all-ones right side plus 0/1 cut columns would tie the ratio
    # test across a cut's whole support, stalling the simplex in massive
    # degeneracy. Distinct tiny offsets break the ties; they amount to
    # reweighting the recovered objective by < 3e-8 relative, and
    # feasibility of the returned point never depends on them.
    b = 1.0 + 3e-8 * (np.arange(n + 1) + 1.0) / (n + 2.0)
    eng = _BoundedSimplex(b)
    for i in range(n):
        eng.add_variable([i], [-1.0], float(p_upper[i]), 0.0, np.inf)
    for k in range(n + 1):
        eng.add_slack(k, 1.0)

    # sizing everyone at their sample maximum needs no pool at all, so it
    # is always feasible; it seeds the incumbent
    inc_p = p_upper.copy()
    inc_s = 0.0
    inc_val = float(p_upper.sum())

    for _ in range(max_rounds):
        status = eng.solve()
        if status != "optimal":
            raise RuntimeError(f"cut master terminated {status}")
        p_m, s_m = _recover_primal(eng, p_upper)
        z_lo = float(p_m.sum()) + s_m
        agg_m = backend.aggregate_shortfall(d, p_m)
        s_fix = float(agg_m.max()) if agg_m.size else 0.0
        v_m = float(p_m.sum()) + max(s_m, s_fix)
        if v_m < inc_val:
            inc_p, inc_s, inc_val = p_m, max(s_m, s_fix), v_m
        if inc_val - z_lo <= tol:
            break
        x = 0.5 * (p_m + inc_p)
        sx = 0.5 * (max(s_m, s_fix) + inc_s)
        agg_x = backend.aggregate_shortfall(d, x)
        if _add_cuts(eng, pool, d, x, sx, agg_x, tol, n) == 0:
            # midpoint clean: candidate incumbent, then separate at the
            # master point itself so the round still makes progress
            v_x = float(x.sum()) + (float(agg_x.max()) if agg_x.size else 0.0)
            if v_x < inc_val:
                inc_p, inc_s, inc_val = x, v_x - float(x.sum()), v_x
            if _add_cuts(eng, pool, d, p_m, s_m, agg_m, tol, n) == 0:
                # master point violates nothing new: remaining violation
                # is dual-tolerance dust on cuts already present
                break
    else:
        raise RuntimeError("cut generation exceeded its round limit")

    agg = backend.aggregate_shortfall(d, inc_p)
    if agg.size:
        inc_s = max(inc_s, float(agg.max()))
    return inc_p, inc_s


def solve_scenario_problem(scenarios, method: str = "auto") -> BatteryConfig:
    """Solve the sampled-constraint LP; the result covers the aggregate
    shortfall of every sampled column.

    method "direct" composes the full (p, s, z) program; "cuts" runs
    delayed cut generation (identical optimum, basis independent of the
    sample count); "auto" picks by size.
    """
    d = as_scenario_matrix(scenarios)
    n, m = d.shape
    if method == "auto":
        method = "direct" if m * (n + 1) <= _DIRECT_ROW_LIMIT else "cuts"
    if method == "direct":
        prog = build_scenario_lp(d)
        sol = solve_lp(prog)
        if sol.status != "optimal":
            raise RuntimeError(f"scenario LP terminated {sol.status}")
        p = np.clip(sol.values[:n], 0.0, None)
        s = max(float(sol.values[n]), 0.0)
    elif method == "cuts":
        p, s = _solve_scenario_cuts(d)
    else:
        raise ValueError(f"unknown method {method!r}")
    agg = backend.aggregate_shortfall(d, p)
    if agg.size:
        s = max(s, float(agg.max()))
    return BatteryConfig(personal=p, shared=s)


@dataclass
class ReducedPlan:
    """Outcome of the prefix bisection.

    Unpacks as (config, empirical_alpha). below_target marks the error
    path where even the full scenario set misses the target. iterates
    records every distinct prefix solved as (prefix_len, alpha_hat,
    total_capacity, config) in solve order.
    """

    config: BatteryConfig
    empirical_alpha: float
    prefix_len: int
    n_scenarios: int
    below_target: bool = False
    iterates: list = field(default_factory=list)

    def __iter__(self):
        yield self.config
        yield self.empirical_alpha


def binary_search_reduce(scenario_samples, eval_samples, alpha: float,
                         lp_method: str = "auto") -> ReducedPlan:
    """Shrink the scenario prefix by bisection until the empirical
    reliability sits just above the target.

    Solves the LP on the first m columns; alpha_hat(m) is the fraction of
    evaluation columns whose aggregate shortfall the pool covers. The
    search keeps the invariant alpha_hat(m_hi) > alpha, moving m_hi down
    on success and m_lo up otherwise, and returns the m_hi solution once
    the bracket closes to width one. If the full set only reaches alpha
    exactly, that solution is returned as-is; below alpha, it is returned
    flagged.
    """
    d = as_scenario_matrix(scenario_samples)
    ev = as_scenario_matrix(eval_samples)
    if d.shape[0] != ev.shape[0]:
        raise ValueError("scenario and evaluation sets disagree on fleet size")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    m_full = d.shape[1]
    cache: dict[int, tuple[BatteryConfig, float]] = {}
    iterates: list[tuple[int, float, float, BatteryConfig]] = []

    def solve_prefix(m: int) -> tuple[BatteryConfig, float]:
        # deterministic solves make the cache equal to a fresh re-solve
        if m not in cache:
            cfg = solve_scenario_problem(d[:, :m], method=lp_method)
            a_hat = estimate_aggregate_reliability(cfg, ev)
            cache[m] = (cfg, a_hat)
            iterates.append((m, a_hat, cfg.total, cfg))
        return cache[m]

    cfg_full, a_full = solve_prefix(m_full)
    if a_full < alpha:
        return ReducedPlan(cfg_full, a_full, m_full, m_full,
                           below_target=True, iterates=iterates)
    if a_full == alpha:
        return ReducedPlan(cfg_full, a_full, m_full, m_full, iterates=iterates)

    m_lo, m_hi = 0, m_full
    while m_hi - m_lo > 1:
        m_mid = (m_lo + m_hi) // 2
        _, a_mid = solve_prefix(m_mid)
        if a_mid > alpha:
            m_hi = m_mid
        else:
            m_lo = m_mid
    cfg, a_hat = solve_prefix(m_hi)
    return ReducedPlan(cfg, a_hat, m_hi, m_full, iterates=iterates)


@dataclass
class HeuristicPlan:
    """Outcome of the multi-trial heuristic: the selected configuration,
    its empirical reliability, and every trial's reduced plan."""

    config: BatteryConfig
    empirical_alpha: float
    below_target: bool
    selected_trial: int
    trial_plans: list

    def __iter__(self):
        yield self.config
        yield self.empirical_alpha


def conservatism_heuristic(models, params: PlannerParams) -> HeuristicPlan:
    """Run `params.trials` independent reduction searches and keep one.

    Each trial draws fresh scenario samples (scenario_count many) and a
    fresh evaluation set (chernoff_sample_size many), then bisects. The
    default selection returns the cheapest trial whose empirical
    reliability met the target, falling back to the most reliable trial
    flagged below target; selection="argmin_alpha" returns the literal
    least-reliable trial.
    """
    models = list(models)
    n = len(models)
    if n == 0:
        raise ValueError("need at least one driver model")
    m_sc = scenario_count(n, params.alpha, params.delta)
    m_eval = chernoff_sample_size(n, params.epsilon, params.delta)
    # one upfront batch of per-trial seeds keeps trials independent of
    # execution order
    root = rng_from(params.seed, "heuristic")
    seeds = root.integers(0, 2 ** 63, size=(params.trials, 2))

    plans: list[ReducedPlan] = []
    for t in range(params.trials):
        scen = sample_scenarios(models, m_sc, int(seeds[t, 0]))
        ev = sample_scenarios(models, m_eval, int(seeds[t, 1]))
        plans.append(binary_search_reduce(scen, ev, params.alpha,
                                          lp_method=params.lp_method))

    if params.selection == "argmin_alpha":
        alphas = [pl.empirical_alpha for pl in plans]
        t_sel = int(np.argmin(alphas))
        chosen = plans[t_sel]
        return HeuristicPlan(chosen.config, chosen.empirical_alpha,
                             chosen.empirical_alpha < params.alpha,
                             t_sel, plans)

    qualified = [t for t, pl in enumerate(plans)
                 if pl.empirical_alpha >= params.alpha and not pl.below_target]
    if qualified:
        t_sel = min(qualified, key=lambda t: (plans[t].config.total, t))
        chosen = plans[t_sel]
        return HeuristicPlan(chosen.config, chosen.empirical_alpha,
                             False, t_sel, plans)
    t_sel = max(range(params.trials),
                key=lambda t: (plans[t].empirical_alpha, -t))
    chosen = plans[t_sel]
    return HeuristicPlan(chosen.config, chosen.empirical_alpha,
                         True, t_sel, plans)
