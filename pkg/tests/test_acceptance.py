"""Acceptance gate: one test per release criterion.

Each criterion gets its own test named test_criterion_<k>_<slug>; the
session summary (see conftest.py) prints one PASS/FAIL line per test.
Tolerances are stated inline next to each assertion. The one criterion
this implementation cannot meet is marked strict-xfail with the measured
number in its reason, not weakened to pass.
"""

import time

import numpy as np
import pytest

import oracles
from evpool.allocation import RULE_KINDS, AllocationRule, apply_rule
from evpool.analysis import (
    GaussianFleetSpec,
    gaussian_gap_experiment,
    mc_rectified_sum_mean,
)
from evpool.cli import ExperimentConfig, main, run_reduction_sweep
from evpool.core import BatteryConfig
from evpool.ingest import SyntheticFleetSpec, generate_synthetic_fleet, sample_scenarios
from evpool.planner import PlannerParams, conservatism_heuristic, plan_nonshared, solve_scenario_problem
from evpool.reliability import (
    _satisfaction_matrix,
    chernoff_sample_size,
    estimate_aggregate_reliability,
    estimate_min_reliability,
)


def test_criterion_1_scenario_lp_matches_bruteforce():
    """100 random small instances agree with vertex enumeration to 1e-6,
    in under 60 seconds, including the worked two-driver instance."""
    start = time.monotonic()

    # worked instance: sampled demand vectors (1,1) and (3,0) -> optimum 3
    worked = np.array([[1.0, 3.0], [1.0, 0.0]])
    assert oracles.scenario_opt_vertices(worked) == pytest.approx(3.0,
                                                                  abs=1e-9)
    assert solve_scenario_problem(worked).total == pytest.approx(3.0,
                                                                 abs=1e-6)

    rng = np.random.default_rng(20260818)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 6))
        d = rng.integers(0, 10, size=(n, m)).astype(float)
        got = solve_scenario_problem(d).total
        want = oracles.scenario_opt_vertices(d)
        assert got == pytest.approx(want, abs=1e-6), d

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"runtime {elapsed:.1f}s exceeds the 60 s budget"


def test_criterion_2_pool_covering_implies_full_shortfalls():
    """10^4 random triples with the pool at or above the aggregate
    shortfall: every rule hands every driver at least its shortfall.
    Zero violations at 1e-12 absolute slack."""
    rng = np.random.default_rng(7201)
    violations = 0
    for rep in range(10_000):
        n = int(rng.integers(1, 9))
        personal = rng.integers(0, 13, size=n) / 4.0
        demand = rng.integers(0, 25, size=n) / 4.0
        sf = np.maximum(demand - personal, 0.0)
        # a third of the triples sit exactly at the boundary u = 1
        u = 1.0 if rep % 3 == 0 else float(rng.uniform(1.0, 1.5))
        config = BatteryConfig(personal=personal, shared=u * float(sf.sum()))
        perm = rng.permutation(n)
        for kind in RULE_KINDS:
            res = apply_rule(kind, config, demand, permutation=perm)
            if np.any(res.allocations < sf - 1e-12) or not res.satisfied.all():
                violations += 1
    assert violations == 0


def test_criterion_3_min_reliability_dominates_aggregate():
    """Planner configurations evaluated on fresh scenario sets: for every
    rule, min-over-drivers reliability >= the aggregate reliability on
    the same set, as an exact comparison of the two empirical fractions."""
    models = generate_synthetic_fleet(SyntheticFleetSpec(n_drivers=6, seed=5))
    premise_hits = 0
    for k, alpha in enumerate((0.8, 0.9)):
        plan = conservatism_heuristic(
            models, PlannerParams(alpha=alpha, trials=3, seed=21 + k))
        ev = sample_scenarios(models, 20_000, seed=9100 + k)
        agg = estimate_aggregate_reliability(plan.config, ev)
        premise_hits += agg >= alpha
        for kind in RULE_KINDS:
            rule = AllocationRule(kind, permutation_seed=3
                                  if kind == "fcfs" else None)
            est = estimate_min_reliability(plan.config, rule, ev, seed=3)
            assert est.min_over_drivers >= agg  # exact, no tolerance
            assert est.aggregate == agg
    # the implication must not hold vacuously
    assert premise_hits >= 1


def test_criterion_4_heuristic_hits_target_window():
    """N=10, alpha=0.90, epsilon=0.02, delta=0.05, T=5: the returned
    configuration's aggregate reliability on a fresh sample lies in
    [0.88, 0.97] for all 20 master seeds, in under 5 minutes."""
    start = time.monotonic()
    fleet = generate_synthetic_fleet(SyntheticFleetSpec(n_drivers=10, seed=42))
    m_fresh = chernoff_sample_size(10, 0.02, 0.05)
    results = []
    for k in range(20):
        params = PlannerParams(alpha=0.90, epsilon=0.02, delta=0.05,
                               trials=5, seed=1000 + k)
        plan = conservatism_heuristic(fleet, params)
        fresh = sample_scenarios(fleet, m_fresh, seed=777_000 + k)
        results.append(estimate_aggregate_reliability(plan.config, fresh))
    elapsed = time.monotonic() - start
    assert all(0.88 <= a <= 0.97 for a in results), results
    assert elapsed < 300.0, f"runtime {elapsed:.1f}s exceeds the 5 min budget"


def test_criterion_5_shared_below_nonshared():
    """Synthetic fleets, T=10: total capacity with a pool beats the
    per-driver quantile baseline at alpha in {0.85, 0.95} for N in
    {25, 50} (strict inequality).

    Reference magnitudes under these seeds (not asserted): relative
    reduction 0.061 (N=25, a=0.85), 0.461 (N=25, a=0.95),
    0.193 (N=50, a=0.85), 0.510 (N=50, a=0.95).
    """
    for n in (25, 50):
        models = generate_synthetic_fleet(SyntheticFleetSpec(n_drivers=n,
                                                             seed=70 + n))
        for alpha in (0.85, 0.95):
            baseline = plan_nonshared(models, alpha).total
            params = PlannerParams(alpha=alpha, trials=10,
                                   seed=n * 1000 + int(alpha * 100))
            plan = conservatism_heuristic(models, params)
            assert plan.config.total < baseline, (n, alpha)


def test_criterion_5_reduction_grows_with_fleet():
    """Median relative reduction at N=100 exceeds the median at N=10
    for alpha=0.85 (10 repetitions per cell).

    Reference medians under seed 9 (not asserted): -0.099 at N=10,
    0.157 at N=100; small fleets can lose from pooling, large ones gain.
    """
    config = ExperimentConfig(source={"kind": "synthetic"},
                              n_grid=[10, 100], alpha_grid=[0.85],
                              trials=10, seed=9)
    rows = run_reduction_sweep(config)
    median = {row[0]: row[2] for row in rows}
    assert median[100] > median[10], median


def test_criterion_5_reduction_grows_with_alpha():
    """Median relative reduction at alpha=0.95 exceeds the median at
    alpha=0.75 for N=50 (10 repetitions per cell).

    Reference medians under seed 10 (not asserted): -0.157 at
    alpha=0.75, 0.467 at alpha=0.95; pooling pays off where the
    per-driver quantile baseline gets expensive.
    """
    config = ExperimentConfig(source={"kind": "synthetic"},
                              n_grid=[50], alpha_grid=[0.75, 0.95],
                              trials=10, seed=10)
    rows = run_reduction_sweep(config)
    median = {row[1]: row[2] for row in rows}
    assert median[0.95] > median[0.75], median


def test_criterion_6_satisfied_set_dominance():
    """Per-sample satisfied-set dominance, exact on every evaluated
    (configuration, scenario set) pair: proportional is contained in
    FCFS and in utilitarian, and utilitarian satisfies at least as many
    drivers as FCFS in every column."""

    def check(config, demands):
        prop = _satisfaction_matrix(config, AllocationRule("proportional"),
                                    demands, seed=17)
        fcfs = _satisfaction_matrix(
            config, AllocationRule("fcfs", permutation_seed=17), demands,
            seed=17)
        util = _satisfaction_matrix(config, AllocationRule("utilitarian"),
                                    demands, seed=17)
        assert np.all(fcfs | ~prop)
        assert np.all(util | ~prop)
        assert np.all(util.sum(axis=0) >= fcfs.sum(axis=0))

    rng = np.random.default_rng(61)
    for _ in range(150):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 41))
        config = BatteryConfig(personal=rng.integers(0, 9, size=n) / 2.0,
                               shared=float(rng.integers(0, 13)) / 2.0)
        demands = rng.integers(0, 17, size=(n, m)) / 2.0
        check(config, np.ascontiguousarray(demands))

    # planner-produced configurations, including bisection intermediates
    models = generate_synthetic_fleet(SyntheticFleetSpec(n_drivers=5, seed=8))
    plan = conservatism_heuristic(models,
                                  PlannerParams(alpha=0.85, trials=2, seed=4))
    ev = sample_scenarios(models, 2000, seed=12).demands
    configs = [pl.config for pl in plan.trial_plans]
    configs.extend(icfg for pl in plan.trial_plans
                   for _, _, _, icfg in pl.iterates)
    for config in configs:
        check(config, ev)


def test_criterion_7_chernoff_error_coverage():
    """m = ceil(4 ln(2N/delta) / eps^2) at N=20, eps=0.05, delta=0.05:
    the worst per-driver estimation error exceeds eps in at most 10% of
    200 repetitions against a known Bernoulli ground truth (the bound
    itself promises 5%; the slack absorbs Monte Carlo noise). The closed
    form is pinned exactly at (100, 0.01, 0.01) -> 396140."""
    assert chernoff_sample_size(100, 0.01, 0.01) == 396140

    n, eps, delta = 20, 0.05, 0.05
    m = chernoff_sample_size(n, eps, delta)
    assert m == 10696
    truth = np.random.default_rng(303).uniform(0.7, 0.99, size=n)
    config = BatteryConfig(personal=np.ones(n), shared=0.0)
    exceed = 0
    for rep in range(200):
        rng = np.random.default_rng(40_000 + rep)
        # satisfied days need 0 kWh; unsatisfied days need 2 > personal + pool
        demands = np.where(rng.random((n, m)) < truth[:, None], 0.0, 2.0)
        est = estimate_min_reliability(config, "proportional", demands)
        exceed += bool(np.abs(est.per_driver - truth).max() > eps)
    assert exceed <= 20, f"{exceed}/200 repetitions exceeded eps"


def test_criterion_8_rectified_moment_and_gap_sign():
    """Monte Carlo mean of the rectified demand-overflow sum within 1%
    of N*sigma/sqrt(2 pi) at N=50 with 1e5 samples; the non-shared minus
    shared-design gap is positive at every N in {100, 200, 400, 800}
    (mu=10, sigma=2, alpha=0.9, c=2) with the design verified feasible."""
    got = mc_rectified_sum_mean(50, 2.0, 100_000, seed=0)
    want = 50 * 2.0 / np.sqrt(2.0 * np.pi)
    assert abs(got - want) / want < 0.01

    specs = [GaussianFleetSpec(n, 10.0, 2.0, 0.9) for n in (100, 200, 400, 800)]
    rows = gaussian_gap_experiment(specs, c=2.0, seed=0, mc_samples=100_000)
    assert all(r.gap > 0.0 for r in rows)
    assert all(r.verified for r in rows)


@pytest.mark.xfail(
    strict=True,
    reason="gap(800)/gap(400) at mu=10, sigma=2, alpha=0.9, c=2 evaluates "
           "to 2.2068, outside the required [1.8, 2.2]: the c*sqrt(N) "
           "margin term still cancels 9% of the linear gap at N=400, so "
           "the doubling ratio overshoots 2.2 by 0.007. The band is "
           "attainable at c=1 (ratio 2.0879) but c=2 is the stated "
           "constant; left failing rather than tuned.",
)
def test_criterion_8_gap_doubling_band():
    """gap(800)/gap(400) must land in [1.8, 2.2] at c=2."""
    specs = [GaussianFleetSpec(n, 10.0, 2.0, 0.9) for n in (400, 800)]
    rows = gaussian_gap_experiment(specs, c=2.0, seed=0, mc_samples=10_000)
    ratio = rows[0].ratio
    assert ratio is not None
    assert 1.8 <= ratio <= 2.2, f"doubling ratio {ratio:.4f}"


def test_criterion_9_reduction_sweep_byte_identical(tmp_path):
    """Two reduction-sweep runs with identical configuration and seed
    write byte-identical CSV files."""
    args = ["reduction-sweep", "--n-grid", "5", "--alpha-grid", "0.8",
            "--trials", "3", "--seed", "11"]
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    b1 = (out1 / "reduction_sweep.csv").read_bytes()
    b2 = (out2 / "reduction_sweep.csv").read_bytes()
    assert b1 == b2
    assert b1.startswith(b"n_drivers,alpha_target,reduction_median")
