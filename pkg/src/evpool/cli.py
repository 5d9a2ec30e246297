"""Command-line driver for end-to-end experiments.

Wires ingestion, planning, evaluation and the two experiment sweeps into
subcommands that emit plot-ready CSV. Nothing here renders figures; the
CSVs are the product.

The optional --config file is one JSON document with up to three sections:

    {
      "planner":    { PlannerParams fields for plan-shared },
      "synthetic":  { SyntheticFleetSpec knobs, minus n_drivers/seed },
      "experiment": { ExperimentConfig fields for frontier / reduction-sweep }
    }

Flags given on the command line override the corresponding config values.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import RULE_KINDS, AllocationRule
from .core import BatteryConfig, ScenarioSet, rng_from
from .ingest import (SyntheticFleetSpec, fit_histogram, generate_synthetic_fleet,
                     models_from_json, models_to_json, parse_trip_log,
                     sample_scenarios)
from .planner import PlannerParams, conservatism_heuristic, plan_nonshared
from .reliability import (chernoff_sample_size, estimate_aggregate_reliability,
                          estimate_min_reliability)

# Full default grids; CI and tests pass smaller ones explicitly.
FULL_ALPHA_GRID = tuple(round(0.5 + 0.005 * k, 3) for k in range(100))
FULL_N_GRID = tuple(range(5, 186, 20))
DEFAULT_TRIALS = 20

FRONTIER_HEADER = ["n_drivers", "alpha_target", "setting", "rule",
                   "capacity_per_driver_kwh", "empirical_reliability"]
SWEEP_HEADER = ["n_drivers", "alpha_target", "reduction_median",
                "reduction_q10", "reduction_q25", "reduction_q75",
                "reduction_q90"]
GAUSSIAN_HEADER = ["n_drivers", "gap", "ratio"]

# Evaluation sets for frontier reliability columns.
_EVAL_EPSILON = 0.02
_EVAL_DELTA = 0.05


@dataclass
class ExperimentConfig:
    """Inputs of one sweep: demand source, grids, rules, repetitions.

    trials is the number of heuristic trials in the frontier (candidate
    count per cell) and the number of independent pipeline repetitions
    per cell in the reduction sweep.
    """

    source: dict = field(default_factory=lambda: {"kind": "synthetic"})
    alpha_grid: tuple = FULL_ALPHA_GRID
    n_grid: tuple = FULL_N_GRID
    rules: tuple = RULE_KINDS
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self):
        self.alpha_grid = tuple(sorted(set(float(a) for a in self.alpha_grid)))
        self.n_grid = tuple(sorted(set(int(n) for n in self.n_grid)))
        # canonical rule order, not input order
        self.rules = tuple(r for r in RULE_KINDS if r in set(self.rules))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.source, dict) or "kind" not in self.source:
            raise ValueError("source must be a dict with a 'kind' field")
        if self.source["kind"] not in ("synthetic", "trip_log", "models"):
            raise ValueError(f"unknown source kind {self.source['kind']!r}")
        if self.source["kind"] in ("trip_log",) and "path" not in self.source:
            raise ValueError("trip_log source needs a 'path'")
        if not self.alpha_grid or not self.n_grid:
            raise ValueError("alpha_grid and n_grid must be non-empty")
        if any(not 0.0 < a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha values must lie in (0, 1)")
        if any(n < 1 for n in self.n_grid):
            raise ValueError("fleet sizes must be >= 1")
        if not self.rules:
            raise ValueError("at least one allocation rule is required")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"source", "alpha_grid", "n_grid", "rules", "trials",
                 "seed", "out"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        kw = {k: v for k, v in d.items() if k != "out"}
        if "out" in d:
            kw["out_dir"] = str(d["out"])
        return cls(**kw)


def _derive_seed(master: int, *key) -> int:
    return int(rng_from(master, *key).integers(0, 2 ** 63))


@functools.lru_cache(maxsize=8)
def _fit_trip_log(path: str, efficiency: float, bin_width: float,
                  include_zero_days: bool):
    series = parse_trip_log(path, efficiency)
    if not series:
        raise ValueError(f"{path}: no trip records")
    return tuple(fit_histogram(s, bin_width, include_zero_days) for s in series)


@functools.lru_cache(maxsize=8)
def _load_models_file(path: str):
    return tuple(models_from_json(Path(path).read_text(encoding="utf-8")))


def _subsample(full, n: int, seed: int):
    if n > len(full):
        raise ValueError(f"requested {n} drivers but only {len(full)} available")
    if n == len(full):
        return list(full)
    idx = rng_from(seed, "subsample").choice(len(full), size=n, replace=False)
    return [full[i] for i in sorted(idx)]


def _models_for(source: dict, n: int, seed: int):
    """Materialize n driver models from a source spec, deterministically
    in (source, n, seed)."""
    kind = source["kind"]
    if kind == "synthetic":
        knobs = {k: source[k] for k in
                 ("base_scale", "tail_prob", "tail_scale", "n_days",
                  "bin_width_kwh") if k in source}
        spec = SyntheticFleetSpec(n_drivers=n, seed=seed, **knobs)
        return generate_synthetic_fleet(spec)
    if kind == "trip_log":
        full = _fit_trip_log(str(source["path"]),
                             float(source.get("efficiency_mi_per_kwh", 3.0)),
                             float(source.get("bin_width_kwh", 2.0)),
                             bool(source.get("include_zero_days", True)))
        return _subsample(full, n, seed)
    if kind == "models":
        full = (tuple(source["models"]) if "models" in source
                else _load_models_file(str(source["path"])))
        return _subsample(full, n, seed)
    raise ValueError(f"unknown source kind {kind!r}")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def run_frontier(config: ExperimentConfig, emit_iterates: bool = False):
    """Capacity/reliability rows for every (N, alpha) cell.

    Per cell: one non-shared baseline row (rule "none"; without a pool
    the rules coincide), one shared row per heuristic candidate per rule,
    and the rule-wise efficient frontier (running max of reliability over
    capacity, selected candidates only). With emit_iterates, every
    intermediate bisection solution is also evaluated, with the trailing
    `iterate` column distinguishing intermediates (1) from selected
    candidates (0).
    """
    config.validate()
    rows = []
    for n in config.n_grid:
        for a in config.alpha_grid:
            models = _models_for(config.source, n,
                                 _derive_seed(config.seed, "fleet", n, a))
            m_eval = chernoff_sample_size(n, _EVAL_EPSILON, _EVAL_DELTA)
            ev = sample_scenarios(models, m_eval,
                                  _derive_seed(config.seed, "frontier-eval", n, a))

            def emit(setting, rule, cfg, rel, iterate=None):
                row = (n, a, setting, rule, cfg.total / n, rel)
                rows.append(row + ((iterate,) if emit_iterates else ()))

            base = plan_nonshared(models, a)
            base_rel = estimate_min_reliability(
                base, AllocationRule("proportional"), ev).min_over_drivers
            emit("nonshared", "none", base, base_rel)

            params = PlannerParams(
                alpha=a, trials=config.trials,
                seed=_derive_seed(config.seed, "frontier-plan", n, a))
            plan = conservatism_heuristic(models, params)
            candidates = [(pl.config, False) for pl in plan.trial_plans]
            if emit_iterates:
                for pl in plan.trial_plans:
                    candidates.extend(
                        (icfg, True) for m, _, _, icfg in pl.iterates
                        if m != pl.prefix_len)

            for rule_kind in config.rules:
                perm = (_derive_seed(config.seed, "fcfs-perm", n, a)
                        if rule_kind == "fcfs" else None)
                rule = AllocationRule(rule_kind, permutation_seed=perm)
                points = []
                for cfg, is_iter in candidates:
                    rel = estimate_min_reliability(cfg, rule, ev).min_over_drivers
                    emit("shared", rule_kind, cfg, rel, iterate=is_iter)
                    if not is_iter:
                        points.append((cfg.total / n, rel))
                points.sort()
                best = -1.0
                frontier: dict[float, float] = {}
                for cap, rel in points:
                    best = max(best, rel)
                    frontier[cap] = best
                for cap in sorted(frontier):
                    row = (n, a, "frontier", rule_kind, cap, frontier[cap])
                    rows.append(row + ((None,) if emit_iterates else ()))
    return rows


def run_reduction_sweep(config: ExperimentConfig):
    """Relative-reduction quantiles per (N, alpha) cell.

    Each of the trials repetitions draws its own fleet (synthesized or
    subsampled), plans the non-shared baseline exactly from model
    quantiles and the shared configuration through the full heuristic
    pipeline (single trial per repetition), then reports quantiles of
    1 - shared_total / nonshared_total across repetitions.
    """
    config.validate()
    rows = []
    for n in config.n_grid:
        for a in config.alpha_grid:
            reductions = []
            for t in range(config.trials):
                cell = _derive_seed(config.seed, "sweep", n, a, t)
                models = _models_for(config.source, n,
                                     _derive_seed(cell, "fleet"))
                baseline = plan_nonshared(models, a).total
                params = PlannerParams(alpha=a, trials=1,
                                       seed=_derive_seed(cell, "plan"))
                shared = conservatism_heuristic(models, params).config.total
                if baseline <= 0.0:
                    # both totals zero only for all-zero demand; by
                    # definition there is nothing to reduce
                    reductions.append(0.0)
                else:
                    reductions.append(1.0 - shared / baseline)
            q = np.quantile(reductions, [0.5, 0.1, 0.25, 0.75, 0.9])
            rows.append((n, a, q[0], q[1], q[2], q[3], q[4]))
    return rows


def _stamp(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return doc


def _resolve(args, conf_value, default):
    return args if args is not None else (conf_value if conf_value is not None
                                          else default)


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------- commands


def _cmd_ingest(args) -> int:
    conf = _load_config(args.config)
    seed = _resolve(args.seed, None, 0)
    out = Path(_resolve(args.out, None, "."))
    if args.trip_log is not None:
        series = parse_trip_log(args.trip_log, args.efficiency)
        if not series:
            raise ValueError(f"{args.trip_log}: no trip records")
        models = [fit_histogram(s, args.bin_width) for s in series]
    else:
        knobs = dict(conf.get("synthetic", {}))
        knobs["n_drivers"] = args.synthetic
        knobs.setdefault("bin_width_kwh", args.bin_width)
        models = generate_synthetic_fleet(SyntheticFleetSpec(seed=seed, **knobs))
    models_path = out / "models.json"
    _stamp(models_path, models_to_json(models))
    print(f"fitted {len(models)} driver models -> {models_path}")
    if args.sample is not None:
        scen = sample_scenarios(models, args.sample,
                                _derive_seed(seed, "ingest-sample"))
        scen_path = out / "scenarios.csv"
        _stamp(scen_path, scen.to_csv())
        print(f"sampled {args.sample} scenarios -> {scen_path}")
    return 0


def _read_models(path):
    return models_from_json(Path(path).read_text(encoding="utf-8"))


def _cmd_plan_nonshared(args) -> int:
    out = Path(_resolve(args.out, None, "."))
    models = _read_models(args.models)
    cfg = plan_nonshared(models, args.alpha)
    path = out / "plan_nonshared.json"
    _stamp(path, json.dumps(cfg.to_dict(), indent=2) + "\n")
    print(f"non-shared total {cfg.total:.3f} kWh for {cfg.n_drivers} drivers "
          f"-> {path}")
    return 0


def _cmd_plan_shared(args) -> int:
    conf = _load_config(args.config)
    seed = _resolve(args.seed, None, 0)
    out = Path(_resolve(args.out, None, "."))
    models = _read_models(args.models)

    pd = dict(conf.get("planner", {}))
    for name in ("alpha", "delta", "epsilon", "trials", "selection"):
        val = getattr(args, name)
        if val is not None:
            pd[name] = val
    pd["seed"] = seed
    if "alpha" not in pd:
        raise ValueError("alpha is required (flag --alpha or planner config)")
    params = PlannerParams.from_dict(pd)

    plan = conservatism_heuristic(models, params)
    doc = plan.config.to_dict(empirical_alpha=plan.empirical_alpha)
    doc["below_target"] = plan.below_target
    doc["selected_trial"] = plan.selected_trial
    doc["prefix_len"] = plan.trial_plans[plan.selected_trial].prefix_len
    doc["n_scenarios"] = plan.trial_plans[plan.selected_trial].n_scenarios
    path = out / "plan_shared.json"
    _stamp(path, json.dumps(doc, indent=2) + "\n")
    if plan.below_target:
        print(f"warning: empirical reliability {plan.empirical_alpha:.4f} "
              f"below target {params.alpha}", file=sys.stderr)
    print(f"shared total {plan.config.total:.3f} kWh "
          f"(alpha-hat {plan.empirical_alpha:.4f}) -> {path}")
    return 0


def _cmd_evaluate(args) -> int:
    seed = _resolve(args.seed, None, 0)
    out = Path(_resolve(args.out, None, "."))
    cfg = BatteryConfig.from_dict(
        json.loads(Path(args.plan).read_text(encoding="utf-8")))
    if args.scenarios is not None:
        scen = ScenarioSet.from_csv(
            Path(args.scenarios).read_text(encoding="utf-8"))
    else:
        if args.models is None:
            raise ValueError("need --scenarios or --models with --samples")
        models = _read_models(args.models)
        m = args.samples
        if m is None:
            m = chernoff_sample_size(len(models), _EVAL_EPSILON, _EVAL_DELTA)
        scen = sample_scenarios(models, m, _derive_seed(seed, "evaluate"))
    perm = _derive_seed(seed, "fcfs-perm") if args.rule == "fcfs" else None
    rule = AllocationRule(args.rule, permutation_seed=perm)
    est = estimate_min_reliability(cfg, rule, scen, seed=seed,
                                   epsilon=args.epsilon, delta=args.delta)
    path = out / "evaluation.json"
    _stamp(path, json.dumps(est.to_dict(), indent=2) + "\n")
    print(f"min-over-drivers {est.min_over_drivers:.4f}, "
          f"aggregate {est.aggregate:.4f} on {est.n_samples} scenarios "
          f"({args.rule}) -> {path}")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    conf = _load_config(args.config)
    d = dict(conf.get("experiment", {}))
    if args.alpha_grid is not None:
        d["alpha_grid"] = _parse_floats(args.alpha_grid)
    if args.n_grid is not None:
        d["n_grid"] = _parse_ints(args.n_grid)
    if args.rules is not None:
        d["rules"] = [tok.strip() for tok in args.rules.split(",") if tok.strip()]
    if args.trials is not None:
        d["trials"] = args.trials
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    if args.trip_log is not None:
        d["source"] = {"kind": "trip_log", "path": args.trip_log}
    elif args.models is not None:
        d["source"] = {"kind": "models", "path": args.models}
    elif "source" not in d:
        d["source"] = {"kind": "synthetic", **conf.get("synthetic", {})}
    return ExperimentConfig.from_dict(d)


def _cmd_frontier(args) -> int:
    config = _experiment_config(args)
    rows = run_frontier(config, emit_iterates=args.emit_iterates)
    header = FRONTIER_HEADER + (["iterate"] if args.emit_iterates else [])
    path = Path(config.out_dir) / "frontier.csv"
    _write_csv(path, header, rows)
    print(f"wrote {len(rows)} frontier rows -> {path}")
    return 0


def _cmd_reduction_sweep(args) -> int:
    config = _experiment_config(args)
    rows = run_reduction_sweep(config)
    path = Path(config.out_dir) / "reduction_sweep.csv"
    _write_csv(path, SWEEP_HEADER, rows)
    print(f"wrote {len(rows)} sweep rows -> {path}")
    return 0


def _cmd_gaussian(args) -> int:
    from .analysis import GaussianFleetSpec, gaussian_gap_experiment

    seed = _resolve(args.seed, None, 0)
    out = Path(_resolve(args.out, None, "."))
    specs = [GaussianFleetSpec(n, args.mu, args.sigma, args.alpha)
             for n in _parse_ints(args.n_grid)]
    table = gaussian_gap_experiment(specs, c=args.c, seed=seed,
                                    mc_samples=args.mc_samples)
    unverified = [row.n_drivers for row in table if not row.verified]
    if unverified:
        print(f"warning: shared design failed Monte Carlo verification at "
              f"N in {unverified}", file=sys.stderr)
    path = out / "gaussian_gap.csv"
    _write_csv(path, GAUSSIAN_HEADER,
               [(r.n_drivers, r.gap, r.ratio) for r in table])
    print(f"wrote {len(table)} gap rows -> {path}")
    return 0


# ----------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our contract reserves 2 for
    runtime failures, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit int")
    return val


def _add_globals(p) -> None:
    p.add_argument("--config", metavar="JSON", default=argparse.SUPPRESS,
                   help="JSON config file (sections: planner, synthetic, "
                        "experiment)")
    p.add_argument("--seed", type=_u64, default=argparse.SUPPRESS,
                   help="master seed (default 0)")
    p.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                   help="output directory (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evpool",
                     description="EV battery capacity planning with a shared "
                                 "range-extender pool")
    parser.add_argument("--config", metavar="JSON", default=None)
    parser.add_argument("--seed", type=_u64, default=None)
    parser.add_argument("--out", metavar="DIR", default=None)
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="SUBCOMMAND")

    p = sub.add_parser("ingest", help="fit demand models from a trip log or "
                                      "the synthetic generator")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trip-log", metavar="CSV")
    src.add_argument("--synthetic", type=int, metavar="N",
                     help="generate N synthetic drivers")
    p.add_argument("--bin-width", type=float, default=2.0,
                   help="histogram bin width in kWh (default 2.0)")
    p.add_argument("--efficiency", type=float, default=3.0,
                   help="miles per kWh for trip logs (default 3.0)")
    p.add_argument("--sample", type=int, metavar="M",
                   help="also write M sampled scenarios")
    _add_globals(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("plan-nonshared", help="per-driver quantile planning, "
                                              "no pool")
    p.add_argument("--models", required=True, metavar="JSON")
    p.add_argument("--alpha", type=float, required=True)
    _add_globals(p)
    p.set_defaults(func=_cmd_plan_nonshared)

    p = sub.add_parser("plan-shared", help="scenario planning with the "
                                           "conservatism-reduction heuristic")
    p.add_argument("--models", required=True, metavar="JSON")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--selection", choices=("min_total", "argmin_alpha"),
                   default=None)
    _add_globals(p)
    p.set_defaults(func=_cmd_plan_shared)

    p = sub.add_parser("evaluate", help="estimate reliability of a plan")
    p.add_argument("--plan", required=True, metavar="JSON")
    p.add_argument("--scenarios", metavar="CSV")
    p.add_argument("--models", metavar="JSON",
                   help="sample evaluation scenarios from these models")
    p.add_argument("--samples", type=int, metavar="M")
    p.add_argument("--rule", choices=RULE_KINDS, default="proportional")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    _add_globals(p)
    p.set_defaults(func=_cmd_evaluate)

    for name, handler in (("frontier", _cmd_frontier),
                          ("reduction-sweep", _cmd_reduction_sweep)):
        p = sub.add_parser(name, help=f"run the {name.replace('-', ' ')}")
        p.add_argument("--alpha-grid", metavar="A1,A2,...")
        p.add_argument("--n-grid", metavar="N1,N2,...")
        p.add_argument("--rules", metavar="R1,R2,...")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--trip-log", metavar="CSV")
        p.add_argument("--models", metavar="JSON")
        if name == "frontier":
            p.add_argument("--emit-iterates", action="store_true",
                           help="also evaluate intermediate bisection "
                                "solutions (adds an iterate column)")
        _add_globals(p)
        p.set_defaults(func=handler)

    p = sub.add_parser("gaussian-analysis", help="closed-form Gaussian gap "
                                                 "table")
    p.add_argument("--mu", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--c", type=float, default=2.0)
    p.add_argument("--n-grid", default="100,200,400,800", metavar="N1,N2,...")
    p.add_argument("--mc-samples", type=int, default=100000)
    _add_globals(p)
    p.set_defaults(func=_cmd_gaussian)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits on usage errors and --help; surface the code as a
        # return value so in-process callers see the same contract
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"evpool: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
