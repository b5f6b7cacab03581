"""Command-line front end: ``caclab {analytic,exact,simulate,train,sweep,compare,rules}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analytic
from .fncac import DEFAULT_GRID, DESK_FNCAC, LARGE_FNCAC, FncacConfig, FncacController, build_fncac, search_schedule
from .policies import ConventionalPolicy, FuzzyPolicy, FuzzySystem, PolicyError, ThresholdPolicy, ThresholdSet, fuzzy_rule_table
from .rrbfn import ModelFormatError, TrainingError
from .simulator import SimConfig, replicate, run
from .traffic import ScenarioError, build_equal_rate_scenario, build_normalized_scenario, load_scenario

log = logging.getLogger("caclab")

SWEEP_HEADER = ("utilization", "policy", "class", "offered", "blocked", "blocking_prob", "ci_low", "ci_high", "seed")
COMPARE_HEADER = ("utilization", "conventional", "fuzzy", "fncac", "reduction_vs_conventional", "reduction_vs_fuzzy")
POLICIES = ("conventional", "threshold", "fuzzy", "fncac")
CLASS_LABELS = ("type1", "type2", "type3")
GRID_TOL = 1e-9


class UsageError(Exception):
    """Bad flags or config values; maps to exit code 2."""


class RuntimeFailure(Exception):
    """Valid request that could not be carried out; maps to exit code 1."""


def parse_grid(text: str, allow_zero: bool = False) -> list[float]:
    """``start:stop:step`` (both ends inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise UsageError("grid step must be positive")
            n = int(np.floor((stop - start) / step + GRID_TOL)) + 1
            values = [round(start + i * step, 10) for i in range(max(n, 0))]
        else:
            values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from exc
    if not values:
        raise UsageError(f"grid {text!r} is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError("grid values must be strictly increasing")
    lowest = min(values)
    if lowest < 0 or (lowest == 0 and not allow_zero):
        raise UsageError("grid values must be > 0" if not allow_zero else "grid values must be >= 0")
    return values


def _fmt(x) -> str:
    return repr(float(x))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _capacity(args, minimum: int = 3) -> int:
    if args.capacity is None or args.capacity < minimum:
        raise UsageError(f"--capacity must be an integer N >= {minimum} (got {args.capacity})")
    return int(args.capacity)


def _sim_config(args) -> SimConfig:
    try:
        return SimConfig(total_arrivals=args.arrivals, warmup_arrivals=args.warmup, seed=args.seed, replications=args.replications)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- commands ------------------------------------------------------------------


def cmd_analytic(args) -> int:
    capacity = _capacity(args)
    if args.mode not in analytic.MODES:
        raise UsageError(f"--mode must be one of {analytic.MODES}")
    grid = parse_grid(args.grid, allow_zero=True)
    reports = analytic.sweep_analytic(grid, capacity, args.mode)
    _emit(analytic.sweep_to_csv(reports), args.out)
    return 0


def cmd_exact(args) -> int:
    capacity = _capacity(args)
    grid = parse_grid(args.grid, allow_zero=True)
    reports = []
    for u in grid:
        scenario = build_equal_rate_scenario(u, capacity) if args.per_class_load else build_normalized_scenario(u, capacity)
        r = analytic.multirate_exact(capacity, scenario.classes)
        reports.append(analytic.BlockingReport(r.per_class, r.aggregate, analytic.EXACT, u))
    _emit(analytic.sweep_to_csv(reports), args.out)
    return 0


def _load_controller(path) -> FncacController:
    if not path or not Path(path).is_file():
        raise RuntimeFailure(f"fncac needs a trained model file (--model); not found: {path}")
    try:
        return FncacController.load(path)
    except (ModelFormatError, OSError) as exc:
        raise RuntimeFailure(f"cannot load model {path}: {exc}") from exc


def _fuzzy_system(args) -> FuzzySystem:
    return FuzzySystem.from_dict(args.fuzzy) if getattr(args, "fuzzy", None) else FuzzySystem()


class _PolicyFactory:
    """Builds the policy object for one (policy name, utilization) pair."""

    def __init__(self, args, names, capacity):
        self.args = args
        self.capacity = capacity
        self.controller = _load_controller(args.model) if "fncac" in names else None
        self.fixed_thresholds = ThresholdSet.parse(args.thresholds) if args.thresholds else None
        self.schedule = None
        if "threshold" in names and self.fixed_thresholds is None:
            if args.model and Path(args.model).is_file():
                self.schedule = _load_controller(args.model).schedule
            if self.schedule is None:
                log.info("searching threshold schedule")
                grid = parse_grid(args.grid) if args.grid else list(DEFAULT_GRID)
                self.schedule = search_schedule(grid, capacity, SimConfig(DESK_FNCAC.search_arrivals, seed=args.seed, replications=DESK_FNCAC.search_replications))
        self.fuzzy = _fuzzy_system(args)

    def __call__(self, name: str, u: float):
        if name == "conventional":
            return ConventionalPolicy()
        if name == "fuzzy":
            return FuzzyPolicy(self.fuzzy)
        if name == "threshold":
            return ThresholdPolicy(self.fixed_thresholds or self.schedule.for_load(u))
        if name == "fncac":
            return self.controller.policy(u)
        raise UsageError(f"unknown policy {name!r}")


def _policy_names(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in POLICIES]
    if bad or not names:
        raise UsageError(f"--policy must be a comma list drawn from {POLICIES}; got {text!r}")
    return names


def _sweep_rows(u: float, name: str, metrics, seed: int) -> list[list[str]]:
    rows = []
    for k, label in enumerate(CLASS_LABELS[: len(metrics.offered)]):
        lo, hi = metrics.interval(k)
        rows.append([_fmt(u), name, label, str(int(metrics.offered[k])), str(int(metrics.blocked[k])), _fmt(metrics.blocking[k]), _fmt(lo), _fmt(hi), str(seed)])
    lo, hi = metrics.interval()
    rows.append([_fmt(u), name, "aggregate", str(int(metrics.offered.sum())), str(int(metrics.blocked.sum())), _fmt(metrics.aggregate), _fmt(lo), _fmt(hi), str(seed)])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    capacity = _capacity(args)
    grid = parse_grid(args.grid)
    names = _policy_names(args.policy)
    config = _sim_config(args)
    factory = _PolicyFactory(args, names, capacity)
    rows = []
    for u in grid:
        scenario = build_normalized_scenario(u, capacity)
        for name in names:
            m = replicate(scenario, factory(name, u), config)
            log.info("u=%s %s aggregate=%.5f", u, name, m.aggregate)
            rows += _sweep_rows(u, name, m, args.seed)
    _emit(_csv_text(SWEEP_HEADER, rows), args.out)
    return 0


def cmd_simulate(args) -> int:
    names = _policy_names(args.policy)
    config = _sim_config(args)
    if args.scenario:
        try:
            scenario = load_scenario(args.scenario)
        except (OSError, ScenarioError) as exc:
            raise UsageError(f"cannot read scenario {args.scenario}: {exc}") from exc
        points = [(scenario.aggregate_utilization, scenario)]
        capacity = scenario.capacity
    else:
        capacity = _capacity(args)
        points = [(u, build_normalized_scenario(u, capacity)) for u in parse_grid(args.grid)]
    factory = _PolicyFactory(args, names, capacity)
    rows = []
    for u, scenario in points:
        for name in names:
            if args.trace:
                if len(points) * len(names) != 1:
                    raise UsageError("--trace needs a single policy and a single utilization point")
                run(scenario, factory(name, u), config, trace=True).trace.write(args.trace)
            m = replicate(scenario, factory(name, u), config)
            rows += _sweep_rows(u, name, m, args.seed)
    _emit(_csv_text(SWEEP_HEADER, rows), args.out)
    return 0


def _train_config(args) -> FncacConfig:
    base = LARGE_FNCAC if args.preset == "large" else DESK_FNCAC
    kw = {}
    if args.samples is not None:
        kw["samples"] = args.samples
    if args.epochs is not None:
        kw["epochs"] = args.epochs
    if args.step_size is not None:
        kw["step_size"] = args.step_size
    if args.hidden:
        kw["hidden_sizes"] = tuple(int(h) for h in args.hidden.split(","))
    if args.grid:
        kw["grid"] = tuple(parse_grid(args.grid))
    cfg = FncacConfig(**{**base.__dict__, **kw})
    if cfg.samples < 1 or cfg.epochs < 0 or cfg.step_size <= 0:
        raise UsageError("--samples must be >= 1, --epochs >= 0 and --step-size > 0")
    return cfg


def cmd_train(args) -> int:
    capacity = _capacity(args)
    cfg = _train_config(args)
    out = args.out or "fncac_model.txt"
    try:
        controller, report, data = build_fncac(capacity, args.seed, cfg)
    except TrainingError as exc:
        raise RuntimeFailure(str(exc)) from exc
    controller.meta = {"samples": cfg.samples, "train_seed": args.seed}
    controller.save(out)
    summary = {
        "samples": cfg.samples,
        "seed": args.seed,
        "capacity": capacity,
        "epochs": len(report.losses),
        "step_size": cfg.step_size,
        "hidden_sizes": list(cfg.hidden_sizes),
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "train_size": report.train_size,
        "test_size": report.test_size,
        "heldout_accuracy": report.heldout_accuracy,
        "admit_fraction": data.admit_fraction,
        "oracle_schedule": controller.schedule.encode(),
        "model": str(out),
    }
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def read_sweep_csv(path) -> dict[tuple[float, str], float]:
    """Aggregate blocking per (utilization, policy) from a sweep CSV."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != SWEEP_HEADER:
                raise UsageError(f"{path}: header does not match {','.join(SWEEP_HEADER)}")
            out = {}
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(SWEEP_HEADER):
                    raise UsageError(f"{path}:{line_no}: expected {len(SWEEP_HEADER)} fields")
                if row[2] == "aggregate":
                    out[(float(row[0]), row[1])] = float(row[5])
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"{path}: malformed value: {exc}") from exc
    return out


def relative_reduction(candidate: float, baseline: float) -> float | None:
    """1 - candidate / baseline; undefined (None) when the baseline never blocks."""
    if baseline <= 0:
        return None
    return 1.0 - candidate / baseline


def compare_table(agg: dict[tuple[float, str], float]) -> tuple[list[list], float | None, float | None]:
    grid = sorted({u for u, _ in agg})
    if not any((u, "fncac") in agg for u in grid) or not any((u, "conventional") in agg for u in grid):
        raise UsageError("sweep CSV must contain fncac and conventional aggregate rows")
    rows, vs_conv, vs_fuzzy = [], [], []
    for u in grid:
        fn = agg.get((u, "fncac"))
        conv = agg.get((u, "conventional"))
        fz = agg.get((u, "fuzzy"))
        if fn is None or conv is None:
            raise UsageError(f"utilization {u}: missing fncac or conventional row")
        rc = relative_reduction(fn, conv)
        rf = relative_reduction(fn, fz) if fz is not None else None
        if rc is not None:
            vs_conv.append(rc)
        if rf is not None:
            vs_fuzzy.append(rf)
        rows.append([u, conv, fz, fn, rc, rf])
    mean_c = float(np.mean(vs_conv)) if vs_conv else None
    mean_f = float(np.mean(vs_fuzzy)) if vs_fuzzy else None
    return rows, mean_c, mean_f


def cmd_compare(args) -> int:
    if not args.input:
        raise UsageError("compare needs a sweep CSV (positional argument)")
    rows, mean_c, mean_f = compare_table(read_sweep_csv(args.input))

    def cell(x):
        return "" if x is None else _fmt(x)

    text = _csv_text(COMPARE_HEADER, [[cell(v) for v in r] for r in rows])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(f"{'u':>6} {'conventional':>13} {'fuzzy':>10} {'fncac':>10} {'red_vs_conv':>12} {'red_vs_fuzzy':>13}")
    for u, conv, fz, fn, rc, rf in rows:
        pct = lambda x: "n/a" if x is None else f"{100 * x:.2f}%"  # noqa: E731
        print(f"{u:>6.3f} {conv:>13.6f} {'n/a' if fz is None else f'{fz:.6f}':>10} {fn:>10.6f} {pct(rc):>12} {pct(rf):>13}")
    print(f"mean reduction vs conventional: {'n/a' if mean_c is None else f'{100 * mean_c:.2f}%'}")
    print(f"mean reduction vs fuzzy: {'n/a' if mean_f is None else f'{100 * mean_f:.2f}%'}")
    return 0


def cmd_rules(args) -> int:
    _emit(fuzzy_rule_table(_fuzzy_system(args)) + "\n", args.out)
    return 0


# -- parser --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p, capacity=50, grid="0.1:0.9:0.1"):
    p.add_argument("--config", help="YAML file whose keys supply defaults for any flag")
    p.add_argument("--capacity", type=int, default=capacity, help="virtual channels N")
    p.add_argument("--grid", default=grid, help="start:stop:step (inclusive) or comma list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: stdout)")


def _sim_flags(p):
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--arrivals", type=int, default=100_000, help="arrivals per replication")
    p.add_argument("--warmup", type=int, default=None, help="warmup arrivals (default 10%% of --arrivals)")
    p.add_argument("--policy", default="conventional,fuzzy,fncac", help=f"comma list from {POLICIES}")
    p.add_argument("--model", help="trained FNCAC model file")
    p.add_argument("--thresholds", help="fixed A1,A2,A3 for the threshold policy")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="caclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("analytic", help="recurrence-model blocking over a grid of a = lambda/mu")
    _common(p)
    p.add_argument("--mode", default=analytic.PAPER, help="paper | cumulative")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("exact", help="exact complete-sharing blocking (Kaufman-Roberts)")
    _common(p)
    p.add_argument("--per-class-load", action="store_true", help="read grid values as per-class lambda/mu instead of aggregate utilization")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("simulate", help="simulate policies at one or more utilization points")
    _common(p, grid="0.7")
    _sim_flags(p)
    p.set_defaults(policy="conventional")
    p.add_argument("--scenario", help="YAML scenario file (overrides --capacity/--grid)")
    p.add_argument("--trace", help="write the event trace of replication 0")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="search the oracle, generate data and train the FNCAC model")
    _common(p, grid=None)
    p.add_argument("--samples", type=int, default=None, help="labeled samples (default 1000)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--hidden", help="hidden layer sizes, e.g. 16,16")
    p.add_argument("--preset", choices=("desk", "large"), default="desk")
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="blocking per class and policy over a utilization grid")
    _common(p)
    _sim_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="relative FNCAC blocking reduction from a sweep CSV")
    p.add_argument("input", nargs="?", help="sweep CSV")
    p.add_argument("--config")
    p.add_argument("--out", help="write the per-point table as CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rules", help="print fuzzy memberships and rule base")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rules)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Install values from ``--config`` as subcommand defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not known.command:
        return
    try:
        data = yaml.safe_load(Path(known.config).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{known.config}: expected a mapping")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subparsers.choices.get(known.command)
    if sub is None:
        return
    dests = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest == "fuzzy":
            defaults["fuzzy"] = value
        elif dest == "scenario" and isinstance(value, dict):
            continue  # inline scenarios are read through --scenario files
        elif dest == "thresholds" and isinstance(value, (list, tuple)):
            defaults["thresholds"] = ",".join(str(v) for v in value)
        elif dest in dests:
            defaults[dest] = value
        else:
            raise UsageError(f"{known.config}: unknown key {key!r} for '{known.command}'")
    sub.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return 2
        return args.func(args)
    except UsageError as exc:
        print(f"caclab: error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, PolicyError, analytic.AnalyticError) as exc:
        print(f"caclab: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"caclab: error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, ModelFormatError, RuntimeError, OSError) as exc:
        print(f"caclab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
