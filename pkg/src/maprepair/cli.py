"""Command-line entry point.

Exit codes: 0 safe (or success), 1 unsafe, 2 usage, input or parse error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path
from statistics import median
from typing import List, Optional, Sequence

from .chase import visible_chase
from .model import (
    Instance,
    ParseError,
    Schema,
    Tgd,
    parse_dependencies,
    parse_instance,
    parse_schema,
    serialize_labeled,
)
from .preference import (
    PAVG,
    PMAX,
    PreferenceFunction,
    candidate_pairs,
    dump_measurements,
    evaluate,
    generate_training_set,
    knn_train,
    load_measurements,
)
from .repair import dump_log, repair
from .safety import Policy, check_forest
from .scenarios import Scenario, ScenarioConfig, generate, load_scenario

EXIT_SAFE = 0
EXIT_UNSAFE = 1
EXIT_USAGE = 2

SEED_ENV = "MAPREPAIR_SEED"

log = logging.getLogger("maprepair")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# input helpers


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from e


def _parse(path, fn, *args, **kw):
    try:
        return fn(_read(path), *args, **kw)
    except ParseError as e:
        raise UsageError(f"{path}:{e.line}:{e.column}: {e.message}") from e


def load_inputs(schema_path, views_path, mapping_path):
    source: Schema = _parse(schema_path, parse_schema)
    if str(views_path).endswith(".instance"):
        policy = Policy(instance=_parse(views_path, parse_instance, source))
    else:
        policy = Policy(_parse(views_path, parse_dependencies, source, id_prefix="v"), source)
    tgds: List[Tgd] = _parse(mapping_path, parse_dependencies, source)
    return source, policy, tgds


def load_prf(spec: str) -> PreferenceFunction:
    if spec == "max":
        return PMAX
    if spec == "avg":
        return PAVG
    if spec.startswith("knn:"):
        rest = spec[4:]
        k = 1
        if "@" in rest:
            rest, k_text = rest.rsplit("@", 1)
            k = int(k_text)
        try:
            data = load_measurements(_read(rest))
            return knn_train(data, k)
        except ValueError as e:
            raise UsageError(f"{rest}: {e}") from e
    raise UsageError(f"unknown preference {spec!r}; use max, avg or knn:<model.csv>")


def _seed_override(cfg: ScenarioConfig) -> ScenarioConfig:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return cfg
    try:
        seed = int(env)
    except ValueError as e:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from e
    return ScenarioConfig(**{**cfg.to_json(), "seed": seed})


def load_config(path: Optional[str], args=None) -> ScenarioConfig:
    d = {}
    if path:
        try:
            d = json.loads(_read(path))
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if args is not None:
        for key in ("n_dep", "n_atoms", "n_vars", "n_views", "max_arity", "seed", "n_relations"):
            v = getattr(args, key, None)
            if v is not None:
                d[key] = v
    cfg = _seed_override(ScenarioConfig.from_json(d))
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return cfg


def _scenario_dirs(root) -> List[Path]:
    root = Path(root)
    if (root / "mapping.tgds").exists():
        return [root]
    if not root.is_dir():
        raise UsageError(f"{root}: not a scenario directory")
    return sorted(p for p in root.iterdir() if (p / "mapping.tgds").exists())


def _scenarios(args) -> List[Scenario]:
    if getattr(args, "scenarios", None):
        return [_load_scenario(d) for d in _scenario_dirs(args.scenarios)]
    if getattr(args, "gen", None):
        base = load_config(args.gen)
        return [generate(ScenarioConfig(**{**base.to_json(), "seed": base.seed + i})) for i in range(args.count)]
    return []


def _load_scenario(d) -> Scenario:
    try:
        return load_scenario(d)
    except ParseError as e:
        raise UsageError(f"{d}:{e.line}:{e.column}: {e.message}") from e


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    start = time.perf_counter()
    source, policy, tgds = load_inputs(args.schema, args.views, args.mapping)
    t0 = time.perf_counter()
    _ = policy.instance
    forest = visible_chase(tgds, source)
    t_chase = time.perf_counter() - t0
    t0 = time.perf_counter()
    report = check_forest(forest, policy)
    t_check = time.perf_counter() - t0
    if args.dot:
        Path(args.dot).write_text(forest.to_dot())
    if args.json:
        _emit(report.to_json())
    else:
        print(report.verdict)
        if not report.safe:
            print("unsafe bags: " + ", ".join(str(b) for b in report.unsafe_bags))
            print("offending tgds: " + ", ".join(report.offending_tgds))
    log.info("check: chase %.4fs, test %.4fs, total %.4fs", t_chase, t_check, time.perf_counter() - start)
    return EXIT_SAFE if report.safe else EXIT_UNSAFE


def cmd_repair(args) -> int:
    start = time.perf_counter()
    source, policy, tgds = load_inputs(args.schema, args.views, args.mapping)
    prf = load_prf(args.pref)
    if args.max_iter < 1:
        raise UsageError("--max-iter must be positive")
    outcome = repair(tgds, policy, source, prf, args.max_iter, incremental=not args.full_recompute)
    out = Path(args.output)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.jsonl")
    if not outcome.log:
        out.write_bytes(Path(args.mapping).read_bytes())
    else:
        out.write_text(serialize_labeled(outcome.tgds))
    log_path.write_text(dump_log(outcome.log))
    total = time.perf_counter() - start
    report = {
        "command": "repair",
        "inputs": {"schema": str(args.schema), "views": str(args.views), "mapping": str(args.mapping),
                   "pref": args.pref, "max_iter": args.max_iter},
        "verdict": outcome.report.verdict,
        "outputs": {"mapping": str(out), "log": str(log_path), "empty": outcome.empty},
        "timings": {**outcome.timings, "total": total},
        "counts": outcome.counts,
    }
    if args.json:
        _emit(report)
    else:
        print(f"{outcome.report.verdict}: {len(outcome.tgds)} of {len(tgds)} tgds kept, "
              f"{len(outcome.log)} repair steps -> {out}")
        if outcome.empty:
            print("warning: every tgd was dropped")
    return EXIT_SAFE if outcome.safe else EXIT_UNSAFE


def cmd_learn(args) -> int:
    golden = load_prf(args.golden)
    scenarios = _scenarios(args)
    data = generate_training_set(scenarios, golden, args.size)
    Path(args.out).write_text(dump_measurements(data))
    print(f"{len(data)} measurements from {len(scenarios)} scenarios -> {args.out}")
    return EXIT_SAFE


def cmd_eval(args) -> int:
    golden = load_prf(args.golden)
    learned = load_prf("knn:" + args.model if not args.model.startswith("knn:") else args.model)
    sets: List[list] = []
    for sc in _scenarios(args):
        repair(sc.tgds, sc.policy(), sc.source, golden, on_candidates=sets.append)
    pairs = candidate_pairs(sets)
    if not pairs:
        raise UsageError("no candidate pairs to evaluate")
    cm, _ = evaluate(golden, learned, pairs)
    _emit(cm.to_json())
    return EXIT_SAFE


def cmd_gen(args) -> int:
    cfg = load_config(args.config, args)
    sc = generate(cfg)
    sc.write(args.output)
    print(f"scenario with {len(sc.tgds)} tgds and {len(sc.views)} views -> {args.output}")
    return EXIT_SAFE


def run_one(sc: Scenario, prf: PreferenceFunction, n: int) -> dict:
    start = time.perf_counter()
    before = time.perf_counter()
    policy = sc.policy()
    _ = policy.instance
    view_chase = time.perf_counter() - before
    outcome = repair(sc.tgds, policy, sc.source, prf, n)
    total = time.perf_counter() - start
    timings = dict(outcome.timings)
    timings["visible_chase"] += view_chase
    timings["total"] = total
    return {
        "command": "bench",
        "inputs": {**(sc.config.to_json() if sc.config else {}), "pref": prf.kind, "max_iter": n},
        "verdict": outcome.report.verdict,
        "outputs": {"tgds": len(outcome.tgds), "empty": outcome.empty},
        "timings": timings,
        "counts": outcome.counts,
    }


def cmd_bench(args) -> int:
    from .plots import plot_phase_breakdown, plot_repair_time

    base = load_config(args.config, args)
    prf = load_prf(args.pref)
    sizes = args.sizes or [base.n_dep]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for size in sizes:
        for k in range(args.seeds):
            cfg = ScenarioConfig(**{**base.to_json(), "n_dep": size, "seed": base.seed + k})
            reports.append(run_one(generate(cfg), prf, args.max_iter))
    with open(out / "reports.jsonl", "w") as f:
        for r in reports:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n_dep", "runs", "median_total_s", "median_visible_chase_s", "median_safety_check_s",
                    "median_repair_s", "all_safe"])
        for size in sizes:
            rs = [r for r in reports if r["inputs"]["n_dep"] == size]
            w.writerow([size, len(rs)] + [f"{median(r['timings'][p] for r in rs):.6f}"
                                          for p in ("total", "visible_chase", "safety_check", "repair")]
                       + [all(r["verdict"] == "Safe" for r in rs)])
    plot_repair_time(reports, out / "repair_time.png")
    plot_phase_breakdown(reports, out / "phases.png")
    med = median(r["timings"]["total"] for r in reports)
    print(f"{len(reports)} runs, median repair time {med:.4f}s -> {out}")
    return EXIT_SAFE


# ---------------------------------------------------------------------------
# argument parsing


def _add_gen_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-dep", type=int, dest="n_dep")
    p.add_argument("--n-atoms", type=int, dest="n_atoms")
    p.add_argument("--n-vars", type=int, dest="n_vars")
    p.add_argument("--n-views", type=int, dest="n_views")
    p.add_argument("--n-relations", type=int, dest="n_relations")
    p.add_argument("--max-arity", type=int, dest="max_arity")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maprepair", description="Check and repair s-t tgds against policy views.")
    p.add_argument("-v", "--verbose", action="store_true", help="log timings and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="decide safety of a mapping")
    c.add_argument("schema")
    c.add_argument("views", help="views file, or a visible instance ending in .instance")
    c.add_argument("mapping")
    c.add_argument("--json", action="store_true")
    c.add_argument("--dot", help="write the bag forest as a DOT graph")
    c.set_defaults(func=cmd_check)

    r = sub.add_parser("repair", help="repair a mapping")
    r.add_argument("schema")
    r.add_argument("views")
    r.add_argument("mapping")
    r.add_argument("--pref", default="max", help="max, avg or knn:<model.csv>[@k]")
    r.add_argument("--max-iter", type=int, default=10)
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--log", help="step log path (default: <output>.log.jsonl)")
    r.add_argument("--full-recompute", action="store_true", help="do not reuse bags between iterations")
    r.add_argument("--json", action="store_true")
    r.set_defaults(func=cmd_repair)

    l = sub.add_parser("learn", help="write a training set from golden choices")
    l.add_argument("--golden", choices=["max", "avg"], required=True)
    src = l.add_mutually_exclusive_group()
    src.add_argument("--scenarios", help="scenario directory, or a directory of them")
    src.add_argument("--gen", help="generator config JSON")
    l.add_argument("--count", type=int, default=20, help="scenarios to generate with --gen")
    l.add_argument("--size", type=int, help="stop after this many measurements")
    l.add_argument("--out", required=True)
    l.set_defaults(func=cmd_learn)

    e = sub.add_parser("eval", help="score a k-NN model against a golden preference")
    e.add_argument("--golden", choices=["max", "avg"], required=True)
    e.add_argument("--model", required=True)
    src = e.add_mutually_exclusive_group()
    src.add_argument("--pairs-from", dest="scenarios")
    src.add_argument("--gen")
    e.add_argument("--count", type=int, default=20)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gen", help="generate a scenario directory")
    g.add_argument("--config")
    _add_gen_flags(g)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="time repairs over generated scenarios")
    b.add_argument("--config")
    _add_gen_flags(b)
    b.add_argument("--sizes", type=int, nargs="+", help="n_dep values to sweep")
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--pref", default="max")
    b.add_argument("--max-iter", type=int, default=10)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
