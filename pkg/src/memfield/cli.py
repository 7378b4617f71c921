"""Command-line surface: ingest, query, evolve, simulate, bench, export-field, synth.

Exit codes are a stable scripting contract: 0 success, 1 input or
configuration error, 2 numerical failure, 3 provider or storage failure.
Report-producing commands write delimited output and, by default, a PNG
figure next to it (--no-figure disables).  Snapshot-mutating commands
hold a file lock so two processes cannot interleave writes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np
from filelock import FileLock, Timeout

from . import figures, harness, synthetic
from .config import Config, load_config
from .errors import (ConfigError, CorruptSnapshot, IoFailure, MemfieldError,
                     NumericalBlowup, ProviderUnavailable, UnsupportedVersion)
from .multi_agent import run_scenario
from .persistence import load as load_snapshot, save as save_snapshot
from .retrieval import retrieve

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_PROVIDER_IO = 3

LOCK_TIMEOUT_S = 30.0

_COMPONENT_NAMES = ("similarity", "field", "importance", "recency")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 is reserved for numerical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("configuration (flags > env > file > defaults)")
    g.add_argument("--config", metavar="FILE", help="JSON config file")
    g.add_argument("--snapshot", metavar="FILE", help="snapshot path to operate on")
    g.add_argument("--seed", dest="projection_seed", type=int,
                   help="projection seed (default 0)")
    g.add_argument("--weights", metavar="A,B,C,D",
                   help="similarity,field,importance,recency weights (sum to 1)")
    g.add_argument("--evolution-interval", dest="evolution_interval", type=float,
                   help="auto-evolve when this much time passed since last step")
    g.add_argument("--mask-floor", dest="mask_floor", type=float)
    g.add_argument("--prune-every", dest="prune_every", type=int,
                   help="prune cadence in steps (0 disables)")
    for name in ("grid-size", "diffusion", "decay", "dt", "spacing", "alpha",
                 "beta", "gamma", "sigma0", "prune-eps", "i-cap"):
        dest = name.replace("-", "_")
        kind = int if dest == "grid_size" else float
        g.add_argument(f"--{name}", dest=dest, type=kind)
    p = parser.add_argument_group("embedding provider")
    p.add_argument("--provider", choices=("local", "remote"))
    p.add_argument("--endpoint", help="remote embedding endpoint URL")
    p.add_argument("--model", help="remote embedding model name")
    p.add_argument("--api-key", dest="api_key")
    p.add_argument("--timeout-ms", dest="timeout_ms", type=float)
    p.add_argument("--dimension", type=int, help="embedding dimension override")


def _config_from_args(args: argparse.Namespace) -> Config:
    names = {f.name for f in dataclasses.fields(Config)}
    overrides = {k: v for k, v in vars(args).items() if k in names and v is not None}
    cfg = load_config(args.config, overrides=overrides)
    cfg.explicit_provider = any(
        k in overrides for k in ("provider", "endpoint", "model", "api_key",
                                 "timeout_ms", "dimension")
    ) or any(os.environ.get(v) for v in ("EMBED_ENDPOINT", "EMBED_MODEL"))
    return cfg


def _require_snapshot(cfg: Config) -> str:
    if not cfg.snapshot:
        raise ConfigError("no snapshot path; pass --snapshot or set it in the config file")
    return cfg.snapshot


def _lock(path: str) -> FileLock:
    return FileLock(path + ".lock", timeout=LOCK_TIMEOUT_S)


def _load_store(cfg: Config, path: str):
    provider = cfg.make_provider() if getattr(cfg, "explicit_provider", False) else None
    return load_snapshot(path, provider=provider)


def _figure_path(out: str) -> str:
    base, _ = os.path.splitext(out)
    return base + ".png"


def _print_json(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    path = _require_snapshot(cfg)
    with _lock(path):
        if os.path.exists(path):
            store = _load_store(cfg, path)
            if cfg.weights is not None:
                store.default_weights = cfg.retrieval_weights()
        else:
            store = cfg.make_store()
        steps_before = store.steps_done
        report = harness.ingest_turns(store, args.input, skip_errors=args.skip_errors)
        n_bytes = save_snapshot(store, path)
    _print_json({
        "records_added": report.ingested,
        "records_total": len(store.records),
        "skipped": [{"line": n, "reason": reason} for n, reason in report.skipped],
        "steps_evolved": store.steps_done - steps_before,
        "clock": store.clock,
        "snapshot": path,
        "snapshot_bytes": n_bytes,
    })
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    path = _require_snapshot(cfg)
    with _lock(path):
        store = _load_store(cfg, path)
        results = retrieve(store, args.text, k=args.k,
                           weights=cfg.retrieval_weights(), now=args.now)
        save_snapshot(store, path)
    _print_json({
        "query": args.text,
        "k": args.k,
        "results": [{
            "id": r.memory_id,
            "text": store.get(r.memory_id).text,
            "score": r.score,
            "components": dict(zip(_COMPONENT_NAMES, r.components)),
        } for r in results],
    })
    return EXIT_OK


def cmd_evolve(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    path = _require_snapshot(cfg)
    with _lock(path):
        store = _load_store(cfg, path)
        until = args.until if args.until is not None else store.clock + args.duration
        report = store.tick(until)
        n_bytes = save_snapshot(store, path)
    _print_json({
        "steps": report.steps,
        "pruned_cells": report.pruned_cells,
        "field_time": report.field_time,
        "active_cells": report.active_cells,
        "snapshot_bytes": n_bytes,
    })
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    report = run_scenario(
        n_agents=args.agents, topology=args.topology, coupling_k=args.coupling,
        items_per_agent=args.items, max_steps=args.steps,
        target_ci=args.target_ci, params=cfg.field_params(),
        seed=cfg.projection_seed, check_every=args.check_every)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "ci", "max_pairwise_diff", "active_cells_total"])
        writer.writerows(report.trace())
    figure = None
    if not args.no_figure:
        figure = figures.save_ci_trace(report, _figure_path(args.out))
    _print_json({
        "n_agents": report.n_agents,
        "topology": report.topology,
        "coupling_strength": report.coupling_strength,
        "status": "converged" if report.converged else "no-convergence",
        "final_ci": report.final_ci,
        "sharing_efficiency": report.efficiency,
        "steps_to_convergence": report.steps_to_convergence,
        "steps_run": report.rows[-1].step if report.rows else 0,
        "wall_time_s": report.wall_time_s,
        "trace_csv": args.out,
        "figure": figure,
    })
    return EXIT_OK


def _write_bench_csv(path: str, reports: list[harness.BenchReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "mode", "question", "type", "recall", "precision",
                         "token_f1", "exact_match", "missing_evidence", "retrieved_ids"])
        for report in reports:
            for r in report.results:
                writer.writerow([
                    "question", report.mode, r.question, r.qtype,
                    r.recall, r.precision, r.token_f1, r.exact_match,
                    "|".join(str(t) for t in r.missing_evidence),
                    "|".join(str(i) for i in r.retrieved_ids),
                ])
        for report in reports:
            agg = report.aggregate()
            writer.writerow([
                "aggregate", report.mode, "", "", agg["mean_recall"],
                agg["mean_precision"], agg["mean_token_f1"],
                agg["exact_match_rate"],
                agg["questions_with_missing_evidence"], "",
            ])


def _print_bench_table(aggregates: list[dict]) -> None:
    header = (f"{'mode':<10}{'questions':>10}{'recall':>10}"
              f"{'precision':>10}{'token_f1':>10}{'exact':>8}")
    print(header)
    print("-" * len(header))
    for agg in aggregates:
        row = f"{agg['mode']:<10}{agg['n_questions']:>10}"
        for key, width in (("mean_recall", 10), ("mean_precision", 10),
                           ("mean_token_f1", 10), ("exact_match_rate", 8)):
            v = agg.get(key)
            row += f"{v:>{width}.3f}" if isinstance(v, float) else f"{'-':>{width}}"
        print(row)


def _bench_synthetic(args: argparse.Namespace) -> int:
    comparison = synthetic.compare_modes(range(args.synthetic))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scope", "seed", "field_recall", "baseline_recall"])
        for seed, f, b in zip(comparison.seeds, comparison.field_recall,
                              comparison.baseline_recall):
            writer.writerow(["seed", seed, f, b])
        writer.writerow(["aggregate", "", comparison.mean_field, comparison.mean_baseline])
    figure = None
    if not args.no_figure:
        figure = figures.save_seed_comparison(comparison, _figure_path(args.out))
    _print_json({
        "seeds": len(comparison.seeds),
        "mean_field_recall": comparison.mean_field,
        "mean_baseline_recall": comparison.mean_baseline,
        "seeds_improved": comparison.n_improved,
        "seeds_regressed": comparison.n_regressed,
        "metrics_csv": args.out,
        "figure": figure,
    })
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    if args.synthetic is not None:
        return _bench_synthetic(args)
    if not args.corpus or not args.questions:
        raise ConfigError("bench needs a corpus and a questions file "
                          "(or --synthetic N for the built-in fixture)")
    cfg = _config_from_args(args)
    store = cfg.make_store()
    ingest = harness.ingest_turns(store, args.corpus, skip_errors=args.skip_errors)
    questions = harness.load_questions(args.questions)
    modes = ("field", "baseline") if args.mode == "both" else (args.mode,)
    reports = [harness.run_bench(store, questions, ingest.id_by_turn,
                                 k=args.k, mode=m) for m in modes]
    _write_bench_csv(args.out, reports)
    aggregates = [r.aggregate() for r in reports]
    figure = None
    if not args.no_figure:
        figure = figures.save_bench_comparison(aggregates, _figure_path(args.out))
    _print_bench_table(aggregates)
    _print_json({
        "corpus_records": ingest.ingested,
        "skipped_lines": len(ingest.skipped),
        "aggregates": aggregates,
        "metrics_csv": args.out,
        "figure": figure,
    })
    return EXIT_OK


def _write_pgm(field, path: str) -> None:
    n = field.grid_size
    dense = np.zeros((n, n))
    for (r, c), v in field.cells.items():
        dense[r, c] = abs(v)
    peak = dense.max()
    scaled = (np.zeros((n, n), dtype=np.uint8) if peak == 0.0
              else np.round(dense / peak * 255.0).astype(np.uint8))
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{n} {n}\n255\n".encode())
            fh.write(scaled.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def cmd_export_field(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    path = _require_snapshot(cfg)
    store = _load_store(cfg, path)
    out = args.out or ("field.pgm" if args.format == "pgm" else "field.csv")
    if args.format == "csv":
        try:
            with open(out, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                for (r, c) in sorted(store.field.cells):
                    writer.writerow([r, c, store.field.cells[(r, c)]])
        except OSError as exc:
            raise IoFailure(f"cannot write {out}: {exc}") from exc
    else:
        _write_pgm(store.field, out)
    figure = None
    if not args.no_figure:
        figure = figures.save_field_heatmap(store.field, _figure_path(out))
    _print_json({
        "format": args.format,
        "out": out,
        "active_cells": store.field.active_count,
        "grid_size": store.field.grid_size,
        "figure": figure,
    })
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    corpus = synthetic.synth_corpus(seed=args.synth_seed, n_sessions=args.sessions,
                                    turns_per_session=args.turns)
    try:
        with open(args.out_corpus, "w", encoding="utf-8") as fh:
            for row in corpus.turns:
                fh.write(json.dumps(row) + "\n")
        with open(args.out_questions, "w", encoding="utf-8") as fh:
            for row in corpus.questions:
                fh.write(json.dumps(row) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write corpus files: {exc}") from exc
    _print_json({
        "turns": len(corpus.turns),
        "questions": len(corpus.questions),
        "corpus": args.out_corpus,
        "questions_file": args.out_questions,
    })
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="memfield",
                     description="Field-based agent memory: store, evolve, retrieve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="inject a JSONL corpus into a snapshot")
    p.add_argument("input", help="corpus JSONL file")
    p.add_argument("--skip-errors", action="store_true",
                   help="skip bad lines and report them instead of aborting")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="rank memories for a query and print JSON")
    p.add_argument("text", help="query text")
    p.add_argument("-k", type=int, default=5, help="results to return (default 5)")
    p.add_argument("--now", type=float, default=None,
                   help="evaluation timestamp (default: snapshot clock)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evolve", help="advance a snapshot's field dynamics")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--until", type=float, help="absolute target time")
    g.add_argument("--duration", type=float, help="advance this far past the clock")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("simulate", help="run a multi-agent coupling scenario")
    p.add_argument("--agents", type=int, default=2, help="number of agents (2..16)")
    p.add_argument("--topology", choices=("full", "ring"), default="full")
    p.add_argument("--coupling", type=float, default=0.05, help="coupling strength")
    p.add_argument("--items", type=int, default=3, help="items injected per agent")
    p.add_argument("--steps", type=int, default=2000, help="step cap")
    p.add_argument("--target-ci", dest="target_ci", type=float, default=0.99)
    p.add_argument("--check-every", dest="check_every", type=int, default=1)
    p.add_argument("--out", default="simulate_trace.csv", help="trace CSV path")
    p.add_argument("--no-figure", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="score retrieval quality over a corpus")
    p.add_argument("corpus", nargs="?", help="corpus JSONL file")
    p.add_argument("questions", nargs="?", help="questions JSONL file")
    p.add_argument("--mode", choices=("field", "baseline", "both"), default="both")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--skip-errors", action="store_true")
    p.add_argument("--synthetic", type=int, metavar="SEEDS",
                   help="run the built-in anchor/distractor fixture over N seeds")
    p.add_argument("--out", default="bench_metrics.csv", help="metrics CSV path")
    p.add_argument("--no-figure", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-field", help="dump the field as CSV or PGM")
    p.add_argument("--format", choices=("csv", "pgm"), default="csv")
    p.add_argument("--out", default=None, help="output path (default field.<format>)")
    p.add_argument("--no-figure", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_export_field)

    p = sub.add_parser("synth", help="generate a synthetic corpus + questions")
    p.add_argument("--synth-seed", dest="synth_seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=4)
    p.add_argument("--turns", type=int, default=10)
    p.add_argument("--out-corpus", default="corpus.jsonl")
    p.add_argument("--out-questions", default="questions.jsonl")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalBlowup as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ProviderUnavailable, IoFailure, CorruptSnapshot, UnsupportedVersion) as exc:
        print(f"provider/storage error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER_IO
    except Timeout as exc:
        print(f"provider/storage error: snapshot is locked ({exc})", file=sys.stderr)
        return EXIT_PROVIDER_IO
    except MemfieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
