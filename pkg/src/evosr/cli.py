"""Command-line front end.

Subcommands: `sr run` (one inner SR run), `bench` (operator x dataset x
seed grid with raw/summary CSVs), `meta run` (outer loop, live/record/
replay), and `report` (render history or bench artifacts as tables).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import shlex
import sys
import time

import numpy as np

from . import dataio
from .engine import ConfigError, OperatorEvaluationError, SRConfig, run_sr
from .hosted import HostError
from .llm import ChatGateway, GatewayError, LLMConfig, ReplayMissError
from .meta import MetaConfig, MetaError, load_checkpoint, run_meta
from .selection import REGISTRY, UnknownOperatorError, resolve_operator

EXIT_OK = 0
EXIT_ERROR = 2


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_split(token: str, seed: int, target: str = "y") -> dataio.DatasetSplit:
    if token.startswith("synthetic:"):
        name = token.split(":", 1)[1]
        dataset = dataio.make_synthetic(name, seed=seed)
    else:
        dataset = dataio.load_csv(token, target)
    return dataio.make_split(dataset, seed=seed)


# ---------------------------------------------------------------------------
# sr run


def cmd_sr(args) -> int:
    operator = resolve_operator(args.operator, host_command=_host_command(args))
    split = _load_split(args.data, args.seed, args.target)
    config = SRConfig(
        population_size=args.pop,
        generations=args.generations,
        seed=args.seed,
    )
    result = run_sr(split, operator, config, operator_name=args.operator)
    with open(args.history_out, "w") as fh:
        for record in result.history:
            fh.write(json.dumps(record) + "\n")
    final = result.history[-1]
    print(f"dataset: {split.name}  operator: {args.operator}  seed: {args.seed}")
    print(f"train LOOCV error: {final['elite_train_loocv']:.6g}")
    print(f"validation R^2: {result.validation_r2:.6g}")
    print(f"tree size: {len(result.best)}  expression: {result.best.genome.canonical()}")
    print(f"history: {args.history_out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _run_cell(operator_name, data_token, seed, generations, pop, host_command, target="y"):
    operator = resolve_operator(operator_name, host_command=host_command)
    split = _load_split(data_token, seed, target)
    config = SRConfig(population_size=pop, generations=generations, seed=seed)
    start = time.perf_counter()
    result = run_sr(split, operator, config, operator_name=operator_name)
    wall = time.perf_counter() - start
    row = {
        "operator": operator_name,
        "dataset": data_token,
        "seed": seed,
        "validation_r2": result.validation_r2,
        "final_size": len(result.best),
        "wall_time_s": wall,
    }
    gen_rows = [
        {
            "operator": operator_name,
            "dataset": data_token,
            "seed": seed,
            "generation": rec["generation"],
            "diversity": rec["diversity"],
            "best_val_r2": rec["best_val_r2"],
        }
        for rec in result.history
    ]
    return row, gen_rows


def _csv_text(rows, fields) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def summarize_bench(rows) -> list:
    """Median validation R^2 and final size per operator x dataset cell."""
    groups: dict = {}
    for row in rows:
        key = (row["operator"], row["dataset"])
        groups.setdefault(key, []).append(row)
    summary = []
    for (operator, dataset) in sorted(groups):
        cell = groups[(operator, dataset)]
        summary.append(
            {
                "operator": operator,
                "dataset": dataset,
                "runs": len(cell),
                "median_validation_r2": float(
                    np.median([float(r["validation_r2"]) for r in cell])
                ),
                "median_final_size": float(
                    np.median([float(r["final_size"]) for r in cell])
                ),
            }
        )
    return summary


def _format_table(rows, fields) -> str:
    data = [[str(row[f]) for f in fields] for row in rows]
    widths = [max(len(f), *(len(r[i]) for r in data)) if data else len(f) for i, f in enumerate(fields)]
    lines = ["# " + "  ".join(f.ljust(w) for f, w in zip(fields, widths))]
    for r in data:
        lines.append("  " + "  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def _parse_seeds(token: str) -> list:
    parts = [p for p in token.split(",") if p.strip()]
    if len(parts) == 1 and "," not in token:
        return list(range(int(parts[0])))
    return [int(p) for p in parts]


def cmd_bench(args) -> int:
    operators = [o for o in args.operators.split(",") if o]
    datasets = [d for d in args.datasets.split(",") if d]
    seeds = _parse_seeds(args.seeds)
    if not operators or not datasets or not seeds:
        print("bench: empty grid (need operators, datasets and seeds)", file=sys.stderr)
        return EXIT_ERROR
    for name in operators:
        resolve_operator(name, host_command=_host_command(args))  # fail fast

    cells = [(o, d, s) for o in operators for d in datasets for s in seeds]
    rows, gen_rows = [], []
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_run_cell, o, d, s, args.generations, args.pop,
                            _host_command(args), args.target)
                for o, d, s in cells
            ]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [
            _run_cell(o, d, s, args.generations, args.pop, _host_command(args), args.target)
            for o, d, s in cells
        ]
    for row, cell_gens in outcomes:
        rows.append(row)
        gen_rows.extend(cell_gens)

    os.makedirs(args.out, exist_ok=True)
    raw_fields = ["operator", "dataset", "seed", "validation_r2", "final_size", "wall_time_s"]
    gen_fields = ["operator", "dataset", "seed", "generation", "diversity", "best_val_r2"]
    _atomic_write(os.path.join(args.out, "raw.csv"), _csv_text(rows, raw_fields))
    _atomic_write(os.path.join(args.out, "generations.csv"), _csv_text(gen_rows, gen_fields))
    summary = summarize_bench(rows)
    summary_fields = ["operator", "dataset", "runs", "median_validation_r2", "median_final_size"]
    _atomic_write(os.path.join(args.out, "summary.csv"), _csv_text(summary, summary_fields))
    print(_format_table(summary, summary_fields))
    print(f"artifacts: {args.out}/raw.csv generations.csv summary.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# meta run


def _host_command(args):
    raw = getattr(args, "host_command", None)
    return shlex.split(raw) if raw else None


def cmd_meta(args) -> int:
    splits = dataio.manifest_splits(args.manifest)
    gateway = ChatGateway(
        LLMConfig(
            mode=args.mode,
            transcript_path=args.transcript,
            model=args.model,
            endpoint=args.endpoint,
        )
    )
    inner = SRConfig(
        population_size=args.inner_pop,
        generations=args.inner_generations,
        seed=args.seed,
    )
    config = MetaConfig(
        pool_size=args.pool_size,
        mutation_count=args.mutation_count,
        generations=args.generations,
        length_target=args.length_target,
        inner=inner,
        survival=args.survival,
        semantic_feedback=args.feedback,
        domain_knowledge=not args.no_domain_knowledge,
        seed=args.seed,
        gate_time_limit=args.gate_time_limit,
        host_command=_host_command(args),
        checkpoint_dir=args.checkpoint_dir,
    )
    resume_state = load_checkpoint(args.resume) if args.resume else None
    result = run_meta(config, gateway, splits, resume_state=resume_state)
    best = result.best
    print(f"generations completed: {result.generations_completed}")
    print(f"best candidate: id={best.id} provenance={best.provenance} "
          f"fitness={best.fitness:.6g}")
    print(f"score vector: {[round(s, 6) for s in best.score_vector]}")
    print("source:")
    print(best.source)
    if config.checkpoint_dir:
        print(f"checkpoints: {config.checkpoint_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    path = args.artifact
    if path.endswith(".csv"):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            print("report: no rows", file=sys.stderr)
            return EXIT_ERROR
        if "validation_r2" in rows[0]:
            summary = summarize_bench(rows)
            fields = ["operator", "dataset", "runs", "median_validation_r2", "median_final_size"]
            print(_format_table(summary, fields))
        else:
            print(_format_table(rows, list(rows[0].keys())))
        return EXIT_OK
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        print("report: no records", file=sys.stderr)
        return EXIT_ERROR
    fields = list(records[0].keys())
    printable = [
        {f: (f"{v:.6g}" if isinstance(v, float) else v) for f, v in rec.items()}
        for rec in records
    ]
    print(_format_table(printable, fields))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evosr", description=__doc__)
    parser.add_argument("--config", help="JSON file of flag defaults (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    sr = sub.add_parser("sr", help="inner symbolic-regression runs")
    sr_sub = sr.add_subparsers(dest="sr_command", required=True)
    sr_run = sr_sub.add_parser("run", help="run one SR configuration")
    sr_run.add_argument("--data", required=True, help="CSV path or synthetic:<name>")
    sr_run.add_argument("--target", default="y", help="target column for CSV data")
    sr_run.add_argument("--operator", required=True)
    sr_run.add_argument("--seed", type=int, default=0)
    sr_run.add_argument("--generations", type=int, default=100)
    sr_run.add_argument("--pop", type=int, default=100)
    sr_run.add_argument("--history-out", default="history.jsonl")
    sr_run.add_argument("--host-command", default=None)
    sr_run.set_defaults(func=cmd_sr)

    bench = sub.add_parser("bench", help="operator x dataset x seed grid")
    bench.add_argument("--operators", required=True, help="comma-separated registry names")
    bench.add_argument("--datasets", required=True, help="comma-separated CSV paths or synthetic:<name>")
    bench.add_argument("--target", default="y", help="target column for CSV datasets")
    bench.add_argument("--seeds", required=True, help="comma list, or a count meaning 0..count-1")
    bench.add_argument("--generations", type=int, default=100)
    bench.add_argument("--pop", type=int, default=100)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", default="bench_out")
    bench.add_argument("--host-command", default=None)
    bench.set_defaults(func=cmd_bench)

    meta = sub.add_parser("meta", help="outer loop evolving selection operators")
    meta_sub = meta.add_subparsers(dest="meta_command", required=True)
    meta_run = meta_sub.add_parser("run", help="run or resume meta-evolution")
    meta_run.add_argument("--manifest", required=True)
    meta_run.add_argument("--mode", choices=["live", "record", "replay"], default="replay")
    meta_run.add_argument("--transcript", default=None)
    meta_run.add_argument("--model", default=None)
    meta_run.add_argument("--endpoint", default=None)
    meta_run.add_argument("--seed", type=int, default=0)
    meta_run.add_argument("--pool-size", type=int, default=20)
    meta_run.add_argument("--mutation-count", type=int, default=1)
    meta_run.add_argument("--generations", type=int, default=20)
    meta_run.add_argument("--length-target", type=int, default=30)
    meta_run.add_argument("--inner-pop", type=int, default=100)
    meta_run.add_argument("--inner-generations", type=int, default=30)
    meta_run.add_argument("--survival", choices=["dominance_dissimilarity", "replacement_elitism"],
                          default="dominance_dissimilarity")
    meta_run.add_argument("--feedback", choices=["vector", "scalar"], default="vector")
    meta_run.add_argument("--no-domain-knowledge", action="store_true")
    meta_run.add_argument("--gate-time-limit", type=float, default=300.0)
    meta_run.add_argument("--checkpoint-dir", default=None)
    meta_run.add_argument("--resume", default=None, help="checkpoint JSON to continue from")
    meta_run.add_argument("--host-command", default=None)
    meta_run.set_defaults(func=cmd_meta)

    report = sub.add_parser("report", help="render history/bench artifacts as tables")
    report.add_argument("artifact", help="history .jsonl or bench .csv")
    report.set_defaults(func=cmd_report)
    return parser


def _apply_config_file(parser, argv):
    """Let a JSON config provide defaults for any flag not given explicitly."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        parser.error("--config needs a path")
    with open(argv[i + 1]) as fh:
        defaults = json.load(fh)
    if not isinstance(defaults, dict):
        parser.error("--config must hold a JSON object")
    extra = []
    for key, value in defaults.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    # Insert after the subcommand tokens so argparse routes them correctly.
    cleaned = [a for j, a in enumerate(argv) if j not in (i, i + 1)]
    return cleaned + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UnknownOperatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("available operators: " + ", ".join(exc.available), file=sys.stderr)
        return EXIT_ERROR
    except ReplayMissError as exc:
        print(f"error: replay miss: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (
        dataio.DataError,
        GatewayError,
        MetaError,
        ConfigError,
        OperatorEvaluationError,
        HostError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
