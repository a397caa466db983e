"""Command-line driver: split, run, sweep, response, bench.

Exit codes: 0 success, 2 configuration error, 3 data/evaluation error,
4 capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import statistics
import sys
from pathlib import Path
from time import perf_counter

import numpy as np

from . import __version__, _kernels
from .errors import LowpassCFError, ParameterError
from .filters import FilterSpec, default_grid, fit_ideal_lpf, frequency_response, predefined_filter
from .interactions import checksum, load_interactions, serialize_interactions, write_split
from .metrics import STAGES
from .pipeline import (
    SCHEMA_VERSION,
    RunConfig,
    config_checksum,
    config_from_mapping,
    load_dataset,
    read_config,
    run,
    sweep,
)

DATA_OPTS = [
    ("--data", "input file (repeat to concatenate, e.g. train.txt and test.txt)"),
    ("--format", "adjacency or triplet"),
    ("--split-dir", "directory written by `split` (overrides --data)"),
    ("--synthetic", "planted-cluster dataset USERSxITEMS instead of files"),
    ("--train-frac", None),
    ("--test-frac", None),
    ("--val-frac", None),
]
MODEL_OPTS = [
    ("--alpha", "normalization exponent in [0, 1]"),
    ("--s", "Hadamard power exponent"),
    ("--kind", "linear, second_order, ideal_approx or custom"),
    ("--tau", "ideal_approx cutoff"),
    ("--beta", "ideal_approx blend weight"),
    ("--coeffs", "custom coefficients a1,a2,..."),
    ("--k", "list length"),
    ("--batch-size", None),
    ("--storage", "dense or blocked"),
    ("--block-rows", None),
    ("--spill", "blocked mode: memory-mapped graph cache file"),
    ("--memory-budget-gb", None),
    ("--dtype", "float64 or float32"),
    ("--sparsify-eps", "drop graph entries below this (default 0: off)"),
    ("--rescale", "divide the graph by its estimated spectral radius (true/false)"),
]
SWEEP_OPTS = [
    ("--alphas", "comma-separated grid"),
    ("--ss", "comma-separated grid"),
    ("--betas", "comma-separated grid"),
    ("--kinds", "comma-separated grid"),
]


def _add(parser, opts):
    for flag, help_text in opts:
        action = "append" if flag == "--data" else "store"
        parser.add_argument(flag, action=action, default=argparse.SUPPRESS, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value configuration file")
    common.add_argument("--threads", default=argparse.SUPPRESS, help="thread count for kernels and BLAS")
    common.add_argument("--seed", default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = argparse.ArgumentParser(prog="lowpass-cf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", parents=[common], help="write a seeded train/test/val split")
    _add(p, DATA_OPTS)
    p = sub.add_parser("run", parents=[common], help="build graph, filter, recommend, evaluate")
    _add(p, DATA_OPTS + MODEL_OPTS)
    p.add_argument("--eval-on", choices=("test", "val"), default="test")
    p = sub.add_parser("sweep", parents=[common], help="grid search on validation, report winner on test")
    _add(p, DATA_OPTS + MODEL_OPTS + SWEEP_OPTS)
    p = sub.add_parser("response", parents=[common], help="frequency response CSV")
    _add(p, [("--kind", None), ("--tau", None), ("--beta", "blend with the linear filter"), ("--coeffs", None)])
    p.add_argument("--points", type=int, default=1001)
    p.add_argument("--output", help="CSV path (default OUT/response.csv, '-' for stdout)")
    p = sub.add_parser("bench", parents=[common], help="repeated timed pipeline runs")
    _add(p, DATA_OPTS + MODEL_OPTS + [("--repetitions", "timed runs after one warm-up (>= 3)")])
    return parser


_NON_CONFIG = {"command", "config", "eval_on", "points", "output"}


def make_config(args) -> RunConfig:
    entries = read_config(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if key in _NON_CONFIG:
            continue
        entries[key] = ",".join(value) if isinstance(value, list) else value
    config = config_from_mapping(entries)
    for path in (*config.data, *([config.split_dir] if config.split_dir else [])):
        if not Path(path).exists():
            raise ParameterError(f"no such file or directory: {path}")
    return config


def _header():
    return f"# schema_version={SCHEMA_VERSION}\n"


def cmd_split(config: RunConfig, args):
    if config.data:
        R = load_interactions(config.data, config.format)
        raw = b"".join(Path(p).read_bytes() for p in config.data)
    elif config.synthetic:
        from .synthetic import planted_clusters

        n_users, n_items = (int(v) for v in config.synthetic.lower().split("x"))
        R = planted_clusters(n_users, n_items, seed=config.seed)
        raw = serialize_interactions(R, "adjacency")
    else:
        raise ParameterError("split needs --data or --synthetic")
    paths = write_split(config.out, R, config.split_spec(), checksum(raw))
    print(f"wrote split to {config.out} (manifest {paths['manifest']})")


def _write_report(out: Path, report, name="metrics"):
    out.mkdir(parents=True, exist_ok=True)
    # stage timings live in their own file so metric reports stay byte-reproducible
    (out / f"{name}.json").write_text(report.to_json(timings=False), encoding="utf-8")
    timings = {"schema_version": SCHEMA_VERSION, "stage_timings": report.stage_timings}
    (out / f"{name}_timings.json").write_text(json.dumps(timings, indent=2) + "\n", encoding="utf-8")
    (out / f"{name}.txt").write_text(report.to_table(), encoding="utf-8")


def cmd_run(config: RunConfig, args):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    dump = None
    if config.dump:
        dump = open(out / "recommendations.tsv", "w", encoding="utf-8", newline="\n")
        dump.write(_header())
    try:
        report = run(config, heldout=getattr(args, "eval_on", "test"), dump=dump)
    finally:
        if dump is not None:
            dump.close()
    _write_report(out, report)
    print(report.to_table(), end="")


def cmd_sweep(config: RunConfig, args):
    rows, best, test_report = sweep(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(_header())
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "alpha", "s", "kind", "beta", f"val_recall@{config.k}", f"val_ndcg@{config.k}"])
    # stable sort: equal recalls keep grid order
    ranked = sorted(rows, key=lambda r: -r["recall"])
    for i, r in enumerate(ranked, start=1):
        beta = "" if r["beta"] is None else repr(r["beta"])
        writer.writerow([i, repr(r["alpha"]), repr(r["s"]), r["kind"], beta, f"{r['recall']:.10f}", f"{r['ndcg']:.10f}"])
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    _write_report(out, test_report, "sweep_best_test")
    print(buf.getvalue(), end="")
    print(f"best on validation: {best}")
    print(test_report.to_table(), end="")


def cmd_response(args):
    kind = getattr(args, "kind", "linear")
    tau = float(getattr(args, "tau", 0.1))
    beta = float(args.beta) if hasattr(args, "beta") else None
    if kind == "custom":
        if not hasattr(args, "coeffs"):
            raise ParameterError("kind=custom needs --coeffs")
        f = FilterSpec([float(c) for c in args.coeffs.split(",")], "custom")
    elif kind == "ideal_approx":
        f = predefined_filter(kind, tau, 0.0)
        f = FilterSpec(f.coeffs, kind, tau=tau, beta=beta)
    else:
        f = predefined_filter(kind)
    if args.points < 2:
        raise ParameterError("--points must be >= 2")
    curve = frequency_response(f, default_grid(1.0, args.points))
    lines = [_header(), f"# kind={f.kind} coeffs={','.join(repr(c) for c in f.coeffs)}\n"]
    if kind == "ideal_approx":
        fit = fit_ideal_lpf(tau, len(f.coeffs))
        lines.append(f"# tau={tau!r} beta={beta!r} rms_vs_ideal={fit.rms:.10g}\n")
        print(f"RMS error vs ideal step (tau={tau}): {fit.rms:.6g}", file=sys.stderr)
    lines.append("lambda,gain\n")
    lines += [f"{lam:.6f},{g:.12g}\n" for lam, g in zip(*curve)]
    text = "".join(lines)
    target = args.output or str(Path(getattr(args, "out", "out")) / "response.csv")
    if target == "-":
        sys.stdout.write(text)
    else:
        Path(target).parent.mkdir(parents=True, exist_ok=True)
        Path(target).write_text(text, encoding="utf-8")
        print(f"wrote {target}")


def machine_descriptor(threads):
    model = platform.processor() or ""
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("model name"):
                    model = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    import os

    return {
        "cpu_model": model,
        "logical_cpus": os.cpu_count(),
        "threads": threads,
        "kernel_backend": _kernels.BACKEND,
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def bench(config: RunConfig):
    """One warm-up plus ``config.repetitions`` timed pipeline runs; returns the bench document."""
    if config.repetitions < 3:
        raise ParameterError(f"bench needs >= 3 repetitions, got {config.repetitions}")
    config.dump = False
    samples = []
    report = None
    for rep in range(config.repetitions + 1):
        t0 = perf_counter()
        data = load_dataset(config)
        report = run(config, data=data)
        total = perf_counter() - t0
        if rep:  # rep 0 is the warm-up
            samples.append({**report.stage_timings, "total": total})

    def summary(key):
        values = [s[key] for s in samples]
        return {"median": statistics.median(values), "min": min(values), "max": max(values)}

    return {
        "schema_version": SCHEMA_VERSION,
        "machine": machine_descriptor(config.threads),
        "config_checksum": config_checksum(config),
        "kind": config.kind,
        "repetitions": config.repetitions,
        "stages": {stage: summary(stage) for stage in (*STAGES, "total")},
        "recall": report.recall,
        "ndcg": report.ndcg,
    }


def cmd_bench(config: RunConfig, args):
    doc = bench(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    width = max(len(s) for s in doc["stages"])
    print(f"{'stage':<{width}}  {'median':>10}  {'min':>10}  {'max':>10}")
    for stage, t in doc["stages"].items():
        print(f"{stage:<{width}}  {t['median']:>10.4f}  {t['min']:>10.4f}  {t['max']:>10.4f}")


COMMANDS = {"split": cmd_split, "run": cmd_run, "sweep": cmd_sweep, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "response":
            cmd_response(args)
        else:
            COMMANDS[args.command](make_config(args), args)
    except LowpassCFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError as exc:
        print(f"error: out of memory ({exc}); try --storage blocked --spill FILE", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
