"""End-to-end runs: data -> graph -> filter -> scores -> top-K -> metrics, with stage timings."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ParameterError
from .filters import KINDS, FilterSpec, predefined_filter
from .graph import DEFAULT_BLOCK_ROWS, STORAGE_MODES, build_graph, default_memory_budget
from .interactions import FORMATS, SplitSpec, load_interactions, read_split, split_holdout
from .metrics import MetricAccumulator
from .recommend import DEFAULT_BATCH_SIZE, format_recommendations, recommend
from .synthetic import planted_clusters

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    data: tuple[str, ...] = ()
    format: str = "adjacency"
    split_dir: str | None = None
    synthetic: str | None = None  # "USERSxITEMS" planted-cluster dataset instead of files
    train_frac: float = 0.7
    test_frac: float = 0.2
    val_frac: float = 0.1
    seed: int = 2024
    alpha: float = 0.7
    s: float = 0.6
    kind: str = "linear"
    tau: float = 0.1
    beta: float = 0.5
    coeffs: tuple[float, ...] = ()
    k: int = 20
    batch_size: int = DEFAULT_BATCH_SIZE
    storage: str = "dense"
    block_rows: int = DEFAULT_BLOCK_ROWS
    spill: str | None = None
    memory_budget_gb: float | None = None
    dtype: str = "float64"
    sparsify_eps: float = 0.0
    rescale: bool = False
    threads: int = 1
    out: str = "out"
    # sweep grid; empty means "just the scalar value above"
    alphas: tuple[float, ...] = ()
    ss: tuple[float, ...] = ()
    betas: tuple[float, ...] = ()
    kinds: tuple[str, ...] = ()
    repetitions: int = 5
    dump: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.format not in FORMATS:
            raise ParameterError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.storage not in STORAGE_MODES:
            raise ParameterError(f"storage must be one of {STORAGE_MODES}, got {self.storage!r}")
        for kind in (self.kind, *self.kinds):
            if kind not in KINDS:
                raise ParameterError(f"unknown filter kind {kind!r}")
        if self.kind == "custom" and not self.coeffs:
            raise ParameterError("kind=custom needs coeffs")
        for a in (self.alpha, *self.alphas):
            if not 0.0 <= a <= 1.0:
                raise ParameterError(f"alpha must lie in [0, 1], got {a}")
        for s in (self.s, *self.ss):
            if not s > 0:
                raise ParameterError(f"s must be positive, got {s}")
        if self.k < 1 or self.batch_size < 1 or self.threads < 1 or self.block_rows < 1:
            raise ParameterError("k, batch_size, threads and block_rows must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ParameterError(f"dtype must be float64 or float32, got {self.dtype!r}")
        self.split_spec()

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_frac, self.test_frac, self.val_frac, self.seed)

    def filter_spec(self, kind=None, beta=None) -> FilterSpec:
        kind = kind or self.kind
        if kind == "custom":
            return FilterSpec(self.coeffs, "custom")
        return predefined_filter(kind, self.tau, self.beta if beta is None else beta)

    def memory_budget(self):
        if self.memory_budget_gb is None:
            return default_memory_budget()
        return int(self.memory_budget_gb * 2**30)


def _convert(value: str, annotation: str):
    value = value.strip()
    if annotation.startswith("tuple"):
        items = [v.strip() for v in value.split(",") if v.strip()]
        inner = annotation[len("tuple[") : annotation.index(",")]
        return tuple(_convert(v, inner) for v in items)
    if annotation.startswith("bool"):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if "None" in annotation and value.lower() in ("", "none"):
        return None
    base = annotation.split("|")[0].strip()
    return {"int": int, "float": float, "str": str}[base](value)


def config_from_mapping(entries: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    """Typed RunConfig from string values; unknown keys are configuration errors."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    updates = {}
    for key, raw in entries.items():
        name = key.strip().replace("-", "_")
        if name not in fields:
            raise ParameterError(f"unknown configuration key {key!r}")
        try:
            updates[name] = _convert(str(raw), str(fields[name].type))
        except (ValueError, KeyError) as exc:
            raise ParameterError(f"bad value for {key!r}: {exc}") from None
    return dataclasses.replace(base or RunConfig(), **updates)


def read_config(path) -> dict[str, str]:
    """Plain-text ``key = value`` lines; ``#`` starts a comment line."""
    entries = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{number}: expected key = value")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def config_checksum(config: RunConfig) -> str:
    text = "\n".join(f"{f.name}={getattr(config, f.name)!r}" for f in dataclasses.fields(config))
    return hashlib.sha256(text.encode()).hexdigest()


def load_dataset(config: RunConfig):
    """Return ``(train, test, val, seconds)``."""
    t0 = perf_counter()
    if config.split_dir:
        train, test, val = read_split(config.split_dir)
    else:
        if config.synthetic:
            try:
                n_users, n_items = (int(v) for v in config.synthetic.lower().split("x"))
            except ValueError:
                raise ParameterError(f"synthetic must look like 2000x3000, got {config.synthetic!r}") from None
            R = planted_clusters(n_users, n_items, seed=config.seed)
        elif config.data:
            R = load_interactions(config.data, config.format)
        else:
            raise ParameterError("no input: give --data, --split-dir or --synthetic")
        train, test, val = split_holdout(R, config.split_spec())
    return train, test, val, perf_counter() - t0


def evaluate_filter(train, heldout, graph, f: FilterSpec, config: RunConfig, timings=None, dump=None):
    """Score every user, rank, and accumulate metrics against ``heldout``.

    ``dump`` (a text file handle) receives the recommendation lines.
    """
    timings = {} if timings is None else timings
    dtype = np.float32 if config.dtype == "float32" else np.float64
    acc = MetricAccumulator(config.k)
    metric_seconds = 0.0
    for users, idx, top in recommend(
        train, graph, f, config.k, config.batch_size, n_threads=config.threads, dtype=dtype, timings=timings
    ):
        t0 = perf_counter()
        acc.add(idx, heldout.csr[users])
        metric_seconds += perf_counter() - t0
        if dump is not None:
            dump.write(format_recommendations(train, users, idx, top))
    t0 = perf_counter()
    report = acc.report()
    timings["metric"] = timings.get("metric", 0.0) + metric_seconds + perf_counter() - t0
    report.stage_timings = {stage: timings.get(stage, 0.0) for stage in ("parse", "graph", "filter", "score", "rank", "metric")}
    return report


def timed_graph(train, config: RunConfig, alpha=None, s=None):
    t0 = perf_counter()
    graph = build_graph(
        train,
        config.alpha if alpha is None else alpha,
        config.s if s is None else s,
        storage=config.storage,
        block_rows=config.block_rows,
        n_threads=config.threads,
        memory_budget=config.memory_budget(),
        spill_path=config.spill,
        sparsify_eps=config.sparsify_eps,
        rescale=config.rescale,
    )
    return graph, perf_counter() - t0


def timed_filter(config: RunConfig, kind=None, beta=None):
    t0 = perf_counter()
    f = config.filter_spec(kind, beta)
    return f, perf_counter() - t0


def run(config: RunConfig, heldout="test", dump=None, data=None):
    """Full pipeline on one configuration. Returns the EvalReport."""
    with threadpool_limits(limits=config.threads):
        train, test, val, parse_s = data or load_dataset(config)
        target = {"test": test, "val": val}[heldout]
        graph, graph_s = timed_graph(train, config)
        f, filter_s = timed_filter(config)
        timings = {"parse": parse_s, "graph": graph_s, "filter": filter_s}
        return evaluate_filter(train, target, graph, f, config, timings, dump)


def sweep(config: RunConfig, data=None):
    """Evaluate the grid on the validation split; re-evaluate the best point on test.

    Grid order is alphas x ss x kinds x betas (betas only vary ideal_approx).
    Ties on validation recall keep the earlier grid point. Returns
    ``(rows, best_row, test_report)``.
    """
    alphas = config.alphas or (config.alpha,)
    ss = config.ss or (config.s,)
    kinds = config.kinds or (config.kind,)
    betas = config.betas or (config.beta,)
    if not (alphas and ss and kinds and betas):
        raise ParameterError("empty sweep grid")
    with threadpool_limits(limits=config.threads):
        train, test, val, parse_s = data or load_dataset(config)
        if val.n_interactions == 0:
            raise ParameterError("validation split is empty; sweep needs val_frac > 0")
        rows = []
        for alpha in alphas:
            for s in ss:
                graph, graph_s = timed_graph(train, config, alpha, s)
                for kind in kinds:
                    for beta in betas if kind == "ideal_approx" else (None,):
                        f, filter_s = timed_filter(config, kind, beta)
                        timings = {"parse": parse_s, "graph": graph_s, "filter": filter_s}
                        report = evaluate_filter(train, val, graph, f, config, timings)
                        rows.append(
                            {"alpha": alpha, "s": s, "kind": kind, "beta": beta, "recall": report.recall, "ndcg": report.ndcg}
                        )
                del graph
        best = max(rows, key=lambda r: r["recall"])  # max keeps the first of equal keys
        winner = dataclasses.replace(
            config, alpha=best["alpha"], s=best["s"], kind=best["kind"], beta=best["beta"] if best["beta"] is not None else config.beta
        )
        test_report = run(winner, "test", data=(train, test, val, parse_s))
    return rows, best, test_report
