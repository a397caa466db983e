"""Recall@K and NDCG@K with binary relevance, macro-averaged over users.

Conventions (LightGCN lineage): recall divides by |relevant|; IDCG is truncated
at min(K, |relevant|); users with no held-out items are skipped.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyEvaluationError, ParameterError
from .interactions import InteractionMatrix
from .recommend import RankedList

SCHEMA_VERSION = 1
CONVENTIONS = (
    "recall = hits@K / |relevant|; ndcg = DCG@K / IDCG@min(K,|relevant|), gain 1/log2(rank+1); "
    "macro average over users with non-empty held-out sets"
)
STAGES = ("parse", "graph", "filter", "score", "rank", "metric")


@dataclass
class EvalReport:
    k: int
    recall: float
    ndcg: float
    n_evaluated_users: int
    stage_timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {"schema_version": SCHEMA_VERSION, "conventions": CONVENTIONS, **asdict(self)}

    def to_json(self, timings=True) -> str:
        d = self.to_dict()
        if not timings:
            d.pop("stage_timings")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        rows = [
            (f"Recall@{self.k}", f"{self.recall:.6f}"),
            (f"NDCG@{self.k}", f"{self.ndcg:.6f}"),
            ("users evaluated", str(self.n_evaluated_users)),
        ]
        rows += [(f"time {stage} (s)", f"{sec:.4f}") for stage, sec in self.stage_timings.items()]
        width = max(len(name) for name, _ in rows)
        lines = [f"# {CONVENTIONS}"] + [f"{name:<{width}}  {value:>12}" for name, value in rows]
        return "\n".join(lines) + "\n"


def _check(relevant, k):
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not relevant:
        raise EmptyEvaluationError("relevant set is empty; exclude this user upstream")


def _items(ranked):
    return ranked.items if isinstance(ranked, RankedList) else ranked


def recall_at_k(ranked, relevant, k: int) -> float:
    relevant = set(relevant)
    _check(relevant, k)
    hits = sum(1 for i in list(_items(ranked))[:k] if i in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant, k: int) -> float:
    relevant = set(relevant)
    _check(relevant, k)
    dcg = math.fsum(1.0 / math.log2(p + 2) for p, i in enumerate(list(_items(ranked))[:k]) if i in relevant)
    idcg = math.fsum(1.0 / math.log2(p + 2) for p in range(min(k, len(relevant))))
    return dcg / idcg


def _discounts(k):
    # math.log2 rather than np.log2 so both code paths share one rounding
    return np.array([1.0 / math.log2(p + 2) for p in range(k)], dtype=np.float64)


def per_user_metrics(topk: np.ndarray, heldout_rows, k: int):
    """Vectorized recall/NDCG for rows of ``topk`` (-1 padded) against CSR ``heldout_rows``.

    Returns (recall, ndcg, mask of evaluable rows).
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    topk = np.asarray(topk, dtype=np.int64)[:, :k]
    heldout_rows = heldout_rows.tocsr()
    n_rel = np.diff(heldout_rows.indptr)
    ok = n_rel > 0
    width = heldout_rows.shape[1] + 1
    rows = np.arange(topk.shape[0], dtype=np.int64)
    held_keys = np.repeat(rows, n_rel) * width + heldout_rows.indices
    hit = (topk >= 0) & np.isin(rows[:, None] * width + topk, held_keys)
    disc = _discounts(topk.shape[1]) if topk.shape[1] else np.zeros(0)
    # fsum keeps each row bit-identical to the scalar ndcg_at_k
    ideal_disc = _discounts(k).tolist()
    ideal = np.array([math.fsum(ideal_disc[:m]) for m in range(k + 1)])
    recall = np.where(ok, hit.sum(axis=1) / np.maximum(n_rel, 1), 0.0)
    dcg = np.zeros(topk.shape[0])
    for r in np.flatnonzero(hit.any(axis=1)):
        dcg[r] = math.fsum(disc[hit[r]].tolist())
    ndcg = np.where(ok, dcg / np.where(ok, ideal[np.minimum(n_rel, k)], 1.0), 0.0)
    return recall, ndcg, ok


class MetricAccumulator:
    """Collects per-user values; sums with math.fsum so batching order cannot change the mean."""

    def __init__(self, k):
        self.k = k
        self.recalls = []
        self.ndcgs = []

    def add(self, topk, heldout_rows):
        recall, ndcg, ok = per_user_metrics(topk, heldout_rows, self.k)
        self.recalls.extend(recall[ok].tolist())
        self.ndcgs.extend(ndcg[ok].tolist())

    def report(self, stage_timings=None) -> EvalReport:
        n = len(self.recalls)
        if n == 0:
            raise EmptyEvaluationError("no user has held-out interactions")
        return EvalReport(
            k=self.k,
            recall=math.fsum(self.recalls) / n,
            ndcg=math.fsum(self.ndcgs) / n,
            n_evaluated_users=n,
            stage_timings=dict(stage_timings or {}),
        )


def evaluate(ranked_lists, heldout: InteractionMatrix, k: int = 20) -> EvalReport:
    """Macro-averaged report over users whose held-out set is non-empty.

    ``ranked_lists`` is an iterable of :class:`RankedList`.
    """
    acc = MetricAccumulator(k)
    for ranked in ranked_lists:
        rel = heldout.row(ranked.user_index)
        if rel.size == 0:
            continue
        acc.recalls.append(recall_at_k(ranked, rel.tolist(), k))
        acc.ndcgs.append(ndcg_at_k(ranked, rel.tolist(), k))
    return acc.report()
