"""Filtered scores s_u = r_u sum_k a_k P^k and masked top-K ranking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DomainError, ParameterError, ShapeError
from .filters import FilterSpec
from .graph import SimilarityGraph
from .interactions import InteractionMatrix

DEFAULT_BATCH_SIZE = 1024


@dataclass(frozen=True)
class RankedList:
    user_index: int
    items: tuple[int, ...]


def filter_matrix(G: SimilarityGraph, f: FilterSpec) -> np.ndarray:
    """Materialized sum_k a_k P^k. Quadratic memory per power; small catalogs only."""
    P = np.asarray(G.values, dtype=np.float64)
    out = np.zeros_like(P)
    power = np.eye(P.shape[0])
    for a in f.effective_coeffs:
        power = power @ P
        out += a * power
    return out


def _add_sparse(T, rows, scale):
    if scale == 0.0:
        return
    coo = rows.tocoo()
    T[coo.row, coo.col] += scale * coo.data


def score_users(
    train: InteractionMatrix,
    G: SimilarityGraph,
    f: FilterSpec,
    users=None,
    n_threads: int = 1,
    dtype=np.float64,
    F: np.ndarray | None = None,
) -> np.ndarray:
    """Scores for a batch of users (rows of the returned array).

    Horner's rule on row vectors: t = a_K r; t = t P + a_k r for k = K-1..1;
    s = t P. The first product has a sparse left operand. Powers of P are
    never formed unless a precomputed ``F`` is passed.
    """
    if G.n_items != train.n_items:
        raise ShapeError(f"graph has {G.n_items} items, training matrix has {train.n_items}")
    users = np.arange(train.n_users) if users is None else np.asarray(users, dtype=np.int64)
    R = train.csr[users].astype(dtype)
    if F is not None:
        return np.asarray(R @ F, dtype=dtype)

    G = G.astype(dtype)
    coeffs = f.effective_coeffs
    T = G.multiply_sparse(coeffs[-1] * R, n_threads=n_threads)
    for a in reversed(coeffs[:-1]):
        _add_sparse(T, R, a)
        T = G.multiply_dense(T)
    return T


def top_k_batch(scores: np.ndarray, seen: sp.csr_matrix, k: int, n_threads: int = 1) -> np.ndarray:
    """Row-wise top-``k`` item indices excluding ``seen``; short rows padded with -1."""
    if k < 1:
        raise ParameterError(f"K must be >= 1, got {k}")
    scores = np.ascontiguousarray(scores)
    if scores.dtype not in (np.float32, np.float64):
        scores = scores.astype(np.float64)
    if seen.shape != scores.shape:
        raise ShapeError(f"seen mask {seen.shape} does not match scores {scores.shape}")
    if not np.isfinite(scores).all():
        raise DomainError("scores contain NaN or infinite values")
    seen = seen.tocsr()
    if not seen.has_sorted_indices:
        seen = seen.sorted_indices()
    k_eff = min(k, scores.shape[1]) or 1
    out = np.full((scores.shape[0], k_eff), -1, dtype=np.int64)
    work = np.empty((scores.shape[0], k_eff), dtype=scores.dtype)
    _kernels.topk_masked(
        scores, seen.indptr.astype(np.int64), seen.indices.astype(np.int64), out, work, n_threads
    )
    return out


def top_k(scores, seen, k: int, user_index: int = -1) -> RankedList:
    """Highest-``k`` unseen items, descending score, ties by ascending item index."""
    scores = np.asarray(scores, dtype=np.float64).reshape(1, -1)
    cols = np.array(sorted(set(int(i) for i in seen)), dtype=np.int64)
    mask = sp.csr_matrix((np.ones(cols.size), cols, [0, cols.size]), shape=scores.shape)
    row = top_k_batch(scores, mask, k)[0]
    return RankedList(user_index, tuple(int(i) for i in row if i >= 0))


def recommend(
    train: InteractionMatrix,
    G: SimilarityGraph,
    f: FilterSpec,
    k: int = 20,
    batch_size: int = DEFAULT_BATCH_SIZE,
    users=None,
    n_threads: int = 1,
    dtype=np.float64,
    timings: dict | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield ``(users, top-k indices, top-k scores)`` per batch, in user order.

    When ``timings`` is given, seconds spent scoring and ranking accumulate
    under its "score" and "rank" keys.
    """
    from time import perf_counter

    if batch_size < 1:
        raise ParameterError(f"batch size must be >= 1, got {batch_size}")
    users = np.arange(train.n_users) if users is None else np.asarray(users, dtype=np.int64)
    for start in range(0, users.size, batch_size):
        batch = users[start : start + batch_size]
        t0 = perf_counter()
        scores = score_users(train, G, f, batch, n_threads=n_threads, dtype=dtype)
        t1 = perf_counter()
        idx = top_k_batch(scores, train.csr[batch], k, n_threads)
        top = np.take_along_axis(scores, np.maximum(idx, 0), axis=1)
        top[idx < 0] = np.nan
        t2 = perf_counter()
        if timings is not None:
            timings["score"] = timings.get("score", 0.0) + (t1 - t0)
            timings["rank"] = timings.get("rank", 0.0) + (t2 - t1)
        yield batch, idx, top


def format_recommendations(train: InteractionMatrix, users, idx, top) -> str:
    """``user<TAB>item:score,...`` lines in rank order."""
    lines = []
    for u, row, vals in zip(users, idx, top):
        pairs = ",".join(f"{train.item_ids[i]}:{v:.10g}" for i, v in zip(row, vals) if i >= 0)
        lines.append(f"{train.user_ids[u]}\t{pairs}\n")
    return "".join(lines)
