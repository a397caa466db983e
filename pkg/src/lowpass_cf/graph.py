"""Item-item similarity graph: asymmetric normalization, Gram product, Hadamard power.

The graph is held as one row-major float64 array. ``storage="blocked"`` builds
and multiplies it ``block_rows`` rows at a time and can back it with a memory-mapped
cache file, so resident memory stays near one block when the full matrix does
not fit.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import CapacityError, ChecksumError, DataError, DomainError, ParameterError, ShapeError
from .interactions import InteractionMatrix

STORAGE_MODES = ("dense", "blocked")
DEFAULT_BLOCK_ROWS = 2048

MAGIC = b"LPCFGRPH"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIIQQdd32s")


@dataclass(frozen=True)
class NormalizedRatings:
    values: sp.csr_matrix
    alpha: float


@dataclass(frozen=True)
class SimilarityGraph:
    values: np.ndarray
    alpha: float
    s: float
    storage: str = "dense"
    block_rows: int = DEFAULT_BLOCK_ROWS

    @property
    def n_items(self) -> int:
        return self.values.shape[0]

    def blocks(self):
        """Yield ``(start, stop)`` row ranges."""
        n = self.n_items
        step = n if self.storage == "dense" else max(1, self.block_rows)
        for start in range(0, n, step):
            yield start, min(start + step, n)

    def multiply_sparse(self, rows: sp.csr_matrix, out=None, n_threads=1):
        """``rows @ P`` for a sparse left operand, accumulated per output row."""
        if rows.shape[1] != self.n_items:
            raise ShapeError(f"signal width {rows.shape[1]} != graph size {self.n_items}")
        dtype = self.values.dtype
        if out is None:
            out = np.zeros((rows.shape[0], self.n_items), dtype=dtype)
        rows = rows.tocsr()
        if not rows.has_sorted_indices:
            rows = rows.sorted_indices()
        _kernels.csr_dense_matmul(
            rows.indptr.astype(np.int64),
            rows.indices.astype(np.int64),
            rows.data.astype(dtype, copy=False),
            self.values,
            out,
            n_threads,
        )
        return out

    def multiply_dense(self, t: np.ndarray) -> np.ndarray:
        """``t @ P``; blocked storage reduces over row blocks in a fixed order."""
        if t.shape[1] != self.n_items:
            raise ShapeError(f"signal width {t.shape[1]} != graph size {self.n_items}")
        if self.storage == "dense":
            return t @ self.values
        out = np.zeros((t.shape[0], self.n_items), dtype=np.result_type(t, self.values))
        for start, stop in self.blocks():
            out += t[:, start:stop] @ self.values[start:stop]
        return out

    def astype(self, dtype):
        if self.values.dtype == dtype:
            return self
        return SimilarityGraph(self.values.astype(dtype), self.alpha, self.s, self.storage, self.block_rows)


def degree_vectors(R: InteractionMatrix):
    """Per-user and per-item interaction counts."""
    csr = R.csr
    d_users = np.diff(csr.indptr).astype(np.int64)
    d_items = np.bincount(csr.indices, minlength=R.n_items).astype(np.int64)
    return d_users, d_items


def _safe_power(d, exponent):
    # zero degree scales by 0 (pseudo-inverse convention), never NaN/inf
    out = np.zeros(d.shape, dtype=np.float64)
    nz = d > 0
    out[nz] = np.power(d[nz].astype(np.float64), exponent)
    return out


def normalize_asymmetric(R: InteractionMatrix, alpha: float) -> NormalizedRatings:
    """Scale entry (u, i) by d_U[u]^-alpha * d_I[i]^(alpha-1)."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    d_users, d_items = degree_vectors(R)
    user_scale = _safe_power(d_users, -alpha)
    item_scale = _safe_power(d_items, alpha - 1.0)
    csr = R.csr
    rows = np.repeat(np.arange(R.n_users), np.diff(csr.indptr))
    data = csr.data * user_scale[rows] * item_scale[csr.indices]
    values = sp.csr_matrix((data, csr.indices.copy(), csr.indptr.copy()), shape=csr.shape)
    values.has_sorted_indices = True
    return NormalizedRatings(values, float(alpha))


def default_memory_budget() -> int | None:
    """Bytes: 80% of physical memory, or None when unknown."""
    try:
        return int(0.8 * os.sysconf("SC_PHYS_PAGES") * os.sysconf("SC_PAGE_SIZE"))
    except (ValueError, OSError, AttributeError):
        return None


def _check_capacity(n_items, storage, block_rows, spill_path, memory_budget):
    if memory_budget is None:
        return
    if storage == "blocked" and spill_path is not None:
        need = 8 * n_items * min(block_rows, n_items) * 2
    else:
        need = 8 * n_items * n_items
    if need > memory_budget:
        raise CapacityError(
            f"similarity graph needs ~{need / 2**30:.1f} GiB resident, budget is "
            f"{memory_budget / 2**30:.1f} GiB; use storage='blocked' with a spill file "
            f"(CLI: --storage blocked --spill PATH) or raise the budget"
        )


def _gram_operands(Rt: sp.csr_matrix):
    csc = Rt.tocsc()
    csc.sort_indices()
    csr = Rt.tocsr()
    csr.sort_indices()
    return (
        csc.indptr.astype(np.int64),
        csc.indices.astype(np.int64),
        csc.data.astype(np.float64),
        csr.indptr.astype(np.int64),
        csr.indices.astype(np.int64),
        csr.data.astype(np.float64),
    )


def _allocate(n_items, spill_path, header_fields):
    if spill_path is None:
        return np.zeros((n_items, n_items), dtype=np.float64)
    path = Path(spill_path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*header_fields, b"\0" * 32))
        fh.truncate(_HEADER.size + 8 * n_items * n_items)
    return np.memmap(path, dtype="<f8", mode="r+", offset=_HEADER.size, shape=(n_items, n_items))


def _fill(out, Rt, storage, block_rows, n_threads, s=None):
    n = Rt.shape[1]
    ops = _gram_operands(Rt)
    step = n if storage == "dense" else max(1, block_rows)
    for start in range(0, n, step):
        stop = min(start + step, n)
        block = np.zeros((stop - start, n), dtype=np.float64)
        _kernels.gram_rows(*ops, start, stop, block, n_threads)
        if s is not None:
            _power_block(block, s, n_threads)
        out[start:stop] = block


def item_similarity(
    Rt: NormalizedRatings,
    storage: str = "dense",
    block_rows: int = DEFAULT_BLOCK_ROWS,
    n_threads: int = 1,
    memory_budget: int | None = None,
) -> np.ndarray:
    """Dense ``Rt.T @ Rt``; every output row is accumulated over users in ascending order."""
    if storage not in STORAGE_MODES:
        raise ParameterError(f"storage must be one of {STORAGE_MODES}, got {storage!r}")
    values = Rt.values if isinstance(Rt, NormalizedRatings) else sp.csr_matrix(Rt)
    n = values.shape[1]
    _check_capacity(n, storage, block_rows, None, memory_budget)
    out = np.zeros((n, n), dtype=np.float64)
    _fill(out, values, storage, block_rows, n_threads)
    return out


def _power_block(block, s, n_threads):
    bad = _kernels.hadamard_power_inplace(block, float(s), n_threads)
    if bad:
        raise DomainError(f"{bad} negative or NaN similarity entries; upstream data is corrupt")


def hadamard_power(P: np.ndarray, s: float, alpha: float = float("nan"), inplace=False, n_threads=1):
    """Entrywise ``P ** s`` (with ``0 ** s = 0``) wrapped as a :class:`SimilarityGraph`."""
    if not s > 0:
        raise ParameterError(f"Hadamard exponent must be positive, got {s}")
    values = P if inplace else np.array(P, dtype=np.float64, order="C")
    _power_block(values, s, n_threads)
    return SimilarityGraph(values, alpha, float(s))


def spectral_radius(values, iterations=100, tol=1e-10, seed=0) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of a symmetric matrix."""
    rng = np.random.default_rng(seed)
    x = rng.random(values.shape[0]) + 0.5
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        y = values @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        x = y / norm
        if abs(norm - est) <= tol * norm:
            return float(norm)
        est = norm
    return float(est)


def build_graph(
    train: InteractionMatrix,
    alpha: float,
    s: float,
    storage: str = "dense",
    block_rows: int = DEFAULT_BLOCK_ROWS,
    n_threads: int = 1,
    memory_budget: int | None = None,
    spill_path=None,
    sparsify_eps: float = 0.0,
    rescale: bool = False,
) -> SimilarityGraph:
    """Normalize, take the Gram product and apply the Hadamard power, one row block at a time.

    ``sparsify_eps`` zeroes entries below it; ``rescale`` divides by a
    power-iteration estimate of the spectral radius. Both default off.
    """
    if storage not in STORAGE_MODES:
        raise ParameterError(f"storage must be one of {STORAGE_MODES}, got {storage!r}")
    if not s > 0:
        raise ParameterError(f"Hadamard exponent must be positive, got {s}")
    if spill_path is not None and storage != "blocked":
        raise ParameterError("a spill file requires storage='blocked'")
    Rt = normalize_asymmetric(train, alpha)
    n = train.n_items
    _check_capacity(n, storage, block_rows, spill_path, memory_budget)
    header = (MAGIC, CACHE_VERSION, STORAGE_MODES.index(storage), n, block_rows, float(alpha), float(s))
    values = _allocate(n, spill_path, header)
    _fill(values, Rt.values, storage, block_rows, n_threads, s=s)
    graph = SimilarityGraph(values, float(alpha), float(s), storage, block_rows)
    if sparsify_eps > 0:
        for start, stop in graph.blocks():
            block = values[start:stop]
            block[block < sparsify_eps] = 0.0
    if rescale:
        rho = spectral_radius(values)
        if rho > 0:
            for start, stop in graph.blocks():
                values[start:stop] /= rho
    if spill_path is not None:
        values.flush()
        _write_checksum(spill_path, graph)
    return graph


def _digest(graph: SimilarityGraph) -> bytes:
    h = hashlib.sha256()
    step = max(1, min(graph.block_rows, graph.n_items))
    for start in range(0, graph.n_items, step):
        h.update(np.ascontiguousarray(graph.values[start : start + step], dtype="<f8").tobytes())
    return h.digest()


def _write_checksum(path, graph):
    with open(path, "r+b") as fh:
        fh.seek(_HEADER.size - 32)
        fh.write(_digest(graph))


def save_graph(path, graph: SimilarityGraph):
    """Write the binary cache: fixed header then row-major little-endian float64 rows."""
    header = _HEADER.pack(
        MAGIC,
        CACHE_VERSION,
        STORAGE_MODES.index(graph.storage),
        graph.n_items,
        graph.block_rows,
        graph.alpha,
        graph.s,
        _digest(graph),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for start, stop in graph.blocks():
            fh.write(np.ascontiguousarray(graph.values[start:stop], dtype="<f8").tobytes())


def load_graph(path, mmap: bool = False) -> SimilarityGraph:
    """Read a cache file, validating magic, version, size and checksum."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated graph cache header")
    magic, version, storage, n, block_rows, alpha, s, digest = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: not a graph cache file")
    if version != CACHE_VERSION:
        raise DataError(f"{path}: unsupported graph cache version {version}")
    if storage >= len(STORAGE_MODES):
        raise DataError(f"{path}: unknown storage mode {storage}")
    if path.stat().st_size != _HEADER.size + 8 * n * n:
        raise DataError(f"{path}: size does not match {n} items")
    if mmap:
        values = np.memmap(path, dtype="<f8", mode="r", offset=_HEADER.size, shape=(n, n))
    else:
        values = np.fromfile(path, dtype="<f8", offset=_HEADER.size).reshape(n, n)
    graph = SimilarityGraph(values, alpha, s, STORAGE_MODES[storage], int(block_rows))
    if _digest(graph) != digest:
        raise ChecksumError(f"{path}: checksum mismatch")
    return graph
