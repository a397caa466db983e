"""Implicit-feedback interaction matrices: parsing, statistics and holdout splits."""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDatasetError, FormatError, ParameterError, ParseError

FORMATS = ("adjacency", "triplet")
PRNG_NAME = "numpy.random.Generator(PCG64)"
SCHEMA_VERSION = 1


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Binary user x item matrix with external-id maps.

    ``csr`` holds float64 ones with sorted, unique column indices per row.
    ``user_ids[u]`` / ``item_ids[i]`` are the external ids of index ``u`` / ``i``.
    """

    csr: sp.csr_matrix
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    _user_index: dict = field(default=None, repr=False, compare=False)

    @property
    def n_users(self) -> int:
        return self.csr.shape[0]

    @property
    def n_items(self) -> int:
        return self.csr.shape[1]

    @property
    def n_interactions(self) -> int:
        return self.csr.nnz

    def row(self, user: int) -> np.ndarray:
        """Item indices of ``user``, ascending."""
        return self.csr.indices[self.csr.indptr[user] : self.csr.indptr[user + 1]]

    def user_index(self, ext_id: str) -> int:
        if self._user_index is None:
            object.__setattr__(self, "_user_index", {u: k for k, u in enumerate(self.user_ids)})
        return self._user_index[ext_id]

    def pairs(self) -> set[tuple[str, str]]:
        coo = self.csr.tocoo()
        return {(self.user_ids[u], self.item_ids[i]) for u, i in zip(coo.row, coo.col)}

    def __eq__(self, other):
        if not isinstance(other, InteractionMatrix):
            return NotImplemented
        a, b = self.csr, other.csr
        return (
            self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
        )

    __hash__ = None


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_interactions: int
    density: float


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    test_frac: float = 0.2
    val_frac: float = 0.1
    seed: int = 2024

    def __post_init__(self):
        fracs = (self.train_frac, self.test_frac, self.val_frac)
        if any(not math.isfinite(f) or f < 0 for f in fracs):
            raise ParameterError(f"split fractions must be nonnegative, got {fracs}")
        if abs(math.fsum(fracs) - 1.0) > 1e-12:
            raise ParameterError(f"split fractions must sum to 1, got {fracs} (sum {math.fsum(fracs)})")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")


def from_pairs(users, items, user_ids, item_ids) -> InteractionMatrix:
    """Build a matrix from index arrays; duplicates collapse to one entry."""
    n_users, n_items = len(user_ids), len(item_ids)
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if users.size:
        key = np.unique(users * n_items + items)
        users, items = np.divmod(key, n_items)
    counts = np.bincount(users, minlength=n_users)
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    data = np.ones(users.size, dtype=np.float64)
    csr = sp.csr_matrix((data, items, indptr), shape=(n_users, n_items))
    csr.has_sorted_indices = True
    return InteractionMatrix(csr, tuple(user_ids), tuple(item_ids))


def _lines(source):
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    for number, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(f"not valid UTF-8 ({exc.reason})", number) from None
        yield number, raw.rstrip("\r\n")


def parse_interactions(
    source: BinaryIO | bytes | Iterable[bytes],
    format: str = "adjacency",
    user_ids: Iterable[str] | None = None,
    item_ids: Iterable[str] | None = None,
) -> InteractionMatrix:
    """Parse a byte stream in ``adjacency`` or ``triplet`` format.

    Indices are assigned in order of first appearance. Passing ``user_ids`` /
    ``item_ids`` pre-seeds that assignment, which is how split files share one
    index space.
    """
    if format not in FORMATS:
        raise FormatError(f"unknown interaction format {format!r}; expected one of {FORMATS}")
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    for ext in user_ids or ():
        users.setdefault(str(ext), len(users))
    for ext in item_ids or ():
        items.setdefault(str(ext), len(items))
    rows: list[int] = []
    cols: list[int] = []

    if format == "adjacency":
        for number, line in _lines(source):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            tokens = text.split()
            try:
                ids = [str(int(t)) for t in tokens]
            except ValueError:
                raise ParseError(f"non-integer token in adjacency line {text[:60]!r}", number) from None
            u = users.setdefault(ids[0], len(users))
            for ext in ids[1:]:
                rows.append(u)
                cols.append(items.setdefault(ext, len(items)))
    else:
        for number, line in _lines(source):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 2 or not fields[0].strip() or not fields[1].strip():
                raise ParseError(f"expected user<TAB>item, got {line[:60]!r}", number)
            u = users.setdefault(fields[0].strip(), len(users))
            rows.append(u)
            cols.append(items.setdefault(fields[1].strip(), len(items)))

    return from_pairs(rows, cols, list(users), list(items))


def load_interactions(paths, format="adjacency", user_ids=None, item_ids=None) -> InteractionMatrix:
    """Parse one file or the concatenation of several (e.g. LightGCN's train.txt + test.txt)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]

    def chained():
        for path in paths:
            with open(path, "rb") as fh:
                yield from fh

    return parse_interactions(chained(), format, user_ids, item_ids)


def serialize_interactions(R: InteractionMatrix, format: str = "triplet") -> bytes:
    """Inverse of :func:`parse_interactions` (given the same id maps).

    Adjacency output keeps users without interactions as bare ``user`` lines.
    """
    if format not in FORMATS:
        raise FormatError(f"unknown interaction format {format!r}; expected one of {FORMATS}")
    out = []
    for u, ext in enumerate(R.user_ids):
        row = R.row(u)
        if format == "adjacency":
            out.append(" ".join([ext, *(R.item_ids[i] for i in row)]) + "\n")
        else:
            out.extend(f"{ext}\t{R.item_ids[i]}\n" for i in row)
    return "".join(out).encode("utf-8")


def dataset_stats(R: InteractionMatrix) -> DatasetStats:
    if R.n_interactions == 0 or R.n_users == 0 or R.n_items == 0:
        raise EmptyDatasetError("dataset has no interactions")
    return DatasetStats(
        n_users=R.n_users,
        n_items=R.n_items,
        n_interactions=R.n_interactions,
        density=R.n_interactions / (R.n_users * R.n_items),
    )


def _floor_count(frac, n):
    # the 1e-9 guard keeps e.g. 0.29*100 from flooring to 28
    return np.floor(frac * n + 1e-9).astype(np.int64)


def split_holdout(R: InteractionMatrix, spec: SplitSpec):
    """Per-user seeded shuffle, then floor(test_frac*n) to test, floor(val_frac*n) to val, rest to train.

    A single PCG64 stream draws one key per stored entry in row-major order, so
    the result depends only on (R, seed).
    """
    csr = R.csr
    n = np.diff(csr.indptr)
    rows = np.repeat(np.arange(R.n_users, dtype=np.int64), n)
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    keys = rng.random(csr.nnz)
    order = np.lexsort((keys, rows))
    rank = np.empty(csr.nnz, dtype=np.int64)
    rank[order] = np.arange(csr.nnz) - np.repeat(csr.indptr[:-1], n)

    n_test = _floor_count(spec.test_frac, n)[rows]
    n_val = _floor_count(spec.val_frac, n)[rows]
    in_test = rank < n_test
    in_val = ~in_test & (rank < n_test + n_val)
    in_train = ~(in_test | in_val)
    cols = csr.indices.astype(np.int64)
    return tuple(
        from_pairs(rows[mask], cols[mask], R.user_ids, R.item_ids) for mask in (in_train, in_test, in_val)
    )


def checksum(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_id_list(path, ids):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("org_id remap_id\n")
        fh.writelines(f"{ext} {k}\n" for k, ext in enumerate(ids))


def read_id_list(path) -> list[str]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            fields = line.split()
            if number == 1 and fields == ["org_id", "remap_id"]:
                continue
            if len(fields) != 2 or not fields[1].isdigit() or int(fields[1]) != len(ids):
                raise ParseError(f"bad id-list row {line.strip()!r} in {path}", number)
            ids.append(fields[0])
    return ids


def write_manifest(path, entries: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{key} = {value}\n" for key, value in entries.items())


def read_manifest(path) -> dict[str, str]:
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected key = value, got {line!r}", number)
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def write_split(directory, R, spec: SplitSpec, input_checksum: str) -> dict[str, Path]:
    """Split ``R`` and write train/test/val triplet files, id lists and a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parts = dict(zip(("train", "test", "val"), split_holdout(R, spec)))
    paths = {}
    for name, part in parts.items():
        paths[name] = directory / f"{name}.tsv"
        paths[name].write_bytes(serialize_interactions(part, "triplet"))
    write_id_list(directory / "user_list.txt", R.user_ids)
    write_id_list(directory / "item_list.txt", R.item_ids)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": spec.seed,
        "train_frac": repr(spec.train_frac),
        "test_frac": repr(spec.test_frac),
        "val_frac": repr(spec.val_frac),
        "prng": PRNG_NAME,
        "input_checksum": input_checksum,
        "n_users": R.n_users,
        "n_items": R.n_items,
        **{f"n_{name}": part.n_interactions for name, part in parts.items()},
        **{f"{name}_checksum": checksum(paths[name].read_bytes()) for name in parts},
    }
    paths["manifest"] = directory / "manifest.txt"
    write_manifest(paths["manifest"], manifest)
    return paths


def read_split(directory):
    """Load (train, test, val) written by :func:`write_split` in their shared index space."""
    directory = Path(directory)
    users = read_id_list(directory / "user_list.txt")
    items = read_id_list(directory / "item_list.txt")
    parts = []
    for name in ("train", "test", "val"):
        part = load_interactions(directory / f"{name}.tsv", "triplet", users, items)
        if part.n_users != len(users) or part.n_items != len(items):
            raise ParseError(f"{name}.tsv references ids missing from the id lists")
        parts.append(part)
    return tuple(parts)
