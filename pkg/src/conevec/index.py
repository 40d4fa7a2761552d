"""Sum aggregation, cosine similarity, and an exact flat vector index.

The index stores L2-normalized vectors in one contiguous matrix; queries
score every stored row by inner product, which equals cosine similarity,
and return the exact top K with ties broken by ascending id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from conevec.errors import (
    CorruptFile,
    DimMismatch,
    DuplicateId,
    EmptyColumn,
    EmptyIndex,
    ZeroVector,
)

MAGIC = b"CONEVEC1"
_HEADER = struct.Struct("<8sII")
_IDLEN = struct.Struct("<I")


@dataclass(frozen=True)
class RankedResult:
    """Top-K answer for one query: (item id, cosine score), best first."""

    query_id: str
    items: tuple[tuple[str, float], ...]

    def ids(self) -> tuple[str, ...]:
        return tuple(item_id for item_id, _ in self.items)


@dataclass(frozen=True)
class AggregateEmbedding:
    vector: np.ndarray
    kind: str
    source_id: str
    cell_count: int

    def __post_init__(self) -> None:
        if self.kind not in ("column", "tuple"):
            raise ValueError(f"kind must be 'column' or 'tuple', got {self.kind!r}")
        if self.cell_count < 1:
            raise EmptyColumn("aggregate requires at least one cell")


def _aggregate(cells: Sequence[np.ndarray], kind: str, source_id: str) -> AggregateEmbedding:
    if not len(cells):
        raise EmptyColumn(f"cannot aggregate an empty {kind}")
    dim = len(cells[0])
    total = np.zeros(dim)
    for i, v in enumerate(cells):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (dim,):
            raise DimMismatch(f"cell {i} has shape {v.shape}, expected ({dim},)")
        total += v
    return AggregateEmbedding(total, kind, source_id, len(cells))


def column_embedding(cells: Sequence[np.ndarray], source_id: str = "") -> AggregateEmbedding:
    """Elementwise sum of a column's composite vectors."""
    return _aggregate(cells, "column", source_id)


def tuple_embedding(cells: Sequence[np.ndarray], source_id: str = "") -> AggregateEmbedding:
    """Elementwise sum of a row's composite vectors."""
    return _aggregate(cells, "tuple", source_id)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimMismatch(f"shapes differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    return float(u @ v / (nu * nv))


class FlatIndex:
    """Exact inner-product search over unit-norm vectors."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self._rows: list[np.ndarray] = []
        self._ids: list[str] = []
        self._known: set[str] = set()

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._ids)

    def matrix(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.dim))
        return np.stack(self._rows)

    def add(self, item_id: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimMismatch(f"vector shape {vector.shape}, index dim {self.dim}")
        if item_id in self._known:
            raise DuplicateId(f"id {item_id!r} already indexed")
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            raise ZeroVector(f"cannot index zero vector {item_id!r}")
        self._rows.append(vector / norm)
        self._ids.append(item_id)
        self._known.add(item_id)

    def query(self, vector: np.ndarray, k: int, query_id: str = "") -> RankedResult:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not self._rows:
            raise EmptyIndex("query against an empty index")
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimMismatch(f"query shape {vector.shape}, index dim {self.dim}")
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            raise ZeroVector("cannot query with a zero vector")
        scores = self.matrix() @ (vector / norm)
        # Sort by descending score, then ascending id for deterministic ties.
        order = np.lexsort((np.array(self._ids), -scores))[:k]
        items = tuple((self._ids[i], float(scores[i])) for i in order)
        return RankedResult(query_id, items)

    def save(self, path: str | Path) -> None:
        parts = [_HEADER.pack(MAGIC, self.dim, len(self._ids))]
        parts.append(self.matrix().astype("<f4").tobytes())
        for item_id in self._ids:
            raw = item_id.encode("utf-8")
            parts.append(_IDLEN.pack(len(raw)) + raw)
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: str | Path) -> "FlatIndex":
        blob = Path(path).read_bytes()
        if len(blob) < _HEADER.size:
            raise CorruptFile(f"{path}: truncated header")
        magic, dim, count = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise CorruptFile(f"{path}: bad magic {magic!r}")
        offset = _HEADER.size
        vec_bytes = dim * count * 4
        if len(blob) < offset + vec_bytes:
            raise CorruptFile(f"{path}: vector payload truncated")
        rows = (
            np.frombuffer(blob, dtype="<f4", count=dim * count, offset=offset)
            .astype(np.float64)
            .reshape(count, dim)
        )
        offset += vec_bytes
        index = cls(dim)
        for i in range(count):
            if len(blob) < offset + _IDLEN.size:
                raise CorruptFile(f"{path}: id table truncated at entry {i}")
            (id_len,) = _IDLEN.unpack_from(blob, offset)
            offset += _IDLEN.size
            if len(blob) < offset + id_len:
                raise CorruptFile(f"{path}: id {i} truncated")
            item_id = blob[offset:offset + id_len].decode("utf-8")
            offset += id_len
            if item_id in index._known:
                raise CorruptFile(f"{path}: duplicate id {item_id!r}")
            index._rows.append(rows[i].copy())
            index._ids.append(item_id)
            index._known.add(item_id)
        if offset != len(blob):
            raise CorruptFile(f"{path}: {len(blob) - offset} trailing bytes")
        return index


def index_add(index: FlatIndex, item_id: str, vector: np.ndarray) -> None:
    index.add(item_id, vector)


def query(index: FlatIndex, vector: np.ndarray, k: int, query_id: str = "") -> RankedResult:
    return index.query(vector, k, query_id)


def build_index(items: Iterable[tuple[str, np.ndarray]], dim: int) -> FlatIndex:
    index = FlatIndex(dim)
    for item_id, vector in items:
        index.add(item_id, vector)
    return index
