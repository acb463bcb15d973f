"""Binary hash codes, Hamming ranking and mAP@k.

Codes are int8 arrays of +-1.  Ranking sorts by ``(hamming distance, id)``,
so ties resolve to the smaller item id.  Relevance between a query and an
item means they share at least one label; ``AP@k`` divides by the number of
relevant items found in the top ``k`` (zero found gives AP 0).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, DimensionError
from .tensor import as_tensor


def binarize(u) -> np.ndarray:
    """+1 where ``u > 0``, otherwise -1 (zero maps to -1)."""
    u = as_tensor(u, "continuous code")
    return np.where(u > 0, 1, -1).astype(np.int8)


def hamming(a, b) -> int:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"code lengths differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def hamming_matrix(queries, codes) -> np.ndarray:
    """All pairwise distances, computed as (k - q.c) / 2."""
    q = np.atleast_2d(queries).astype(np.int64)
    c = np.atleast_2d(codes).astype(np.int64)
    if q.shape[1] != c.shape[1]:
        raise DimensionError(f"code lengths differ: {q.shape[1]} vs {c.shape[1]}")
    return (q.shape[1] - q @ c.T) // 2


def _label_matrix(labels, n: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.ndim == 1:
        if len(lab) != n:
            raise DimensionError(f"{len(lab)} labels for {n} items")
        out = np.zeros((n, int(lab.max()) + 1 if n else 0), dtype=bool)
        out[np.arange(n), lab.astype(int)] = True
        return out
    if lab.shape[0] != n:
        raise DimensionError(f"{lab.shape[0]} label rows for {n} items")
    return lab.astype(bool)


@dataclass
class RetrievalIndex:
    """Database of codes with per-item label sets (bool matrix) and unique ids."""

    codes: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.codes = np.atleast_2d(np.asarray(self.codes)).astype(np.int8)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = len(self.codes)
        self.labels = _label_matrix(self.labels, n)
        if len(self.ids) != n:
            raise DimensionError(f"{len(self.ids)} ids for {n} codes")
        if len(np.unique(self.ids)) != n:
            raise ConfigError("item ids must be unique")
        if n and not np.all(np.abs(self.codes) == 1):
            raise ConfigError("codes must be strictly +-1")

    @classmethod
    def build(cls, codes, labels, ids=None) -> "RetrievalIndex":
        codes = np.atleast_2d(np.asarray(codes))
        if ids is None:
            ids = np.arange(len(codes))
        return cls(codes, labels, ids)

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def code_bits(self) -> int:
        return self.codes.shape[1]


def _order(dist: np.ndarray, ids: np.ndarray) -> np.ndarray:
    # lexsort: last key is primary
    return np.lexsort((ids, dist))


def rank(query, index: RetrievalIndex, depth: int | None = None) -> np.ndarray:
    """Item ids by ascending Hamming distance, ties by ascending id."""
    if len(index) == 0:
        raise ConfigError("cannot rank against an empty index")
    dist = hamming_matrix(query, index.codes)[0]
    order = _order(dist, index.ids)
    ids = index.ids[order]
    return ids if depth is None else ids[:depth]


def average_precision(relevant_sorted: np.ndarray, k: int) -> float:
    rel = np.asarray(relevant_sorted[:k], dtype=bool)
    hits = np.count_nonzero(rel)
    if hits == 0:
        return 0.0
    precision = np.cumsum(rel) / np.arange(1, len(rel) + 1)
    # fsum is correctly rounded, so the result does not depend on summation order
    return math.fsum(precision[rel]) / hits


def map_at_k(query_codes, query_labels, index: RetrievalIndex, k: int) -> float:
    """Mean over queries of AP over the top ``k`` Hamming-ranked items."""
    if k < 1:
        raise ConfigError(f"k-cutoff must be >= 1, got {k}")
    if len(index) == 0:
        raise ConfigError("cannot rank against an empty index")
    q = np.atleast_2d(np.asarray(query_codes))
    q_labels = np.asarray(query_labels)
    if q_labels.ndim == 1:
        width = max(index.labels.shape[1], int(q_labels.max()) + 1)
        ql = np.zeros((len(q), width), dtype=bool)
        ql[np.arange(len(q)), q_labels.astype(int)] = True
    else:
        ql = q_labels.astype(bool)
    db = index.labels
    width = max(ql.shape[1], db.shape[1])
    ql = np.pad(ql, ((0, 0), (0, width - ql.shape[1])))
    db = np.pad(db, ((0, 0), (0, width - db.shape[1])))
    dist = hamming_matrix(q, index.codes)
    aps = []
    for i in range(len(q)):
        order = _order(dist[i], index.ids)[:k]
        relevant = (db[order] & ql[i]).any(axis=1)
        aps.append(average_precision(relevant, k))
    return math.fsum(aps) / len(aps)


# index file: b"SSIX" | u16 version | u16 code bits | u16 label bits | u32 count
# then per item: u64 id | packed code | packed label bitmap; little-endian,
# bits packed LSB-first (bit i of the code is bit i % 8 of byte i // 8, 1 == +1).
INDEX_MAGIC = b"SSIX"
INDEX_VERSION = 1


def index_to_bytes(index: RetrievalIndex) -> bytes:
    k = index.code_bits
    n_labels = index.labels.shape[1]
    head = INDEX_MAGIC + struct.pack("<HHHI", INDEX_VERSION, k, n_labels, len(index))
    codes = np.packbits(index.codes > 0, axis=1, bitorder="little")
    labels = np.packbits(index.labels, axis=1, bitorder="little")
    rows = [
        struct.pack("<Q", int(i)) + c.tobytes() + l.tobytes()
        for i, c, l in zip(index.ids, codes, labels)
    ]
    return head + b"".join(rows)


def index_from_bytes(data: bytes) -> RetrievalIndex:
    if data[:4] != INDEX_MAGIC:
        raise DataFormatError("not an index file (bad magic)", 0)
    if len(data) < 14:
        raise DataFormatError("truncated index header", len(data))
    version, k, n_labels, count = struct.unpack_from("<HHHI", data, 4)
    if version != INDEX_VERSION:
        raise DataFormatError(f"unsupported index version {version}", 4)
    cb, lb = (k + 7) // 8, (n_labels + 7) // 8
    row = 8 + cb + lb
    if 14 + row * count != len(data):
        raise DataFormatError(f"index body should hold {count} rows of {row} bytes",
                              min(len(data), 14 + row * count))
    body = np.frombuffer(data, dtype=np.uint8, offset=14).reshape(count, row)
    ids = body[:, :8].copy().view("<u8").ravel().astype(np.int64)
    bits = np.unpackbits(body[:, 8:8 + cb], axis=1, bitorder="little", count=k)
    labels = np.unpackbits(body[:, 8 + cb:], axis=1, bitorder="little", count=n_labels)
    codes = np.where(bits == 1, 1, -1).astype(np.int8)
    return RetrievalIndex(codes, labels.astype(bool).reshape(count, n_labels), ids)


def save_index(path, index: RetrievalIndex) -> None:
    Path(path).write_bytes(index_to_bytes(index))


def load_index(path) -> RetrievalIndex:
    return index_from_bytes(Path(path).read_bytes())
