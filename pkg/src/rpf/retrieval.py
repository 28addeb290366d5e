"""Descriptor store and neighbor ranking.

Feature matrix file format: magic ``RPF1``, then two little-endian u32
(dimension, row count), then the rows as little-endian float32. The
companion ids file is UTF-8 with one id per line in row order.

Scores returned by the ranking functions are similarities (higher is
closer); metric-based ranking stores the negated metric so the
non-increasing score invariant holds everywhere. Vectors are used as
stored: no re-normalization happens before the dot product, so callers
wanting cosine similarity should pre-normalize their descriptors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .errors import (
    CountMismatch,
    DimMismatch,
    InsufficientRanking,
    MalformedHeader,
    MissingFeature,
    NTooLarge,
)
from .relpose import pose_metric
from .scene import Pose, SceneDatabase

_MAGIC = b"RPF1"


@dataclass(frozen=True, eq=False)
class RankedList:
    query_id: str
    ranked_ids: List[str]
    scores: List[float]

    def __len__(self) -> int:
        return len(self.ranked_ids)


class FeatureStore:
    """Dense descriptor matrix with parallel string ids."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise MalformedHeader(f"feature matrix must be 2-D, got {matrix.ndim}-D")
        if len(ids) != matrix.shape[0]:
            raise CountMismatch(f"{len(ids)} ids but {matrix.shape[0]} matrix rows")
        if not np.all(np.isfinite(matrix)):
            raise MalformedHeader("feature matrix has non-finite entries")
        self.ids = list(ids)
        self.matrix = matrix
        self._row = {rid: i for i, rid in enumerate(self.ids)}
        if len(self._row) != len(self.ids):
            raise CountMismatch("duplicate ids in feature store")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._row

    def vector(self, record_id: str) -> np.ndarray:
        try:
            return self.matrix[self._row[record_id]]
        except KeyError:
            raise MissingFeature(f"no feature vector for {record_id!r}") from None


def load_features(matrix_path, ids_path) -> FeatureStore:
    data = Path(matrix_path).read_bytes()
    if len(data) < 12 or data[:4] != _MAGIC:
        raise MalformedHeader(f"{matrix_path}: bad magic or truncated header")
    dim, count = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * dim * count
    if len(data) != expected:
        raise MalformedHeader(f"{matrix_path}: expected {expected} bytes, found {len(data)}")
    matrix = np.frombuffer(data[12:], dtype="<f4").reshape(count, dim)
    ids = Path(ids_path).read_text(encoding="utf-8").splitlines()
    ids = [line.strip() for line in ids if line.strip()]
    if len(ids) != count:
        raise CountMismatch(f"{ids_path}: {len(ids)} ids for {count} matrix rows")
    return FeatureStore(ids, matrix)


def save_features(store: FeatureStore, matrix_path, ids_path) -> None:
    payload = _MAGIC + struct.pack("<II", store.dim, len(store))
    payload += store.matrix.astype("<f4").tobytes()
    Path(matrix_path).write_bytes(payload)
    Path(ids_path).write_text("".join(f"{rid}\n" for rid in store.ids), encoding="utf-8")


def rank_by_dot(query_vec, store: FeatureStore, n: int, query_id: str = "") -> RankedList:
    """Top-n store ids by descending dot product with the query vector.

    Ties break lexicographically by id. When ``query_id`` names a row of
    the store, that row is excluded (self-match guard).
    """
    query_vec = np.asarray(query_vec, dtype=np.float64)
    if query_vec.shape != (store.dim,):
        raise DimMismatch(f"query has shape {query_vec.shape}, store dim is {store.dim}")
    # scored in float64 so near-ties rank stably regardless of BLAS path
    scores = store.matrix.astype(np.float64) @ query_vec
    order = [i for i in range(len(store)) if store.ids[i] != query_id]
    if n > len(order):
        raise NTooLarge(f"requested {n} of {len(order)} candidates")
    order.sort(key=lambda i: (-float(scores[i]), store.ids[i]))
    top = order[:n]
    return RankedList(query_id, [store.ids[i] for i in top], [float(scores[i]) for i in top])


def rank_by_pose_metric(
    query_pose: Pose, db: SceneDatabase, beta: float = 1.0, query_id: str = ""
) -> RankedList:
    """All database records in ascending combined pose-metric order.

    The stored score is the negated metric. The query's own record is
    excluded when ``query_id`` is present in the database.
    """
    entries = []
    for rec in db.records:
        if rec.id == query_id:
            continue
        entries.append((pose_metric(query_pose, rec.pose, beta), rec.id))
    entries.sort(key=lambda e: (e[0], e[1]))
    return RankedList(query_id, [rid for _, rid in entries], [-metric for metric, _ in entries])


def viewpoint_sets(
    ranked: RankedList, set_size: int = 5, interval: int = 50, count: int = 8
) -> List[List[str]]:
    """Fixed-size id sets sampled from a ranked list at a rank interval.

    Set ``k`` holds ranks ``k*interval + 1 .. k*interval + set_size``
    (1-based), i.e. the defaults yield ranks 1-5, 51-55, ..., 351-355.
    """
    needed = (count - 1) * interval + set_size
    if len(ranked) < needed:
        raise InsufficientRanking(f"need {needed} ranked ids, have {len(ranked)}")
    return [ranked.ranked_ids[k * interval : k * interval + set_size] for k in range(count)]
