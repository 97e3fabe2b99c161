"""Exact L2 distances, brute-force k-nearest neighbours and nearest-rank percentiles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmbeddedSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError(f"points must be an N x D array with D >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite entries")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class NeighborList:
    query: int
    neighbors: np.ndarray
    distances: np.ndarray


def pairwise_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def distance_matrix(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """All-pairs L2 distances between rows of ``x`` and ``y`` (``y`` defaults to ``x``).

    Uses the Gram expansion, then clamps tiny negative round-off; the diagonal of a
    self-distance matrix is pinned to exactly zero.
    """
    x = np.asarray(x, dtype=np.float64)
    same = y is None
    y = x if same else np.asarray(y, dtype=np.float64)
    sq = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * (x @ y.T)
    np.maximum(sq, 0.0, out=sq)
    d = np.sqrt(sq)
    if same:
        np.fill_diagonal(d, 0.0)
    return d


def _sorted_row(dist_row: np.ndarray, query: int) -> np.ndarray:
    # lexsort: primary key distance, secondary key index -> ties go to the smaller index
    order = np.lexsort((np.arange(dist_row.size), dist_row))
    return order[order != query]


def knn(es: EmbeddedSet, query: int, k: int, dist_row: np.ndarray | None = None) -> NeighborList:
    n = es.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} out of range [1, {n - 1}]")
    if not 0 <= query < n:
        raise IndexError(f"query {query} out of range")
    if dist_row is None:
        dist_row = np.sqrt(((es.points - es.points[query]) ** 2).sum(1))
    nb = _sorted_row(dist_row, query)[:k]
    return NeighborList(query, nb, dist_row[nb])


def neighbor_order(dist: np.ndarray) -> np.ndarray:
    """Row i: all other indices sorted by distance from i (ties by index), shape N x (N-1)."""
    n = dist.shape[0]
    idx = np.broadcast_to(np.arange(n), dist.shape)
    order = np.lexsort((idx, dist), axis=1)
    # the query itself sits at distance 0; drop it wherever it landed
    mask = order != np.arange(n)[:, None]
    return order[mask].reshape(n, n - 1)


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("percentile of empty input")
    if not 0 < p <= 100:
        raise ValueError(f"p={p} outside (0, 100]")
    # guard against p*n/100 landing a hair above an integer
    rank = max(1, math.ceil(p * v.size / 100.0 - 1e-9))
    return float(v[rank - 1])
