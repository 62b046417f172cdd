"""Local outlier factor over Euclidean point sets, with a brute-force oracle.

The pipeline: exact k-nearest neighbors (two tie policies), k-distance,
reachability distance max(k-distance(o), d(p, o)), local reachability density
count / sum(reach distances), and the LOF density ratio
sum(lrd of neighbors) / (count * lrd(p)).

Degenerate conventions (coincident points): lrd is +inf when the reach-distance
sum is 0; LOF is 1 when numerator and denominator are both infinite (duplicate
clusters are inliers), +inf when only neighbor densities are infinite, and 0
when only the query density is infinite.

All arithmetic is float64 with fixed summation order, so results are identical
for any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TIE_MODES",
    "PointSet",
    "NeighborInfo",
    "LofResult",
    "reach_dist",
    "knn_query",
    "lrd",
    "lof_batch",
    "lof_bruteforce_oracle",
    "max_relative_deviation",
]

TIE_MODES = ("exact-k", "inclusive")

_BLOCK = 256  # query rows per distance block; fixed so threading cannot change results

ORACLE_CAP = 2000


@dataclass(frozen=True, eq=False)
class PointSet:
    """n points in R^dim with unique ascending ids; metric is Euclidean."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, dim) float64, row i belongs to ids[i]

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(self.ids):
            raise ValueError("vectors must be (n, dim) with one row per id")
        if arr.shape[0] < 2:
            raise ValueError("a point set needs at least 2 points")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite coordinate in point set")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate id in point set")
        if any(self.ids[i] >= self.ids[i + 1] for i in range(len(self.ids) - 1)):
            raise ValueError("ids must be strictly ascending")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", arr)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, Sequence[float]]]) -> "PointSet":
        items = sorted(rows)
        return cls(
            ids=tuple(doc_id for doc_id, _ in items),
            vectors=np.asarray([vec for _, vec in items], dtype=np.float64),
        )

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, doc_id: str) -> int:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {d: i for i, d in enumerate(self.ids)}
            object.__setattr__(self, "_index_cache", cached)
        idx = cached.get(doc_id)
        if idx is None:
            raise KeyError(doc_id)
        return idx


@dataclass(frozen=True, eq=False)
class NeighborInfo:
    """Per-point neighbor lists ordered by (distance, id), plus k-distances."""

    k: int
    tie_mode: str
    indices: list[np.ndarray]  # row indices into the point set
    distances: list[np.ndarray]  # non-decreasing, aligned with indices
    k_distance: np.ndarray  # (n,)


@dataclass(frozen=True, eq=False)
class LofResult:
    """Local reachability density and LOF per point, aligned with ids."""

    ids: tuple[str, ...]
    lrd: np.ndarray
    lof: np.ndarray


def reach_dist(k_distance_o: float, d_po: float) -> float:
    """Reachability distance: max of the neighbor's k-distance and d(p, o)."""
    if not (math.isfinite(k_distance_o) and math.isfinite(d_po)):
        raise ValueError("reach_dist inputs must be finite")
    if k_distance_o < 0 or d_po < 0:
        raise ValueError("reach_dist inputs must be non-negative")
    return max(k_distance_o, d_po)


def _check_k(k: int, n: int):
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in 1..{n - 1}, got {k}")


def _check_tie_mode(tie_mode: str):
    if tie_mode not in TIE_MODES:
        raise ValueError(f"tie_mode must be one of {TIE_MODES}, got {tie_mode!r}")


def _distance_block(x: np.ndarray, sq: np.ndarray, i0: int, i1: int) -> np.ndarray:
    """Euclidean distances from rows i0:i1 to all points, self set to +inf."""
    d2 = sq[i0:i1, None] + sq[None, :] - 2.0 * (x[i0:i1] @ x.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2, out=d2)
    d[np.arange(i1 - i0), np.arange(i0, i1)] = np.inf
    return d


def _select_neighbors(row: np.ndarray, k: int, tie_mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Neighbor indices and distances for one query row (self already +inf)."""
    thr = np.partition(row, k - 1)[k - 1]
    if tie_mode == "exact-k":
        closer = np.flatnonzero(row < thr)
        at = np.flatnonzero(row == thr)
        sel = np.concatenate([closer, at[: k - len(closer)]])
    else:
        sel = np.flatnonzero(row <= thr)
    order = np.lexsort((sel, row[sel]))
    sel = sel[order]
    return sel, row[sel]


def knn_query(
    points: PointSet, k: int, tie_mode: str = "exact-k", threads: int = 1
) -> NeighborInfo:
    """Exact nearest neighbors under Euclidean distance.

    exact-k returns exactly k neighbors, breaking distance ties by ascending
    id; inclusive returns every point within the k-distance.
    """
    _check_tie_mode(tie_mode)
    n = len(points)
    _check_k(k, n)
    x = points.vectors
    sq = np.einsum("ij,ij->i", x, x)

    indices: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    distances: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    k_distance = np.empty(n)

    def work(i0: int) -> None:
        i1 = min(i0 + _BLOCK, n)
        block = _distance_block(x, sq, i0, i1)
        for local in range(i1 - i0):
            sel, dist = _select_neighbors(block[local], k, tie_mode)
            indices[i0 + local] = sel
            distances[i0 + local] = dist
            k_distance[i0 + local] = dist[-1]

    starts = range(0, n, _BLOCK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for i0 in starts:
            work(i0)

    return NeighborInfo(
        k=k, tie_mode=tie_mode, indices=indices, distances=distances, k_distance=k_distance
    )


def lrd(points: PointSet, k: int, neighbors: NeighborInfo, doc_id: str) -> float:
    """Local reachability density of one point, +inf for coincident clusters."""
    if neighbors.k != k:
        raise ValueError(f"neighbors were computed with k={neighbors.k}, not {k}")
    i = points.index_of(doc_id)
    sel = neighbors.indices[i]
    reach = np.maximum(neighbors.k_distance[sel], neighbors.distances[i])
    total = float(reach.sum())
    count = k if neighbors.tie_mode == "exact-k" else len(sel)
    if total == 0.0:
        return math.inf
    return count / total


def _lrd_all(neighbors: NeighborInfo) -> np.ndarray:
    n = len(neighbors.indices)
    counts = np.fromiter((len(ix) for ix in neighbors.indices), dtype=np.int64, count=n)
    if neighbors.tie_mode == "exact-k":
        divisors = np.full(n, neighbors.k, dtype=np.float64)
    else:
        divisors = counts.astype(np.float64)

    if counts.min() == counts.max():
        nbr = np.vstack(neighbors.indices)
        dists = np.vstack(neighbors.distances)
        sums = np.maximum(neighbors.k_distance[nbr], dists).sum(axis=1)
    else:
        sums = np.empty(n)
        for i, (sel, dist) in enumerate(zip(neighbors.indices, neighbors.distances)):
            sums[i] = np.maximum(neighbors.k_distance[sel], dist).sum()
    with np.errstate(divide="ignore"):
        return divisors / sums


def lof_batch(
    points: PointSet, k: int, tie_mode: str = "exact-k", threads: int = 1
) -> LofResult:
    """LOF for every point; deterministic for any thread count."""
    neighbors = knn_query(points, k, tie_mode, threads=threads)
    lrd_all = _lrd_all(neighbors)

    n = len(points)
    counts = np.fromiter((len(ix) for ix in neighbors.indices), dtype=np.int64, count=n)
    if counts.min() == counts.max():
        nbr = np.vstack(neighbors.indices)
        numerators = lrd_all[nbr].sum(axis=1)
    else:
        numerators = np.empty(n)
        for i, sel in enumerate(neighbors.indices):
            numerators[i] = lrd_all[sel].sum()

    divisors = np.full(n, k, dtype=np.float64) if tie_mode == "exact-k" else counts
    with np.errstate(invalid="ignore", divide="ignore"):
        lof = numerators / (divisors * lrd_all)
    lof = np.where(np.isnan(lof), 1.0, lof)  # inf/inf: coincident clusters are inliers
    return LofResult(ids=points.ids, lrd=lrd_all, lof=lof)


def lof_bruteforce_oracle(
    points: PointSet, k: int, tie_mode: str = "exact-k", cap: int = ORACLE_CAP
) -> LofResult:
    """Literal O(n^2) reference evaluation, kept independent of lof_batch.

    Distances come from direct coordinate differences (not the norm expansion),
    neighbors from a full stable sort, and the density formulas from plain
    Python loops.
    """
    _check_tie_mode(tie_mode)
    n = len(points)
    if n > cap:
        raise ValueError(f"oracle cap exceeded: {n} > {cap}")
    _check_k(k, n)
    x = points.vectors

    dist = np.empty((n, n))
    for i in range(n):
        diff = x - x[i]
        dist[i] = np.sqrt((diff * diff).sum(axis=1))
    np.fill_diagonal(dist, np.inf)

    neighbor_lists: list[list[int]] = []
    k_distance = [0.0] * n
    for i in range(n):
        order = np.lexsort((np.arange(n), dist[i]))
        kd = float(dist[i, order[k - 1]])
        k_distance[i] = kd
        if tie_mode == "exact-k":
            chosen = [int(j) for j in order[:k]]
        else:
            chosen = [int(j) for j in order if dist[i, j] <= kd]
        neighbor_lists.append(chosen)

    lrd_vals = [0.0] * n
    for i in range(n):
        total = 0.0
        for j in neighbor_lists[i]:
            total += max(k_distance[j], float(dist[i, j]))
        count = k if tie_mode == "exact-k" else len(neighbor_lists[i])
        lrd_vals[i] = math.inf if total == 0.0 else count / total

    lof_vals = [0.0] * n
    for i in range(n):
        numerator = 0.0
        for j in neighbor_lists[i]:
            numerator += lrd_vals[j]
        count = k if tie_mode == "exact-k" else len(neighbor_lists[i])
        denominator = count * lrd_vals[i]
        if math.isinf(numerator) and math.isinf(denominator):
            lof_vals[i] = 1.0
        elif math.isinf(denominator):
            lof_vals[i] = 0.0
        else:
            lof_vals[i] = numerator / denominator

    return LofResult(
        ids=points.ids, lrd=np.asarray(lrd_vals), lof=np.asarray(lof_vals)
    )


def max_relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / |b| with inf==inf treated as agreement; b is the reference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    worst = 0.0
    for av, bv in zip(a.ravel(), b.ravel()):
        if math.isinf(av) or math.isinf(bv):
            dev = 0.0 if av == bv else math.inf
        elif av == bv:
            dev = 0.0
        else:
            dev = abs(av - bv) / max(abs(bv), 1e-300)
        worst = max(worst, dev)
    return worst
