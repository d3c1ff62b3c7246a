"""Point clouds, exact nearest-neighbor tables and distance-ratio statistics.

Everything downstream consumes the objects built here: a :class:`PointCloud`
is turned into a :class:`NeighborTable` by exact brute-force search, and the
table is reduced to the ratio statistics the estimators work with.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DatasetTooSmallError,
    DegenerateDistanceError,
    DegenerateRatioError,
    ParseError,
)

METRICS = ("euclidean",)

# Elements of one (chunk x n) distance block; bounds peak memory at ~32 MB.
_BLOCK_ELEMENTS = 1 << 22


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PointCloud:
    """An ``n x D`` matrix of finite coordinates, one row per observation."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
        if pts.shape[1] < 1:
            raise ValueError("points need at least one column")
        if pts.shape[0] < 2:
            raise DatasetTooSmallError(f"need at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            bad = np.argwhere(~np.isfinite(pts))[0]
            raise ValueError(f"non-finite coordinate at row {bad[0]}, column {bad[1]}")
        object.__setattr__(self, "points", _frozen(pts, float))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def D(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def scaled(self, factor: float) -> "PointCloud":
        return PointCloud(self.points * factor)

    def to_csv(self, path, header=None):
        """Write comma-separated coordinates readable by :func:`load_point_cloud`."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if header is not None:
                writer.writerow(header)
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class NeighborTable:
    """Sorted distances (and identities) of the first ``K`` neighbors of each query point.

    Row ``i`` holds ``r_{i,1} <= ... <= r_{i,K}``; the query point itself is
    never stored. ``query_indices`` maps rows to point indices in the source
    cloud (all points, in order, unless a subset of queries was requested).
    """

    distances: np.ndarray
    indices: np.ndarray
    metric_name: str = "euclidean"
    query_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        dist = np.asarray(self.distances, dtype=float)
        idx = np.asarray(self.indices, dtype=np.int64)
        if dist.ndim != 2 or dist.shape != idx.shape:
            raise ValueError("distances and indices must be 2-D arrays of equal shape")
        if dist.shape[1] < 1:
            raise ValueError("a neighbor table needs K >= 1")
        if not np.all(np.isfinite(dist)):
            raise ValueError("distances must be finite")
        if np.any(dist <= 0):
            i, l = np.argwhere(dist <= 0)[0]
            raise DegenerateDistanceError(i, idx[i, l])
        if np.any(np.diff(dist, axis=1) < 0):
            raise ValueError("each row of distances must be nondecreasing")
        q = self.query_indices
        q = np.arange(dist.shape[0]) if q is None else np.asarray(q, dtype=np.int64)
        if q.shape != (dist.shape[0],):
            raise ValueError("query_indices must have one entry per row")
        object.__setattr__(self, "distances", _frozen(dist, float))
        object.__setattr__(self, "indices", _frozen(idx, np.int64))
        object.__setattr__(self, "query_indices", _frozen(q, np.int64))

    @property
    def K(self) -> int:
        return self.distances.shape[1]

    @property
    def n(self) -> int:
        return self.distances.shape[0]

    def truncated(self, K: int) -> "NeighborTable":
        if not 1 <= K <= self.K:
            raise ValueError(f"cannot truncate a K={self.K} table to K={K}")
        return NeighborTable(
            self.distances[:, :K], self.indices[:, :K], self.metric_name, self.query_indices
        )

    def to_csv(self, path):
        """Long-format export: ``point_index, order, distance, neighbor_index``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["point_index", "order", "distance", "neighbor_index"])
            for row, q in enumerate(self.query_indices):
                for l in range(self.K):
                    writer.writerow(
                        [int(q), l + 1, repr(float(self.distances[row, l])), int(self.indices[row, l])]
                    )

    @classmethod
    def from_csv(cls, path, metric_name="euclidean"):
        """Inverse of :meth:`to_csv`."""
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["point_index", "order", "distance", "neighbor_index"]:
                raise ParseError(f"unexpected neighbor-table header {header!r}", line=1)
            for lineno, rec in enumerate(reader, start=2):
                try:
                    rows.append((int(rec[0]), int(rec[1]), float(rec[2]), int(rec[3])))
                except (ValueError, IndexError) as exc:
                    raise ParseError(str(exc), line=lineno) from None
        if not rows:
            raise ParseError("empty neighbor table", line=2)
        queries = list(dict.fromkeys(r[0] for r in rows))
        K = max(r[1] for r in rows)
        pos = {q: i for i, q in enumerate(queries)}
        dist = np.full((len(queries), K), np.nan)
        idx = np.full((len(queries), K), -1, dtype=np.int64)
        for q, order, d, j in rows:
            dist[pos[q], order - 1] = d
            idx[pos[q], order - 1] = j
        if np.isnan(dist).any():
            raise ParseError("neighbor table has missing (point, order) entries")
        return cls(dist, idx, metric_name, np.array(queries))


@dataclass(frozen=True)
class RatioSample:
    """Ratios ``r_{i,n2} / r_{i,n1}`` with their neighbor orders and mean scale."""

    values: np.ndarray
    n1: int = 1
    n2: int = 2
    mean_scale: float = 1.0

    def __post_init__(self):
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if vals.ndim != 1:
            raise ValueError("ratio values must be one-dimensional")
        if int(self.n1) < 1 or int(self.n2) <= int(self.n1):
            raise ValueError(f"need 1 <= n1 < n2, got n1={self.n1}, n2={self.n2}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("ratio values must be finite")
        if np.any(vals <= 1):
            i = int(np.argmax(vals <= 1))
            raise DegenerateRatioError(
                f"ratio {vals[i]!r} at position {i} is not > 1", point=i, order=int(self.n2)
            )
        if not self.mean_scale > 0:
            raise ValueError("mean_scale must be positive")
        object.__setattr__(self, "values", _frozen(vals, float))
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))
        object.__setattr__(self, "mean_scale", float(self.mean_scale))

    def __len__(self):
        return self.values.shape[0]

    @property
    def log_values(self) -> np.ndarray:
        return np.log(self.values)


@dataclass(frozen=True)
class ConsecutiveRatios:
    """Matrix of consecutive ratios; column ``l - 2`` holds ``r_{i,l} / r_{i,l-1}``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[1] < 1:
            raise ValueError("consecutive ratios must be an n x (L-1) matrix with L >= 2")
        if np.any(vals <= 1) or not np.all(np.isfinite(vals)):
            i, c = np.argwhere(~(vals > 1) | ~np.isfinite(vals))[0]
            raise DegenerateRatioError(
                f"ratio at point {i}, order {c + 2} is not a finite value > 1",
                point=int(i),
                order=int(c + 2),
            )
        object.__setattr__(self, "values", _frozen(vals, float))

    @property
    def L(self) -> int:
        return self.values.shape[1] + 1

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _parse_line(line, fmt):
    if fmt == "csv":
        return [f.strip() for f in line.split(",")]
    return line.split()


def load_point_cloud(path, format="csv", has_header=False) -> PointCloud:
    """Read a delimited text file of floats into a :class:`PointCloud`.

    Args:
        path: file to read (UTF-8, '.' decimal separator).
        format: ``"csv"`` for comma-separated, ``"whitespace"`` for blank-separated fields.
        has_header: skip the first non-empty line.

    Raises:
        ParseError: ragged rows or non-numeric fields, with the 1-based line number.
        DatasetTooSmallError: fewer than two data rows.
    """
    if format not in ("csv", "whitespace"):
        raise ValueError(f"unknown format {format!r}; use 'csv' or 'whitespace'")
    rows = []
    width = None
    header_pending = has_header
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if header_pending:
                header_pending = False
                continue
            fields = _parse_line(line, format)
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(f"expected {width} fields, found {len(fields)}", line=lineno)
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ParseError(f"non-numeric field in {line!r}", line=lineno) from None
    if len(rows) < 2:
        raise DatasetTooSmallError(f"{path}: need at least 2 data rows, found {len(rows)}")
    return PointCloud(np.array(rows, dtype=float))


def deduplicate(cloud: PointCloud) -> PointCloud:
    """Drop exact duplicate rows, keeping the first occurrence and the original order."""
    _, first = np.unique(cloud.points, axis=0, return_index=True)
    return PointCloud(cloud.points[np.sort(first)])


def _sq_distances(queries, points):
    # Coordinate-by-coordinate accumulation. Both search paths use exactly
    # this arithmetic, so distances are bit-identical whichever path ran.
    acc = np.zeros(np.broadcast_shapes(queries.shape[:-1], points.shape[:-1]))
    for c in range(points.shape[-1]):
        diff = queries[..., c] - points[..., c]
        acc += diff * diff
    return acc


def _select_row(dist_row, cand, K):
    """K smallest of ``dist_row`` (aligned with ``cand``); equal distances ordered by index."""
    order = np.lexsort((cand, dist_row))[:K]
    return cand[order], dist_row[order]


def _check_nearest(dist, nbr, query_idx):
    zero = dist[:, 0] == 0
    if zero.any():
        r = int(np.argmax(zero))
        raise DegenerateDistanceError(query_idx[r], nbr[r, 0])


def _knn_brute(points, query_idx, K):
    sq = _sq_distances(points[query_idx][:, None, :], points[None, :, :])
    rows = np.arange(len(query_idx))
    sq[rows, query_idx] = np.inf
    part = np.argpartition(sq, K - 1, axis=1)[:, :K]
    kth = sq[rows[:, None], part].max(axis=1)
    n_le = np.count_nonzero(sq <= kth[:, None], axis=1)

    cand = np.sort(part, axis=1)
    cand_d = sq[rows[:, None], cand]
    order = np.argsort(cand_d, axis=1, kind="stable")
    nbr = np.take_along_axis(cand, order, axis=1)
    for r in np.flatnonzero(n_le > K):
        # ties straddle the K-th place: resolve by index among all tied points
        every = np.flatnonzero(sq[r] <= kth[r])
        nbr[r] = _select_row(sq[r, every], every, K)[0]
    dist = np.sqrt(sq[rows[:, None], nbr])
    _check_nearest(dist, nbr, query_idx)
    return dist, nbr


def _knn_kdtree(points, tree, query_idx, K):
    """Candidates from a KD-tree, distances recomputed exactly; unprovable rows go brute force."""
    m = K + 2
    tree_d, cand = tree.query(points[query_idx], k=m)
    sq = _sq_distances(points[query_idx][:, None, :], points[cand])
    sq[cand == query_idx[:, None]] = np.inf
    dist = np.empty((len(query_idx), K))
    nbr = np.empty((len(query_idx), K), dtype=np.int64)
    fallback = []
    for r in range(len(query_idx)):
        idx, d2 = _select_row(sq[r], cand[r], K)
        kth = math.sqrt(d2[-1])
        # Every point left out is at tree distance >= tree_d[r, -1]; if that
        # clears the K-th exact distance, the candidate set is complete.
        if not (np.isfinite(d2[-1]) and tree_d[r, -1] > kth * (1 + 1e-9) + 1e-300):
            fallback.append(r)
            continue
        nbr[r] = idx
        dist[r] = np.sqrt(d2)
    if fallback:
        fb = np.array(fallback)
        dist[fb], nbr[fb] = _knn_brute(points, query_idx[fb], K)
    _check_nearest(dist, nbr, query_idx)
    return dist, nbr


def default_threads():
    """Thread count from ``IDRATIO_THREADS``, else 1."""
    try:
        return max(1, int(os.environ.get("IDRATIO_THREADS", "1")))
    except ValueError:
        return 1


def knn_table(
    cloud: PointCloud, K: int, metric="euclidean", queries=None, threads=None, algorithm="auto"
) -> NeighborTable:
    """Exact K-nearest-neighbor distances.

    The reference path is brute force over all pairs. ``algorithm="kdtree"``
    only uses a KD-tree to propose candidates: distances are recomputed with
    the brute-force arithmetic and any row whose candidate set cannot be shown
    complete is redone by brute force, so both paths return identical tables.

    Args:
        cloud: the data.
        K: number of neighbors, ``1 <= K <= n - 1``.
        metric: only ``"euclidean"`` is available.
        queries: optional indices of the points whose neighbors are wanted;
            neighbors are always searched among all points. Defaults to every point.
        threads: worker threads over query blocks (output does not depend on it).
        algorithm: ``"brute"``, ``"kdtree"`` or ``"auto"`` (KD-tree for
            ``D <= 8`` and ``n > 2000``).

    Raises:
        DegenerateDistanceError: a query point has a duplicate in the cloud.
    """
    if metric not in METRICS:
        raise ValueError(f"unsupported metric {metric!r}; available: {METRICS}")
    K = int(K)
    n = cloud.n
    if not 1 <= K <= n - 1:
        raise ValueError(f"K must satisfy 1 <= K <= n-1 = {n - 1}, got {K}")
    query_idx = np.arange(n) if queries is None else np.asarray(queries, dtype=np.int64)
    if query_idx.ndim != 1 or query_idx.size == 0:
        raise ValueError("queries must be a non-empty 1-D index array")
    if query_idx.min() < 0 or query_idx.max() >= n:
        raise ValueError("query index out of range")
    if algorithm == "auto":
        algorithm = "kdtree" if cloud.D <= 8 and n > 2000 else "brute"
    if algorithm not in ("brute", "kdtree"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if K + 2 > n:
        algorithm = "brute"

    points = cloud.points
    if algorithm == "kdtree":
        tree = cKDTree(points)
        chunk = max(1, _BLOCK_ELEMENTS // (K + 2) // max(cloud.D, 1))

        def block(q):
            return _knn_kdtree(points, tree, q, K)
    else:
        chunk = max(1, _BLOCK_ELEMENTS // n)

        def block(q):
            return _knn_brute(points, q, K)

    starts = range(0, len(query_idx), chunk)
    distances = np.empty((len(query_idx), K))
    indices = np.empty((len(query_idx), K), dtype=np.int64)

    def work(s):
        d, j = block(query_idx[s : s + chunk])
        distances[s : s + chunk] = d
        indices[s : s + chunk] = j

    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    return NeighborTable(distances, indices, metric, query_idx)


def consecutive_ratios(table: NeighborTable, L: int) -> ConsecutiveRatios:
    """Ratios ``r_{i,l} / r_{i,l-1}`` for ``l = 2..L``.

    Raises:
        DegenerateRatioError: two consecutive distances are equal; the error
            carries the offending (row, order).
    """
    L = int(L)
    if not 2 <= L <= table.K:
        raise ValueError(f"L must satisfy 2 <= L <= K = {table.K}, got {L}")
    r = table.distances[:, :L]
    mu = r[:, 1:] / r[:, :-1]
    if np.any(mu <= 1):
        i, c = np.argwhere(mu <= 1)[0]
        raise DegenerateRatioError(
            f"tied distances r[{i},{c + 2}] == r[{i},{c + 1}] for point {table.query_indices[i]}",
            point=int(i),
            order=int(c + 2),
        )
    return ConsecutiveRatios(mu)


def generic_ratios(table: NeighborTable, n1: int, n2: int) -> RatioSample:
    """Ratios ``r_{i,n2} / r_{i,n1}`` plus the mean scale ``mean_i (r_{i,n1} + r_{i,n2}) / 2``."""
    n1, n2 = int(n1), int(n2)
    if not 1 <= n1 < n2 <= table.K:
        raise ValueError(f"need 1 <= n1 < n2 <= K = {table.K}, got n1={n1}, n2={n2}")
    r1 = table.distances[:, n1 - 1]
    r2 = table.distances[:, n2 - 1]
    mu = r2 / r1
    if np.any(mu <= 1):
        i = int(np.argmax(mu <= 1))
        raise DegenerateRatioError(
            f"tied distances r[{i},{n2}] == r[{i},{n1}] for point {table.query_indices[i]}",
            point=i,
            order=n2,
        )
    return RatioSample(mu, n1, n2, float(np.mean((r1 + r2) / 2)))


def decimate(cloud: PointCloud, keep_fraction: float, seed) -> PointCloud:
    """Uniform subsample without replacement of ``round(keep_fraction * n)`` rows.

    Rows keep their original relative order. Uses ``numpy.random.default_rng(seed)``.
    """
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    m = int(round(keep_fraction * cloud.n))
    if m < 2:
        raise DatasetTooSmallError(
            f"keeping {keep_fraction} of {cloud.n} points leaves {m} (< 2)"
        )
    if m == cloud.n:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(cloud.n, size=m, replace=False))
    return PointCloud(cloud.points[keep])



__all__ = [
    "PointCloud",
    "NeighborTable",
    "RatioSample",
    "ConsecutiveRatios",
    "load_point_cloud",
    "deduplicate",
    "knn_table",
    "consecutive_ratios",
    "generic_ratios",
    "decimate",
    "default_threads",
    "METRICS",
]
