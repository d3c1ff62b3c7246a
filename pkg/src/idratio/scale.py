"""Scale-dependent analysis of the intrinsic dimension.

Two ways of probing larger length scales are provided: Gride on the full
dataset with geometrically growing neighbor orders (:func:`gride_sweep`), and
TWO-NN on progressively decimated subsets (:func:`twonn_decimation_sweep`).
Both return a :class:`SweepTable` whose rows carry the mean neighbor
distance the estimate refers to.

Seeds for rows, replicates and repetitions are derived from the user seed
with :class:`numpy.random.SeedSequence`, keyed by the row/replicate
coordinates, so any single row can be recomputed in isolation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .estimators import IdEstimate, gride_mle, twonn_mle
from .geometry import NeighborTable, PointCloud, decimate, generic_ratios, knn_table
from .synthgen import pivot_process

SWEEP_FIELDS = ("n1", "n2", "mean_scale", "d_hat", "ci_low", "ci_high", "level", "n_eff", "method")
DEFAULT_N1 = tuple(2**k for k in range(9))  # 1, 2, 4, ..., 256
DEFAULT_DECIMATION_REPLICATES = 10


def derive_seed(seed, *key) -> int:
    """A 32-bit seed determined by ``seed`` and the integer ``key`` coordinates."""
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])


@dataclass(frozen=True)
class SweepRow:
    n1: int
    n2: int
    mean_scale: float
    estimate: IdEstimate
    subset_size: int | None = None

    @property
    def d_hat(self):
        return self.estimate.d_hat


@dataclass(frozen=True)
class SweepTable:
    rows: tuple
    ratio: int
    descriptor: str = ""
    protocol: str = "gride"

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.protocol == "gride":
            n1s = [r.n1 for r in self.rows]
            if n1s != sorted(n1s) or len(set(n1s)) != len(n1s):
                raise ValueError("sweep rows must have strictly increasing n1")
            if any(r.n2 != self.ratio * r.n1 for r in self.rows):
                raise ValueError("every row must satisfy n2 = ratio * n1")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def mean_scales(self):
        return np.array([r.mean_scale for r in self.rows])

    @property
    def d_hats(self):
        return np.array([r.estimate.d_hat for r in self.rows])

    @property
    def widths(self):
        return np.array([r.estimate.width for r in self.rows])

    def to_csv(self, path):
        """Write ``n1,n2,mean_scale,d_hat,ci_low,ci_high,level,n_eff,method`` to a path or text stream."""
        if hasattr(path, "write"):
            self._write(path)
            return
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self._write(fh)

    def _write(self, fh):
        writer = csv.writer(fh)
        writer.writerow(SWEEP_FIELDS)
        for r in self.rows:
            e = r.estimate
            writer.writerow([
                r.n1, r.n2, repr(float(r.mean_scale)), repr(float(e.d_hat)),
                repr(float(e.interval_low)), repr(float(e.interval_high)),
                repr(float(e.level)), int(e.n_eff), e.method,
            ])


def load_sweep_csv(path, ratio=None, descriptor="", protocol=None) -> SweepTable:
    """Read a table written by :meth:`SweepTable.to_csv`."""
    from .errors import ParseError

    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != SWEEP_FIELDS:
            raise ParseError(f"unexpected sweep header {header!r}", line=1)
        for lineno, rec in enumerate(reader, start=2):
            try:
                n1, n2 = int(rec[0]), int(rec[1])
                scale, d, lo, hi, level = map(float, rec[2:7])
                est = IdEstimate(d, lo, hi, level, rec[8], int(rec[7]), scale=scale, n1=n1, n2=n2)
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from None
            rows.append(SweepRow(n1, n2, scale, est))
    if protocol is None:
        protocol = "decimation" if rows and rows[0].estimate.method.startswith("twonn") else "gride"
    if ratio is None:
        ratio = rows[0].n2 // rows[0].n1 if rows else 2
    return SweepTable(rows, ratio, descriptor, protocol)


def sweep_orders(ratio, n1_values=None, K=None):
    """Validated ``(n1, n2)`` pairs; raises if the table order ``K`` is insufficient."""
    ratio = int(ratio)
    if ratio < 2:
        raise ValueError("ratio n2/n1 must be an integer >= 2")
    n1_values = DEFAULT_N1 if n1_values is None else tuple(sorted(set(int(v) for v in n1_values)))
    if not n1_values or n1_values[0] < 1:
        raise ValueError("n1 values must be positive")
    need = ratio * n1_values[-1]
    if K is not None and need > K:
        raise ValueError(
            f"sweep needs neighbor order {need} (n1={n1_values[-1]}, ratio={ratio}) "
            f"but the table has K={K}; recompute with K >= {need}"
        )
    return [(n1, ratio * n1) for n1 in n1_values]


def gride_sweep(
    table: NeighborTable,
    ratio=2,
    n1_values=None,
    level=0.95,
    uncertainty="fisher",
    bootstrap_reps=200,
    seed=0,
    d_max=None,
    descriptor="",
) -> SweepTable:
    """Gride estimates on the whole table at ``(n1, ratio * n1)`` for each ``n1``.

    Row seeds depend only on ``(seed, n1)``.
    """
    rows = []
    for n1, n2 in sweep_orders(ratio, n1_values, table.K):
        mu = generic_ratios(table, n1, n2)
        est = gride_mle(
            mu, level=level, uncertainty=uncertainty, bootstrap_reps=bootstrap_reps,
            seed=derive_seed(seed, n1), d_max=d_max,
        )
        rows.append(SweepRow(n1, n2, mu.mean_scale, est))
    return SweepTable(rows, int(ratio), descriptor, "gride")


def _mean_interval(values, level):
    values = np.asarray(values, dtype=float)
    m = float(values.mean())
    if values.size < 2:
        return m, m, m
    half = float(special.ndtri(0.5 + level / 2)) * values.std(ddof=1) / math.sqrt(values.size)
    return m, m - half, m + half


def twonn_decimation_sweep(
    cloud: PointCloud, halvings, replicates=DEFAULT_DECIMATION_REPLICATES, level=0.95, seed=0,
    threads=None, descriptor="",
) -> SweepTable:
    """TWO-NN MLE on random subsets of size ``n / 2^s`` for ``s = 0..halvings``.

    Each row holds the mean estimate over ``replicates`` subsets with a
    normal-theory interval for that mean, and the mean of the subsets'
    ``(r_1 + r_2) / 2`` scales. The full-data row (and every row when
    ``replicates = 1``) keeps the Inverse-Gamma interval of its single fit.
    """
    halvings = int(halvings)
    if halvings < 0 or replicates < 1:
        raise ValueError("halvings must be >= 0 and replicates >= 1")
    final = int(round(cloud.n * 0.5**halvings))
    if final < 10:
        raise ValueError(
            f"{halvings} halvings of {cloud.n} points leave {final} (< 10); use fewer halvings"
        )
    rows = []
    for s in range(halvings + 1):
        keep = 0.5**s
        ests = []
        for r in range(replicates):
            if s == 0 and r > 0:
                ests.append(ests[0])  # keep_fraction = 1 returns the full cloud every time
                continue
            sub = decimate(cloud, keep, derive_seed(seed, s, r))
            mu = generic_ratios(knn_table(sub, 2, threads=threads), 1, 2)
            ests.append(twonn_mle(mu, level))
        size = ests[0].n_eff
        scale = float(np.mean([e.scale for e in ests]))
        if replicates == 1 or s == 0:
            est = replace(ests[0], method="twonn-decimation")
        else:
            m, lo, hi = _mean_interval([e.d_hat for e in ests], level)
            est = IdEstimate(m, lo, hi, level, "twonn-decimation", size, scale=scale, n1=1, n2=2)
        rows.append(SweepRow(1, 2, scale, est, subset_size=size))
    return SweepTable(rows, 2, descriptor, "decimation")


@dataclass(frozen=True)
class RepeatedSummary:
    """Mean of repeated estimates with a normal-theory interval for the mean."""

    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    level: float
    estimates: np.ndarray = field(repr=False)

    @property
    def width(self):
        return self.ci_high - self.ci_low


def repeated_estimate_summary(generator, estimator, repetitions, seed=0, level=0.95, seeds=None):
    """Regenerate data, estimate, and summarize over ``repetitions`` runs.

    Args:
        generator: callable ``seed -> data`` (e.g. a :class:`~idratio.synthgen.GeneratorSpec`).
        estimator: callable ``data -> float | IdEstimate | array`` of estimates.
        repetitions: number of runs (>= 2).
        seed: master seed; run ``k`` uses ``derive_seed(seed, k)``.
        seeds: explicit per-run seeds, overriding the derived ones.

    Returns:
        RepeatedSummary; ``mean``/``ci_low``/``ci_high`` have the shape of one estimate.
    """
    if repetitions < 2:
        raise ValueError("need at least 2 repetitions")
    if seeds is None:
        seeds = [derive_seed(seed, k) for k in range(repetitions)]
    elif len(seeds) != repetitions:
        raise ValueError("len(seeds) must equal repetitions")
    values = []
    for s in seeds:
        out = estimator(generator(s))
        if isinstance(out, IdEstimate):
            out = out.d_hat
        values.append(np.asarray(out, dtype=float))
    values = np.array(values)
    mean = values.mean(axis=0)
    half = float(special.ndtri(0.5 + level / 2)) * values.std(axis=0, ddof=1) / math.sqrt(repetitions)
    return RepeatedSummary(mean, mean - half, mean + half, level, values)


def pivot_population(j, n2_max, d):
    """Process size so the ``n2_max``-neighborhoods of the ``j`` innermost points stay inside."""
    return int(math.ceil((j ** (1.0 / d) + 3.0 * n2_max ** (1.0 / d)) ** d))


@dataclass(frozen=True)
class PivotBiasRow:
    j: int
    n1: int
    n2: int
    mean: float
    ci_low: float
    ci_high: float


def pivot_table(j, K, d=2, rho=1.0, seed=0, center_fraction=1.0):
    """Neighbor table for ``j`` query points of a pivot process, free of edge effects.

    The queries are drawn from the ``ceil(j / center_fraction)`` points nearest
    the pivot (all of them when ``center_fraction = 1``); neighbors are
    searched in a process large enough that no query's ``K``-neighborhood
    reaches its outer edge. Sparse queries (small ``center_fraction``) share
    fewer neighbors, which is what the independence assumption asks for.
    """
    if not 0 < center_fraction <= 1:
        raise ValueError("center_fraction must lie in (0, 1]")
    inner = int(math.ceil(j / center_fraction))
    proc = pivot_process(pivot_population(inner, K, d), d, rho, seed)
    cloud = proc.with_pivot()
    if center_fraction == 1:
        queries = np.arange(1, j + 1)
    else:
        rng = np.random.default_rng(derive_seed(seed, inner))
        queries = np.sort(rng.choice(np.arange(1, inner + 1), size=j, replace=False))
    return knn_table(cloud, K, queries=queries)


def pivot_gride_estimates(j, orders, d=2, rho=1.0, seed=0, protocol="centers"):
    """Gride estimates at each ``(n1, n2)`` on one pivot-process realization.

    ``protocol="centers"``: the ``j`` points nearest the pivot are the query
    points and their neighbors come from the surrounding process (see
    :func:`pivot_table`). ``protocol="standalone"``: the pivot and its
    ``j - 1`` nearest points form the whole cloud, boundary included.
    """
    n2_max = max(n2 for _, n2 in orders)
    if protocol == "centers":
        table = pivot_table(j, n2_max, d, rho, seed)
    elif protocol == "standalone":
        cloud = pivot_process(j - 1, d, rho, seed).with_pivot()
        table = knn_table(cloud, min(n2_max, cloud.n - 1))
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return np.array([
        gride_mle(generic_ratios(table, n1, n2), d_max=10.0 * d).d_hat for n1, n2 in orders
    ])


def pivot_bias_study(
    j_values, n1_values=None, repetitions=1000, d=2, rho=1.0, ratio=2, seed=0, level=0.95,
    protocol="centers",
):
    """Average Gride estimate versus neighbor order on pivot-process data.

    For each ``j`` only orders with ``ratio * n1 <= j - 1`` are used.
    Returns a list of :class:`PivotBiasRow`.
    """
    rows = []
    n1_values = DEFAULT_N1 if n1_values is None else n1_values
    for j in j_values:
        orders = [(n1, n2) for n1, n2 in sweep_orders(ratio, n1_values) if n2 <= j - 1]
        summary = repeated_estimate_summary(
            lambda s: s,
            lambda s: pivot_gride_estimates(j, orders, d, rho, s, protocol),
            repetitions, seed=derive_seed(seed, j), level=level,
        )
        for k, (n1, n2) in enumerate(orders):
            rows.append(PivotBiasRow(
                j, n1, n2, float(summary.mean[k]), float(summary.ci_low[k]), float(summary.ci_high[k])
            ))
    return rows
