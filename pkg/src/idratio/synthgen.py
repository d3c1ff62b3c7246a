"""Synthetic datasets with known intrinsic dimension, and exact-law ratio fixtures.

Every generator takes a ``seed`` passed to :func:`numpy.random.default_rng`
and draws its variates in the order stated in its docstring, so output is
bit-reproducible per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import pareto_sample, unit_ball_volume
from .geometry import ConsecutiveRatios, PointCloud, RatioSample

SPIRAL_NOISE_SD = 0.01


def spiral3d(n, noise_sd=SPIRAL_NOISE_SD, seed=0) -> PointCloud:
    """Noisy 3-D spiral on the paraboloid ``z = x^2 + y^2``.

    ``u ~ Uniform[1/(4 pi), 1]``, ``(x, y) = (u cos u, u sin u)``. The only
    random degree of freedom is ``u``, so the noiseless curve has id 1.
    Draws: ``n`` uniforms, then an ``(n, 3)`` block of standard normals.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    u = rng.uniform(1.0 / (4.0 * np.pi), 1.0, size=n)
    x = u * np.cos(u)
    y = u * np.sin(u)
    pts = np.column_stack([x, y, x * x + y * y])
    noise = rng.standard_normal((n, 3))
    if noise_sd > 0:
        pts = pts + noise_sd * noise
    return PointCloud(pts)


def _directions(rng, N, d):
    if d == 1:
        return np.where(rng.random(N) < 0.5, -1.0, 1.0)[:, None]
    if d == 2:
        angle = rng.uniform(0.0, 2.0 * np.pi, size=N)
        return np.column_stack([np.cos(angle), np.sin(angle)])
    g = rng.standard_normal((N, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class PivotProcess:
    """Points of a homogeneous process sorted by distance from a pivot at the origin."""

    cloud: PointCloud
    radii: np.ndarray
    d: int
    rho: float
    pivot: np.ndarray = field(default=None)

    def with_pivot(self) -> PointCloud:
        """The cloud with the pivot prepended as row 0."""
        return PointCloud(np.vstack([np.zeros((1, self.d)), self.cloud.points]))


def pivot_process(N, d, rho=1.0, seed=0) -> PivotProcess:
    """Homogeneous Poisson points around a pivot, built shell by shell.

    Shell volumes ``v_j ~ Exponential(rho)``; the ``j``-th point sits at radius
    ``((v_1 + ... + v_j) / omega_d)^(1/d)`` in a uniform random direction
    (uniform angle for ``d = 2``, normalized Gaussian vector for ``d > 2``).
    Draws: ``N`` exponentials, then the directions.
    """
    if N < 2 or d < 1:
        raise ValueError("need N >= 2 and d >= 1")
    if not rho > 0:
        raise ValueError("rho must be positive")
    d = int(d)
    rng = np.random.default_rng(seed)
    v = rng.exponential(1.0 / rho, size=N)
    radii = (np.cumsum(v) / unit_ball_volume(d)) ** (1.0 / d)
    pts = radii[:, None] * _directions(rng, N, d)
    radii.setflags(write=False)
    return PivotProcess(PointCloud(pts), radii, d, float(rho), np.zeros(d))


def gaussian_orthonoise(n, signal_dim=2, noise_dim=1, sigma2=1e-4, seed=0) -> PointCloud:
    """Standard Gaussian signal plus orthogonal Gaussian noise of variance ``sigma2``.

    Draws one ``(n, signal_dim + noise_dim)`` block of standard normals; the
    last ``noise_dim`` columns are scaled by ``sqrt(sigma2)``.
    """
    if n < 2 or signal_dim < 1 or noise_dim < 0:
        raise ValueError("need n >= 2, signal_dim >= 1, noise_dim >= 0")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, signal_dim + noise_dim))
    pts[:, signal_dim:] *= np.sqrt(sigma2)
    return PointCloud(pts)


def uniform_hypercube(n, d, seed=0) -> PointCloud:
    """``n`` uniform points in ``[0, 1)^d``."""
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    return PointCloud(np.random.default_rng(seed).random((n, d)))


def pareto_ratio_fixture(n, d, seed=0) -> RatioSample:
    """``n`` i.i.d. Pareto(1, d) ratios, as TWO-NN would see them (unit mean scale)."""
    return RatioSample(pareto_sample(d, n, seed), 1, 2, 1.0)


def consecutive_fixture(n, L, d, seed=0) -> ConsecutiveRatios:
    """Independent columns with column ``l - 2`` drawn from Pareto(1, (l - 1) d).

    Draws one ``(n, L - 1)`` block of uniforms in C order.
    """
    if L < 2:
        raise ValueError("need L >= 2")
    u = np.random.default_rng(seed).random((n, L - 1))
    shapes = d * np.arange(1, L)
    return ConsecutiveRatios(np.exp(-np.log1p(-u) / shapes))


GENERATORS = {
    "spiral": spiral3d,
    "pivot_process": pivot_process,
    "gaussian_orthonoise": gaussian_orthonoise,
    "uniform_hypercube": uniform_hypercube,
    "pareto_ratios": pareto_ratio_fixture,
}


@dataclass(frozen=True)
class GeneratorSpec:
    """A generator name plus keyword parameters; call with a seed to build the data."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GENERATORS:
            raise ValueError(f"unknown generator {self.kind!r}; choose from {sorted(GENERATORS)}")
        for key in ("n", "N"):
            if key in self.params and self.params[key] < 2:
                raise ValueError(f"{key} must be >= 2")
        for key in ("sigma2", "noise_sd"):
            if key in self.params and self.params[key] < 0:
                raise ValueError(f"{key} must be >= 0")
        if "rho" in self.params and not self.params["rho"] > 0:
            raise ValueError("rho must be positive")

    def __call__(self, seed):
        return GENERATORS[self.kind](**self.params, seed=seed)
