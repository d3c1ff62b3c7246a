"""Intrinsic-dimension estimators built on neighbor distance ratios.

* TWO-NN: ``r_2 / r_1`` ratios, fitted by least squares, maximum likelihood
  (with an exact Inverse-Gamma interval) or a conjugate Gamma posterior.
* Cride: consecutive ratios ``r_l / r_{l-1}`` for ``l = 2..L`` pooled into one
  closed-form likelihood.
* Gride: a single ratio ``r_{n2} / r_{n1}`` per point, maximized numerically,
  with Fisher, parametric-bootstrap or grid-posterior uncertainty.

The closed-form MLEs use the ``(N - 1) / S`` form (unbiased for ``d``); the
plain likelihood maximizer is ``N / S``, which is what Gride returns at
``(n1, n2) = (1, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from . import _optimize
from .distributions import (
    GrideParams,
    PosteriorParams,
    gamma_posterior,
    gride_exact_sample,
    inverse_gamma_quantile,
    log_expm1,
)
from .errors import DegenerateRatioError, EstimationFailedError
from .geometry import ConsecutiveRatios, RatioSample

RECORD_FIELDS = (
    "method", "d_hat", "interval_low", "interval_high", "level", "n_eff",
    "scale", "n1", "n2", "L", "trim_fraction", "seed",
)

DEFAULT_PRIOR = (1.0, 1.0)
DEFAULT_D_MAX = 1000.0
# Gride log-likelihood is maximized over theta = log d.
_THETA_TOL = 1e-8
_D_MIN = 1e-8


@dataclass(frozen=True)
class IdEstimate:
    """Point estimate of the intrinsic dimension with an interval of given ``level``."""

    d_hat: float
    interval_low: float
    interval_high: float
    level: float
    method: str
    n_eff: int
    scale: float = 0.0
    std_error: float | None = None
    n1: int | None = None
    n2: int | None = None
    L: int | None = None
    trim_fraction: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.d_hat) and self.d_hat > 0):
            raise ValueError(f"d_hat must be finite and positive, got {self.d_hat}")
        if not 0 < self.level < 1:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if not self.interval_low <= self.d_hat <= self.interval_high:
            raise ValueError(
                f"interval [{self.interval_low}, {self.interval_high}] does not contain {self.d_hat}"
            )

    @property
    def width(self) -> float:
        return self.interval_high - self.interval_low

    def to_record(self) -> dict:
        """Flat key-value record with a fixed field order (see ``RECORD_FIELDS``)."""
        out = {}
        for k in RECORD_FIELDS:
            v = getattr(self, k)
            if isinstance(v, (np.floating, np.integer)):
                v = v.item()
            out[k] = v
        return out


@dataclass(frozen=True)
class BayesResult:
    """Gamma posterior on ``d`` with an equal-tailed credible interval."""

    posterior: PosteriorParams
    credible_low: float
    credible_high: float
    level: float
    prior: PosteriorParams | None = None

    @property
    def mean(self) -> float:
        return self.posterior.mean

    @property
    def width(self) -> float:
        return self.credible_high - self.credible_low


@dataclass(frozen=True)
class GridPosterior:
    """Posterior on ``d`` tabulated on a grid (densities normalized by the trapezoid rule)."""

    grid: np.ndarray
    density: np.ndarray
    credible_low: float
    credible_high: float
    level: float
    mean: float
    mode: float
    prior: PosteriorParams = field(default=None)

    @property
    def width(self) -> float:
        return self.credible_high - self.credible_low

    def cdf(self):
        return _cumtrapz(self.density, self.grid)


@dataclass(frozen=True)
class ErlangDiagnostic:
    """Per-point ``sum_l (l - 1) log mu_{i,l}`` and its KS test against Gamma(L - 1, d)."""

    statistics: np.ndarray
    ks_statistic: float
    pvalue: float
    d: float
    L: int


def _as_ratios(mu, n1=1, n2=2):
    if isinstance(mu, RatioSample):
        return mu
    return RatioSample(np.asarray(mu, dtype=float), n1, n2)


def _check_level(level):
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return 1.0 - level


def _require_twonn(mu):
    if (mu.n1, mu.n2) != (1, 2):
        raise ValueError(f"TWO-NN needs r2/r1 ratios, got orders ({mu.n1}, {mu.n2})")


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def _ig_interval(d_hat, n_eff, alpha):
    # d_hat / d ~ InverseGamma(n_eff, n_eff - 1)
    q_hi = inverse_gamma_quantile(1 - alpha / 2, n_eff, n_eff - 1)
    q_lo = inverse_gamma_quantile(alpha / 2, n_eff, n_eff - 1)
    return d_hat / q_hi, d_hat / q_lo


def _bayes(prior_shape, prior_rate, n_eff, sum_stat, level):
    alpha = _check_level(level)
    post = gamma_posterior(prior_shape, prior_rate, n_eff, sum_stat)
    lo, hi = post.quantile(np.array([alpha / 2, 1 - alpha / 2]))
    return BayesResult(post, float(lo), float(hi), level, PosteriorParams(prior_shape, prior_rate))


# --------------------------------------------------------------------------
# TWO-NN
# --------------------------------------------------------------------------


def twonn_ls(mu, trim_fraction=0.1, level=0.95) -> IdEstimate:
    """Least-squares TWO-NN: slope through the origin of ``-log(1 - F)`` on ``log mu``.

    The empirical CDF uses the ``i / (n + 1)`` plotting position and the
    largest ``trim_fraction`` of the ratios are discarded before fitting.
    The interval is a normal approximation from the slope's standard error.
    Sorted ratios are strongly correlated, so this interval is far narrower
    than the sampling spread of the slope; use :func:`twonn_mle` for inference.
    """
    mu = _as_ratios(mu)
    _require_twonn(mu)
    if not 0 <= trim_fraction < 1:
        raise ValueError(f"trim_fraction must lie in [0, 1), got {trim_fraction}")
    alpha = _check_level(level)
    n = len(mu)
    keep = n - int(trim_fraction * n)
    if keep < 10:
        raise ValueError(f"only {keep} ratios survive trimming; need at least 10")
    x = np.sort(mu.log_values)[:keep]
    F = np.arange(1, keep + 1) / (n + 1.0)
    y = -np.log1p(-F)
    sxx = float(x @ x)
    slope = float(x @ y) / sxx
    resid = y - slope * x
    se = math.sqrt(float(resid @ resid) / (keep - 1) / sxx)
    z = float(special.ndtri(1 - alpha / 2))
    method = "twonn-ls"
    if np.ptp(x) == 0:
        method += " (rank-deficient)"
    return IdEstimate(
        slope, slope - z * se, slope + z * se, level, method, keep,
        scale=mu.mean_scale, std_error=se, n1=1, n2=2, trim_fraction=trim_fraction,
    )


def twonn_mle(mu, level=0.95) -> IdEstimate:
    """``(n - 1) / sum(log mu)`` with the exact Inverse-Gamma interval."""
    mu = _as_ratios(mu)
    _require_twonn(mu)
    alpha = _check_level(level)
    n = len(mu)
    if n < 2:
        raise ValueError("TWO-NN MLE needs at least 2 ratios")
    s = float(mu.log_values.sum())
    if s <= 0:
        raise DegenerateRatioError("sum of log-ratios is zero")
    d_hat = (n - 1) / s
    lo, hi = _ig_interval(d_hat, n, alpha)
    return IdEstimate(
        d_hat, lo, hi, level, "twonn-mle", n,
        scale=mu.mean_scale, std_error=d_hat / math.sqrt(n - 2) if n > 2 else None, n1=1, n2=2,
    )


def twonn_bayes(mu, prior_shape=1.0, prior_rate=1.0, level=0.95) -> BayesResult:
    """Conjugate Gamma(a, b) prior on ``d``; posterior Gamma(a + n, b + sum log mu)."""
    mu = _as_ratios(mu)
    return _bayes(prior_shape, prior_rate, len(mu), float(mu.log_values.sum()), level)


# --------------------------------------------------------------------------
# Cride
# --------------------------------------------------------------------------


def _cride_stat(ratios: ConsecutiveRatios):
    weights = np.arange(1, ratios.L)  # (l - 1) for l = 2..L
    return float((np.log(ratios.values) * weights).sum())


def cride_mle(ratios: ConsecutiveRatios, level=0.95) -> IdEstimate:
    """Pooled consecutive-ratio MLE ``(n (L - 1) - 1) / sum_i sum_l (l - 1) log mu_{i,l}``.

    ``d_hat / d ~ InverseGamma(n(L-1), n(L-1) - 1)`` gives the interval, and
    the model variance is ``d^2 / (n (L - 1) - 2)``.
    """
    alpha = _check_level(level)
    n_eff = ratios.n * (ratios.L - 1)
    if n_eff < 2:
        raise ValueError("Cride needs n (L - 1) >= 2")
    s = _cride_stat(ratios)
    if s <= 0:
        raise DegenerateRatioError("sum of weighted log-ratios is zero")
    d_hat = (n_eff - 1) / s
    lo, hi = _ig_interval(d_hat, n_eff, alpha)
    se = d_hat / math.sqrt(n_eff - 2) if n_eff > 2 else None
    return IdEstimate(d_hat, lo, hi, level, "cride-mle", n_eff, std_error=se, L=ratios.L)


def cride_bayes(ratios: ConsecutiveRatios, prior_shape=1.0, prior_rate=1.0, level=0.95) -> BayesResult:
    n_eff = ratios.n * (ratios.L - 1)
    return _bayes(prior_shape, prior_rate, n_eff, _cride_stat(ratios), level)


def erlang_diagnostic(ratios: ConsecutiveRatios, d) -> ErlangDiagnostic:
    """Goodness of fit of the per-point Cride statistics to Gamma(L - 1, rate d)."""
    if not d > 0:
        raise ValueError("d must be positive")
    weights = np.arange(1, ratios.L)
    g = (np.log(ratios.values) * weights).sum(axis=1)
    shape = ratios.L - 1
    res = stats.kstest(g, lambda t: special.gammainc(shape, d * np.maximum(t, 0)))
    return ErlangDiagnostic(g, float(res.statistic), float(res.pvalue), float(d), ratios.L)


# --------------------------------------------------------------------------
# Gride
# --------------------------------------------------------------------------


class GrideLikelihood:
    """Log-likelihood of ``d`` for i.i.d. generic ratios, with its first derivative."""

    def __init__(self, mu: RatioSample):
        self.n1, self.n2 = mu.n1, mu.n2
        self.y = mu.log_values
        self.n = self.y.size
        self.sum_y = float(self.y.sum())
        self.log_beta = float(special.betaln(self.n2 - self.n1, self.n1))

    def __call__(self, d):
        out = self.n * (math.log(d) - self.log_beta) - ((self.n2 - 1) * d + 1) * self.sum_y
        if self.n2 - self.n1 > 1:
            out += (self.n2 - self.n1 - 1) * float(log_expm1(d * self.y).sum())
        return out

    def derivative(self, d):
        out = self.n / d - (self.n2 - 1) * self.sum_y
        if self.n2 - self.n1 > 1:
            # d/dd log(e^{dy} - 1) = y / (1 - e^{-dy})
            out += (self.n2 - self.n1 - 1) * float((self.y / -np.expm1(-d * self.y)).sum())
        return out

    def second_difference(self, d, h):
        return (self(d + h) - 2.0 * self(d) + self(d - h)) / (h * h)

    def initial_guess(self):
        """Moment match: ``E[log mu] = (1/d) sum_{k=n1}^{n2-1} 1/k``."""
        harmonic = float(np.sum(1.0 / np.arange(self.n1, self.n2)))
        return harmonic * self.n / self.sum_y


def _maximize(objective, slope_of_theta, d0, d_max):
    lo, hi = _optimize.bracket_by_slope(
        slope_of_theta, math.log(d0), math.log(_D_MIN), math.log(d_max)
    )
    a, b = _optimize.golden_section_max(
        lambda t: objective(math.exp(t)), lo, hi, tol=_THETA_TOL, return_bracket=True
    )
    # Near the peak the objective changes by less than its rounding error, so the
    # last golden steps are noise; the root of the score is resolved to full precision.
    for x0, x1 in ((max(lo, a - 1e-6), min(hi, b + 1e-6)), (lo, hi)):
        if slope_of_theta(x0) > 0 > slope_of_theta(x1):
            return math.exp(optimize.brentq(slope_of_theta, x0, x1, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return math.exp(0.5 * (a + b))


def _gride_point(lik: GrideLikelihood, d0=None, d_max=DEFAULT_D_MAX):
    if lik.n == 0:
        raise ValueError("empty ratio sample")
    if float(lik.y.max()) < 1e-12:
        raise DegenerateRatioError("all ratios are numerically equal to 1")
    d0 = lik.initial_guess() if d0 is None else d0
    d0 = min(max(d0, _D_MIN), d_max)
    try:
        return _maximize(lik, lambda t: lik.derivative(math.exp(t)), d0, d_max)
    except EstimationFailedError as exc:
        exc.diagnostics.update(n1=lik.n1, n2=lik.n2, n=lik.n, d_max=d_max)
        raise EstimationFailedError(
            f"Gride likelihood maximum not bracketed in (0, {d_max}]", exc.diagnostics
        ) from None


def gride_bootstrap(mu: RatioSample, d_hat, reps, seed, d_max=DEFAULT_D_MAX):
    """Parametric bootstrap: re-estimate on ``reps`` exact samples of size ``n`` drawn at ``d_hat``.

    Replicate ``b`` uses the ``b``-th child of ``numpy.random.SeedSequence(seed)``,
    so results do not depend on evaluation order.
    """
    reps = int(reps)
    if reps < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    params = GrideParams(d_hat, mu.n1, mu.n2)
    method = "telescoping" if params.gap <= 16 else "beta"
    children = np.random.SeedSequence(seed).spawn(reps)
    out = np.empty(reps)
    for b, child in enumerate(children):
        sample = gride_exact_sample(params, len(mu), child, method=method)
        out[b] = _gride_point(GrideLikelihood(RatioSample(sample, mu.n1, mu.n2)), d_hat, d_max)
    return out


def gride_mle(
    mu: RatioSample,
    level=0.95,
    uncertainty="fisher",
    bootstrap_reps=200,
    seed=0,
    d_max=None,
    d0=None,
) -> IdEstimate:
    """Numerical MLE of ``d`` from generic ratios ``r_{n2} / r_{n1}``.

    The likelihood is maximized over ``log d``: the bracket is grown
    geometrically from ``d0`` until the score changes sign, narrowed by
    golden section to 1e-8 in ``log d``, and the root of the analytic score
    inside that bracket is then found by Brent's method.

    Args:
        mu: ratio sample (orders taken from it).
        level: interval level.
        uncertainty: ``"fisher"`` (normal interval from the observed
            information, centered second difference with step ``1e-4 d_hat``)
            or ``"bootstrap"`` (percentile interval of a parametric bootstrap,
            extended to contain ``d_hat`` when it falls outside).
        bootstrap_reps: bootstrap replicates.
        seed: bootstrap seed.
        d_max: upper limit of the search (callers with a cloud pass ``10 * D``).
        d0: starting point; defaults to a moment-matching guess.

    Raises:
        EstimationFailedError: no maximum inside ``(0, d_max]``.
        DegenerateRatioError: every ratio is numerically 1.
    """
    mu = _as_ratios(mu)
    alpha = _check_level(level)
    d_max = DEFAULT_D_MAX if d_max is None else float(d_max)
    lik = GrideLikelihood(mu)
    d_hat = _gride_point(lik, d0, d_max)
    common = dict(scale=mu.mean_scale, n1=mu.n1, n2=mu.n2)
    if uncertainty == "fisher":
        h = 1e-4 * d_hat
        info = -lik.second_difference(d_hat, h)
        if not info > 0:
            raise EstimationFailedError("observed information is not positive", {"d_hat": d_hat})
        se = 1.0 / math.sqrt(info)
        z = float(special.ndtri(1 - alpha / 2))
        return IdEstimate(
            d_hat, max(d_hat - z * se, 0.0), d_hat + z * se, level, "gride-mle-fisher",
            len(mu), std_error=se, **common,
        )
    if uncertainty == "bootstrap":
        boot = gride_bootstrap(mu, d_hat, bootstrap_reps, seed, d_max)
        lo, hi = np.quantile(boot, [alpha / 2, 1 - alpha / 2])
        return IdEstimate(
            d_hat, float(min(lo, d_hat)), float(max(hi, d_hat)), level, "gride-mle-bootstrap",
            len(mu), std_error=float(boot.std(ddof=1)), seed=seed, **common,
        )
    raise ValueError(f"uncertainty must be 'fisher' or 'bootstrap', got {uncertainty!r}")


def gride_posterior(
    mu: RatioSample, prior_shape=1.0, prior_rate=1.0, level=0.95, grid_size=2000, d_max=None
) -> GridPosterior:
    """Posterior of ``d`` under a Gamma prior and the Gride likelihood, on a grid.

    The grid is centered on the posterior mode and widened until the log
    posterior has dropped 40 nats below its maximum on both sides.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    mu = _as_ratios(mu)
    alpha = _check_level(level)
    prior = PosteriorParams(prior_shape, prior_rate)
    d_max = DEFAULT_D_MAX if d_max is None else float(d_max)
    lik = GrideLikelihood(mu)

    def logpost(d):
        return lik(d) + (prior_shape - 1.0) * math.log(d) - prior_rate * d

    def slope(theta):
        d = math.exp(theta)
        return d * (lik.derivative(d) + (prior_shape - 1.0) / d - prior_rate)

    d_mle = _gride_point(lik, None, d_max)
    mode = _maximize(logpost, slope, d_mle, d_max)
    peak = logpost(mode)
    h = 1e-4 * mode
    curv = -(logpost(mode + h) - 2 * peak + logpost(mode - h)) / (h * h)
    sd = 1.0 / math.sqrt(curv) if curv > 0 else 0.1 * mode

    drop = 40.0
    lo = mode
    step = sd
    while lo > 0:
        cand = lo - step
        if cand <= 0:
            lo = mode * 1e-9
            break
        lo = cand
        if logpost(lo) < peak - drop:
            break
        step *= 1.5
    hi = mode
    step = sd
    while True:
        hi += step
        if logpost(hi) < peak - drop or hi >= d_max:
            break
        step *= 1.5

    grid = np.linspace(lo, hi, int(grid_size))
    logp = np.array([logpost(g) for g in grid])
    dens = np.exp(logp - logp.max())
    dens /= np.trapezoid(dens, grid)
    cdf = _cumtrapz(dens, grid)
    cdf /= cdf[-1]
    c_lo, c_hi = np.interp([alpha / 2, 1 - alpha / 2], cdf, grid)
    mean = float(np.trapezoid(grid * dens, grid))
    return GridPosterior(grid, dens, float(c_lo), float(c_hi), level, mean, mode, prior)
