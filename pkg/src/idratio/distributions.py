"""Probability kernels for nearest-neighbor distance ratios.

All densities are evaluated in log space through log-Gamma/log-Beta so that
neighbor orders in the hundreds do not overflow. Samplers take an explicit
``seed`` which is handed to :func:`numpy.random.default_rng` (PCG64); the
stream layout of each sampler is described in its docstring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError, MomentUndefinedError

# Above this, expm1(t) overflows long before log(expm1(t)) does.
_LOG_EXPM1_SWITCH = 30.0
# Bound on standard-exponential draws held in memory by the telescoping sampler.
_SAMPLE_BLOCK = 1 << 22


def _positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise ValueError(f"{name} must be positive, got {value!r}")


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def log_expm1(t):
    """``log(exp(t) - 1)`` for ``t > 0`` without cancellation or overflow."""
    t = np.asarray(t, dtype=float)
    small = t <= _LOG_EXPM1_SWITCH
    with np.errstate(over="ignore", divide="ignore"):
        out = np.where(
            small,
            np.log(np.expm1(np.where(small, t, 1.0))),
            t + np.log1p(-np.exp(-np.where(small, 1.0, t))),
        )
    return out


@dataclass(frozen=True)
class GrideParams:
    """Parameters of the generic-ratio law: dimension ``d`` and orders ``n1 < n2``."""

    d: float
    n1: int = 1
    n2: int = 2

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"d must be positive, got {self.d}")
        if int(self.n1) < 1 or int(self.n2) <= int(self.n1):
            raise ValueError(f"need 1 <= n1 < n2, got n1={self.n1}, n2={self.n2}")
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))

    @property
    def gap(self) -> int:
        return self.n2 - self.n1


@dataclass(frozen=True)
class PosteriorParams:
    """Gamma law with ``shape`` and ``rate`` (both > 0)."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"shape and rate must be positive, got {self.shape}, {self.rate}")
        object.__setattr__(self, "shape", float(self.shape))
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2

    def quantile(self, p):
        return gamma_quantile(p, self.shape, self.rate)

    def logpdf(self, x):
        return gamma_logpdf(x, self.shape, self.rate)


# --------------------------------------------------------------------------
# Pareto(1, shape)
# --------------------------------------------------------------------------


def _check_pareto_support(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 1) or np.any(np.isnan(x)):
        raise DomainError("Pareto(1, a) is supported on x >= 1")
    return x


def pareto_logpdf(x, shape):
    """``log(shape) - (shape + 1) log x`` on ``x >= 1``."""
    _positive("shape", shape)
    xa = _check_pareto_support(x)
    return _scalar_or_array(x, np.log(shape) - (shape + 1.0) * np.log(xa))


def pareto_cdf(x, shape):
    _positive("shape", shape)
    xa = _check_pareto_support(x)
    return _scalar_or_array(x, -np.expm1(-shape * np.log(xa)))


def pareto_sample(shape, count, seed):
    """Inverse-CDF draws ``U^(-1/shape)``; one uniform per draw, in order."""
    _positive("shape", shape)
    u = np.random.default_rng(seed).random(int(count))
    # 1 - u lies in (0, 1], so the result is >= 1 and finite.
    return np.exp(-np.log1p(-u) / shape)


# --------------------------------------------------------------------------
# Gamma / Inverse-Gamma
# --------------------------------------------------------------------------


def _check_probability(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")
    return p


def gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = shape * np.log(rate) - special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x
    return np.where(x > 0, out, -np.inf)


def gamma_quantile(p, shape, rate):
    """Quantile of Gamma(shape, rate) by inversion of the regularized incomplete Gamma."""
    p = _check_probability(p)
    _positive("shape", shape)
    _positive("rate", rate)
    return special.gammaincinv(shape, p) / rate


def inverse_gamma_cdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, special.gammaincc(shape, rate / np.where(x > 0, x, 1.0)), 0.0)


def inverse_gamma_quantile(p, shape, rate):
    """Quantile of InverseGamma(shape, rate).

    If ``X ~ IG(shape, rate)`` then ``rate / X ~ Gamma(shape, 1)``, so the
    ``p`` quantile of ``X`` is ``rate`` over the upper-``p`` Gamma quantile.
    """
    p = _check_probability(p)
    _positive("shape", shape)
    _positive("rate", rate)
    out = rate / special.gammainccinv(shape, p)
    return _scalar_or_array(p, out)


def gamma_posterior(prior_shape, prior_rate, n_eff, sum_stat) -> PosteriorParams:
    """Conjugate update of a Gamma prior on ``d`` with exponential-family data.

    The posterior is ``Gamma(prior_shape + n_eff, prior_rate + sum_stat)``.
    """
    if not (prior_shape > 0 and prior_rate > 0):
        raise ValueError("prior hyperparameters must be positive")
    if n_eff < 0 or sum_stat < 0:
        raise ValueError("n_eff and sum_stat must be nonnegative")
    return PosteriorParams(prior_shape + n_eff, prior_rate + sum_stat)


# --------------------------------------------------------------------------
# Posterior predictive of a ratio (log-ratio is Lomax)
# --------------------------------------------------------------------------


def _check_above_one(x, what):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 1)):
        raise DomainError(f"{what} must be > 1")
    return x


def lomax_logpdf(mu_tilde, params: PosteriorParams):
    """Log predictive density of a new ratio given a Gamma(shape, rate) posterior on ``d``."""
    x = _check_above_one(mu_tilde, "mu_tilde")
    a, b = params.shape, params.rate
    logx = np.log(x)
    out = np.log(a / b) - logx - (a + 1.0) * np.log1p(logx / b)
    return _scalar_or_array(mu_tilde, out)


def lomax_cdf(mu_tilde, params: PosteriorParams):
    x = np.asarray(mu_tilde, dtype=float)
    a, b = params.shape, params.rate
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(-a * np.log1p(np.log(np.maximum(x, 1.0)) / b))
    return _scalar_or_array(mu_tilde, np.where(x > 1, out, 0.0))


def lomax_predictive_sample(params: PosteriorParams, count, seed):
    """Predictive ratios: ``log`` of each is drawn from Lomax(shape, rate) by inverse CDF.

    One uniform per draw, in order.
    """
    a, b = params.shape, params.rate
    u = np.random.default_rng(seed).random(int(count))
    log_mu = b * np.expm1(-np.log1p(-u) / a)
    return np.exp(log_mu)


# --------------------------------------------------------------------------
# Generic ratio r_{n2} / r_{n1}
# --------------------------------------------------------------------------


def gride_logpdf(mu_dot, params: GrideParams):
    """Log density of ``r_{n2} / r_{n1}`` under a homogeneous process of dimension ``d``.

    ``log d + (n2-n1-1) log(mu^d - 1) - ((n2-1) d + 1) log mu - log B(n2-n1, n1)``
    """
    x = _check_above_one(mu_dot, "mu_dot")
    d, n1, n2 = params.d, params.n1, params.n2
    logx = np.log(x)
    out = np.log(d) - ((n2 - 1) * d + 1.0) * logx - special.betaln(n2 - n1, n1)
    if n2 - n1 > 1:
        out = out + (n2 - n1 - 1) * log_expm1(d * logx)
    return _scalar_or_array(mu_dot, out)


def gride_cdf(mu_dot, params: GrideParams):
    """CDF through the Beta-prime identity ``mu^d - 1 ~ BetaPrime(n2 - n1, n1)``."""
    x = np.asarray(mu_dot, dtype=float)
    d, n1, n2 = params.d, params.n1, params.n2
    with np.errstate(divide="ignore"):
        # z / (1 + z) with z = mu^d - 1 equals 1 - mu^-d.
        w = -np.expm1(-d * np.log(np.maximum(x, 1.0)))
    return _scalar_or_array(mu_dot, special.betainc(n2 - n1, n1, w))


def gride_moment(k, params: GrideParams):
    """``E[mu^k] = B(n2 - n1, n1 - k/d) / B(n2 - n1, n1)``, defined for ``k < d * n1``.

    Near the bound the Beta ratio blows up; within ~1e-3 of ``k = d n1`` the
    value is numerically unreliable even though it is returned.
    """
    d, n1, n2 = params.d, params.n1, params.n2
    if k < 1:
        raise ValueError(f"moment order must be >= 1, got {k}")
    if not k < d * n1:
        raise MomentUndefinedError(f"E[mu^{k}] is infinite for d*n1 = {d * n1} <= {k}")
    return float(np.exp(special.betaln(n2 - n1, n1 - k / d) - special.betaln(n2 - n1, n1)))


def gride_mean_var(params: GrideParams):
    """Mean and variance of the generic ratio (variance needs ``d * n1 > 2``)."""
    m1 = gride_moment(1, params)
    m2 = gride_moment(2, params)
    return m1, m2 - m1 * m1


def gride_exact_sample(params: GrideParams, count, seed, method="telescoping"):
    """Exact draws of ``r_{n2} / r_{n1}``.

    ``"telescoping"``: ``exp`` of a sum of independent exponentials with rates
    ``n1 d, (n1 + 1) d, ..., (n2 - 1) d``; the generator emits a C-ordered
    ``(count, n2 - n1)`` array of standard exponentials, in row blocks.

    ``"beta"``: ``W^(-1/d)`` with ``W ~ Beta(n1, n2 - n1)``, one Beta draw per
    sample. Cheaper for large ``n2 - n1``; same law.
    """
    count = int(count)
    d, n1, n2 = params.d, params.n1, params.n2
    rng = np.random.default_rng(seed)
    if method == "beta":
        w = rng.beta(n1, n2 - n1, size=count)
        return np.exp(-np.log(w) / d)
    if method != "telescoping":
        raise ValueError(f"unknown sampling method {method!r}")
    rates = d * np.arange(n1, n2, dtype=float)
    m = rates.size
    out = np.empty(count)
    block = max(1, _SAMPLE_BLOCK // m)
    for s in range(0, count, block):
        e = rng.standard_exponential((min(block, count - s), m))
        out[s : s + block] = (e / rates).sum(axis=1)
    return np.exp(out)


def hypoexp_logpdf_logratio(y, params: GrideParams):
    """Log density of ``Y = log(r_{n2} / r_{n1})`` as an alternating hypoexponential sum.

    ``f(y) = d (n2-1)!/(n1-1)! sum_j exp(-(n1+j-1) d y) / prod_{l != j} (l - j)``

    This form is independent of :func:`gride_logpdf` and meant as a check on
    it. The alternating sum cancels badly when ``n2 - n1`` is large or ``d*y``
    is small; a non-positive sum raises ``FloatingPointError``.
    """
    ya = np.asarray(y, dtype=float)
    if np.any(~(ya > 0)):
        raise DomainError("y must be > 0")
    d, n1, n2 = params.d, params.n1, params.n2
    m = n2 - n1
    # prod_{l != j} (l - j) = (-1)^(j-1) (j-1)! (m-j)!, so the sum is
    # C * sum_j (-1)^(j-1) binom(m-1, j-1) exp(-(n1 + j - 1) d y) with C outside it.
    log_c = np.log(d) + special.gammaln(n2) - special.gammaln(n1) - special.gammaln(m)
    binom = np.array([math.comb(m - 1, k) * (-1) ** k for k in range(m)], dtype=np.longdouble)
    t = np.longdouble(d) * np.atleast_1d(ya).astype(np.longdouble)[:, None]
    total = (binom[None, :] * np.exp(-np.arange(m)[None, :] * t)).sum(axis=1)
    if np.any(total <= 0):
        raise FloatingPointError("hypoexponential sum lost all precision (cancellation)")
    val = (np.log(total) - n1 * t[:, 0]).astype(float) + log_c
    return float(val[0]) if ya.ndim == 0 else val


def beta_prime_transform_check(samples, params: GrideParams):
    """KS test of ``mu^d - 1`` against BetaPrime(n2 - n1, n1).

    Returns scipy's ``KstestResult`` (``.statistic``, ``.pvalue``).
    """
    mu = np.asarray(samples, dtype=float).ravel()
    if mu.size == 0:
        raise ValueError("need at least one sample")
    z = np.expm1(params.d * np.log(mu))
    return stats.kstest(z, lambda t: beta_prime_cdf(t, params.gap, params.n1))


def beta_prime_cdf(z, a, b):
    """CDF of BetaPrime(a, b): regularized incomplete Beta at ``z / (1 + z)``."""
    z = np.asarray(z, dtype=float)
    zc = np.maximum(z, 0.0)
    return special.betainc(a, b, zc / (1.0 + zc))


# --------------------------------------------------------------------------
# Distance to the L-th neighbor
# --------------------------------------------------------------------------


def unit_ball_volume(d):
    """``pi^(d/2) / Gamma(d/2 + 1)``."""
    _positive("d", d)
    return float(np.exp(0.5 * d * np.log(np.pi) - special.gammaln(0.5 * d + 1.0)))


def gen_gamma_logpdf(r, d, rho, L):
    """Log density of the L-th neighbor distance under a homogeneous process of density ``rho``.

    Generalized Gamma with ``p = d``, ``a = (rho * omega_d)^(-1/d)``, ``q = L d``:
    ``f(x) = (p / a^q) / Gamma(q / p) * x^(q - 1) * exp(-(x / a)^p)``.
    """
    ra = np.asarray(r, dtype=float)
    if np.any(~(ra > 0)):
        raise ValueError("r must be positive")
    _positive("d", d)
    _positive("rho", rho)
    if int(L) != L or L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    p = float(d)
    log_a = -np.log(rho * unit_ball_volume(d)) / d
    q = L * p
    out = (
        np.log(p) - q * log_a - special.gammaln(q / p)
        + (q - 1.0) * np.log(ra) - np.exp(p * (np.log(ra) - log_a))
    )
    return _scalar_or_array(r, out)
