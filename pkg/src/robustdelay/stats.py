"""Densities, samplers and summaries shared by the sampler and the evaluation code.

Parameterizations follow the delay model: the Student-t uses a *scale* sigma2
(not a standard deviation) and the scaled inverse chi-squared distribution is
``Inv-chi2(nu, tau2)``, i.e. the law of ``nu * tau2 / chi2_nu``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

LOG_PI = np.log(np.pi)


@dataclass(frozen=True)
class StudentTParams:
    mu: float
    sigma2: float
    nu: float

    def __post_init__(self):
        if not self.sigma2 > 0 or not self.nu > 0:
            raise ValueError(f"invalid Student-t parameters sigma2={self.sigma2}, nu={self.nu}")

    @property
    def variance(self) -> float:
        if self.nu <= 2:
            return np.nan
        return self.nu * self.sigma2 / (self.nu - 2)


@dataclass(frozen=True)
class ScaledInvChiSq:
    nu: float
    tau2: float

    @property
    def mean(self) -> float:
        if self.nu <= 2:
            return np.inf
        return self.nu * self.tau2 / (self.nu - 2)


def student_t_logpdf(y, mu, sigma2, nu):
    """Elementwise log density of T(mu, sigma2, nu); arguments broadcast."""
    sigma2 = np.asarray(sigma2, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(sigma2 <= 0) or np.any(nu <= 0):
        raise ValueError("sigma2 and nu must be positive")
    z2 = (np.asarray(y, dtype=float) - mu) ** 2 / sigma2
    half = 0.5 * (nu + 1.0)
    const = special.gammaln(half) - special.gammaln(0.5 * nu) - 0.5 * (np.log(nu) + LOG_PI)
    return const - 0.5 * np.log(sigma2) - half * np.log1p(z2 / nu)


def normal_logpdf(y, mu, sigma2):
    sigma2 = np.asarray(sigma2, dtype=float)
    return -0.5 * (np.log(2 * np.pi * sigma2) + (np.asarray(y, dtype=float) - mu) ** 2 / sigma2)


def student_t_cdf(y, mu, sigma2, nu):
    z = (np.asarray(y, dtype=float) - mu) / np.sqrt(sigma2)
    return special.stdtr(nu, z)


def student_t_sf(y, mu, sigma2, nu):
    z = (np.asarray(y, dtype=float) - mu) / np.sqrt(sigma2)
    return special.stdtr(nu, -z)


def normal_cdf(y, mu, sigma2):
    return special.ndtr((np.asarray(y, dtype=float) - mu) / np.sqrt(sigma2))


def normal_sf(y, mu, sigma2):
    return special.ndtr(-(np.asarray(y, dtype=float) - mu) / np.sqrt(sigma2))


def scaled_inv_chisq_logpdf(u, nu, tau2):
    u = np.asarray(u, dtype=float)
    half = 0.5 * np.asarray(nu, dtype=float)
    return (half * np.log(half) - special.gammaln(half) + half * np.log(tau2)
            - (half + 1.0) * np.log(u) - half * tau2 / u)


def sample_scaled_inv_chisq(rng: np.random.Generator, nu, tau2, size=None):
    """Draw ``nu * tau2 / chi2_nu``; vectorized over broadcast ``nu``/``tau2``."""
    nu = np.asarray(nu, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    if size is None:
        size = np.broadcast(nu, tau2).shape
    chi2 = 2.0 * rng.standard_gamma(0.5 * nu, size=size)
    return nu * tau2 / chi2


def digamma(x):
    return special.digamma(x)


def trigamma(x):
    return special.polygamma(1, x)


def sample_mvn(rng: np.random.Generator, mean, chol):
    """One draw from N(mean, L L^T) given the lower Cholesky factor ``chol``."""
    return mean + chol @ rng.standard_normal(len(mean))


def sample_mvt(rng: np.random.Generator, mean, chol, df):
    """One draw from the multivariate t with location ``mean``, scale L L^T, ``df`` dof."""
    z = chol @ rng.standard_normal(len(mean))
    w = 2.0 * rng.standard_gamma(0.5 * df) / df
    return mean + z / np.sqrt(w)


def mvt_logpdf(x, mean, chol, df):
    p = len(mean)
    dev = np.linalg.solve(np.tril(chol), np.asarray(x, dtype=float) - mean)
    maha = dev @ dev
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return (special.gammaln(0.5 * (df + p)) - special.gammaln(0.5 * df)
            - 0.5 * p * np.log(df * np.pi) - 0.5 * logdet
            - 0.5 * (df + p) * np.log1p(maha / df))


def gp_prior_covariance(indices, lengthscale: float) -> np.ndarray:
    """Squared-exponential Gram matrix exp(-0.5 (x - x')^2 / l^2)."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    x = np.asarray(indices, dtype=float)
    d = x[:, None] - x[None, :]
    return np.exp(-0.5 * d ** 2 / lengthscale ** 2)


def hpd_interval(samples, mass: float = 0.90):
    """Shortest window of sorted samples holding ``ceil(mass * n)`` points."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ValueError("no samples")
    if n < 100:
        warnings.warn(f"HPD from only {n} samples is imprecise", stacklevel=2)
    k = int(np.ceil(mass * n))
    k = min(max(k, 1), n)
    widths = x[k - 1:] - x[:n - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def logsumexp_mean(logp, axis=-1):
    """log(mean(exp(logp))) along ``axis`` with a max shift."""
    logp = np.asarray(logp, dtype=float)
    m = np.max(logp, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.log(np.mean(np.exp(logp - m), axis=axis))
    return s + np.squeeze(m, axis=axis)


def sample_mvt_prec(rng: np.random.Generator, mean, prec_chol, df):
    """Multivariate t draw whose scale matrix is the inverse of ``C C^T`` (``C`` = ``prec_chol``)."""
    z = np.linalg.solve(prec_chol.T, rng.standard_normal(len(mean)))
    w = 2.0 * rng.standard_gamma(0.5 * df) / df
    return mean + z / np.sqrt(w)


def mvt_logpdf_prec(x, mean, prec_chol, df):
    p = len(mean)
    dev = prec_chol.T @ (np.asarray(x, dtype=float) - mean)
    maha = dev @ dev
    half_logdet_prec = np.sum(np.log(np.diag(prec_chol)))
    return (special.gammaln(0.5 * (df + p)) - special.gammaln(0.5 * df)
            - 0.5 * p * np.log(df * np.pi) + half_logdet_prec
            - 0.5 * (df + p) * np.log1p(maha / df))
