"""Gaussian priors on the regression blocks, optionally with a GP block on hour dummies.

Prior files are ``key = value`` lines::

    # <block>.<coefficient pattern> = mean, variance
    mu.* = 0, 1e6
    sigma.Hour_* = 0, 4
    # squared-exponential smoothness prior over the hour dummies of a block
    gp.mu.lengthscale = 2.0
    gp.mu.variance = 25

Blocks are ``mu``, ``sigma`` and ``nu``; patterns use shell wildcards and later
lines win.  Anything not mentioned keeps mean 0 and variance 1e6.
"""
from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field

import numpy as np

from .stats import gp_prior_covariance

BLOCKS = ("mu", "sigma", "nu")
FLAT_VARIANCE = 1e6
GP_JITTER = 1e-6
DEFAULT_GP_LENGTHSCALE = 2.0


@dataclass
class PriorConfig:
    rules: list = field(default_factory=list)  # (block, pattern, mean, variance)
    gp: dict = field(default_factory=dict)     # block -> {"lengthscale": l, "variance": v}

    def with_rule(self, block, pattern, mean, variance) -> "PriorConfig":
        return PriorConfig(self.rules + [(block, pattern, float(mean), float(variance))], dict(self.gp))


@dataclass
class BlockPrior:
    mean: np.ndarray
    cov: np.ndarray
    prec: np.ndarray

    def logpdf(self, beta) -> float:
        d = beta - self.mean
        return -0.5 * d @ self.prec @ d

    def grad(self, beta):
        return -self.prec @ (beta - self.mean)


def parse_prior_file(path) -> PriorConfig:
    cfg = PriorConfig()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("gp."):
                _, block, attr = key.split(".", 2)
                if block not in BLOCKS or attr not in ("lengthscale", "variance"):
                    raise ValueError(f"{path}:{lineno}: unknown GP key {key!r}")
                cfg.gp.setdefault(block, {"lengthscale": DEFAULT_GP_LENGTHSCALE, "variance": 1.0})
                cfg.gp[block][attr] = float(value)
                continue
            block, _, pattern = key.partition(".")
            if block not in BLOCKS or not pattern:
                raise ValueError(f"{path}:{lineno}: unknown prior key {key!r}")
            mean, var = (float(v) for v in value.split(","))
            if var <= 0:
                raise ValueError(f"{path}:{lineno}: variance must be positive")
            cfg.rules.append((block, pattern, mean, var))
    return cfg


def block_prior(block: str, columns, config: PriorConfig | None = None) -> BlockPrior:
    config = config or PriorConfig()
    p = len(columns)
    mean = np.zeros(p)
    var = np.full(p, FLAT_VARIANCE)
    for b, pattern, m, v in config.rules:
        if b != block:
            continue
        for i, c in enumerate(columns):
            if fnmatch.fnmatchcase(c, pattern):
                mean[i], var[i] = m, v
    cov = np.diag(var)
    gp = config.gp.get(block)
    if gp:
        idx = [i for i, c in enumerate(columns) if c.startswith("Hour_")]
        if idx:
            hours = [int(columns[i].split("_")[1]) for i in idx]
            gram = gp.get("variance", 1.0) * gp_prior_covariance(hours, gp.get("lengthscale", DEFAULT_GP_LENGTHSCALE))
            gram += GP_JITTER * gp.get("variance", 1.0) * np.eye(len(idx))
            cov[np.ix_(idx, idx)] = gram
    chol = np.linalg.cholesky(cov)
    inv_chol = np.linalg.solve(chol, np.eye(p))
    return BlockPrior(mean, cov, inv_chol.T @ inv_chol)
