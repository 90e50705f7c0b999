"""Predictive densities and the evaluation suite: LPPD, MAE, inefficiency
factors, Bayesian R2, tail probabilities, odds ratios, horizon curves and
per-stop moment profiles.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy import stats as sps

from . import stats
from .features import build_test_matrices
from .inference import ModelSpec, fit

ROW_CHUNK = 256


def _row_chunks(n, size=ROW_CHUNK):
    for a in range(0, n, size):
        yield slice(a, min(a + size, n))


def draw_logdensity(y, mu, sigma2, nu):
    """Per-draw log densities, broadcasting ``y`` over the draw axis."""
    y = np.asarray(y, dtype=float)[:, None]
    if nu is None:
        return stats.normal_logpdf(y, mu, sigma2)
    return stats.student_t_logpdf(y, mu, sigma2, nu)


def mixture_logdensity(logp, axis=-1):
    """log of the draw-averaged density given per-draw log densities."""
    return stats.logsumexp_mean(logp, axis=axis)


def predictive_logdensity(chain, dm, steady_state=False) -> np.ndarray:
    """Log posterior-predictive density of each row of ``dm`` (length n)."""
    out = np.empty(len(dm))
    for rows in _row_chunks(len(dm)):
        mu, s2, nu = chain.predictive_params(dm, rows, steady_state)
        out[rows] = mixture_logdensity(draw_logdensity(dm.y[rows], mu, s2, nu))
    return out


def lppd(chain, dm, steady_state=False) -> float:
    return float(np.sum(predictive_logdensity(chain, dm, steady_state)))


def mae(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat differ in length")
    if y.size == 0:
        raise ValueError("MAE of an empty sample is undefined")
    return float(np.mean(np.abs(y - y_hat)))


def _cdf(y, mu, s2, nu):
    if nu is None:
        return stats.normal_cdf(y, mu, s2)
    return stats.student_t_cdf(y, mu, s2, nu)


def _sf(y, mu, s2, nu):
    if nu is None:
        return stats.normal_sf(y, mu, s2)
    return stats.student_t_sf(y, mu, s2, nu)


class PredictiveDensity:
    """Equal-weight mixture over posterior draws for a single feature row."""

    def __init__(self, mu, sigma2, nu=None):
        self.mu = np.asarray(mu, dtype=float).ravel()
        self.sigma2 = np.asarray(sigma2, dtype=float).ravel()
        self.nu = None if nu is None else np.asarray(nu, dtype=float).ravel()

    @classmethod
    def from_chain(cls, chain, dm, row: int, steady_state=False):
        mu, s2, nu = chain.predictive_params(dm, slice(row, row + 1), steady_state)
        return cls(mu[0], s2[0], None if nu is None else nu[0])

    def logpdf(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return mixture_logdensity(draw_logdensity(y, self.mu[None, :], self.sigma2[None, :],
                                                  None if self.nu is None else self.nu[None, :]))

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
        nu = None if self.nu is None else self.nu[None, :]
        return np.mean(_cdf(y, self.mu[None, :], self.sigma2[None, :], nu), axis=1)

    def sf(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
        nu = None if self.nu is None else self.nu[None, :]
        return np.mean(_sf(y, self.mu[None, :], self.sigma2[None, :], nu), axis=1)

    def quantile(self, q: float) -> float:
        spread = 50 * np.sqrt(np.max(self.sigma2))
        lo, hi = np.min(self.mu) - spread, np.max(self.mu) + spread
        while self.cdf(lo)[0] > q:
            lo -= 10 * spread
        while self.cdf(hi)[0] < q:
            hi += 10 * spread
        return float(optimize.brentq(lambda v: self.cdf(v)[0] - q, lo, hi, xtol=1e-8))

    def sample(self, rng, size: int):
        k = rng.integers(0, len(self.mu), size=size)
        z = rng.standard_normal(size)
        if self.nu is not None:
            z = z / np.sqrt(2.0 * rng.standard_gamma(0.5 * self.nu[k]) / self.nu[k])
        return self.mu[k] + np.sqrt(self.sigma2[k]) * z

    def hpd(self, mass=0.90, rng=None, size=20000):
        rng = rng if rng is not None else np.random.default_rng(0)
        return stats.hpd_interval(self.sample(rng, size), mass)


def tail_probability(chain, dm, threshold, steady_state=False) -> np.ndarray:
    """P(y_new >= threshold) per row, averaged over draws."""
    out = np.empty(len(dm))
    for rows in _row_chunks(len(dm)):
        mu, s2, nu = chain.predictive_params(dm, rows, steady_state)
        out[rows] = np.mean(_sf(threshold, mu, s2, nu), axis=1)
    return out


def predictive_cdf(chain, dm, value, steady_state=False) -> np.ndarray:
    out = np.empty(len(dm))
    for rows in _row_chunks(len(dm)):
        mu, s2, nu = chain.predictive_params(dm, rows, steady_state)
        out[rows] = np.mean(_cdf(value, mu, s2, nu), axis=1)
    return out


def odds(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return p / (1.0 - p)


def odds_ratio_from_probs(p_a, p_b):
    """Ratio of odds and a flag marking rows where either probability is 0 or 1."""
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    boundary = (p_a <= 0) | (p_a >= 1) | (p_b <= 0) | (p_b >= 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = odds(p_a) / odds(p_b)
    return ratio, boundary


def odds_ratio(chain_a, chain_b, dm, threshold):
    return odds_ratio_from_probs(tail_probability(chain_a, dm, threshold),
                                 tail_probability(chain_b, dm, threshold))


def autocorrelation(x, max_lag=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = x - x.mean()
    f = np.fft.rfft(d, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        return np.zeros(n if max_lag is None else max_lag + 1)
    rho = acov / acov[0]
    return rho if max_lag is None else rho[: max_lag + 1]


def inefficiency_factor(chain, cutoff=0.05, max_lag=500) -> float:
    """1 + 2 * sum of autocorrelations, stopped at the first lag below ``cutoff``."""
    x = np.asarray(chain, dtype=float)
    if len(x) < 200:
        warnings.warn("inefficiency factor from fewer than 200 draws", stacklevel=2)
    rho = autocorrelation(x, min(max_lag, len(x) - 1))
    total = 0.0
    for r in rho[1:]:
        if not r >= cutoff:
            break
        total += r
    return 1.0 + 2.0 * total


def inefficiency_factors(chain) -> dict:
    return {name: inefficiency_factor(col) for name, col in zip(chain.param_names, chain.matrix().T)}


def bayesian_r2(chain, dm, draw_chunk=500):
    """Posterior median of Var_fit / (Var_fit + Var_res) and the count of excluded (row, draw) pairs."""
    X = chain.design(dm)
    S = len(chain)
    r2 = np.empty(S)
    excluded = 0
    for a in range(0, S, draw_chunk):
        b = min(a + draw_chunk, S)
        if chain.spec.kind == "rw":
            fitted = np.broadcast_to(dm.rw_last[:, None], (len(dm), b - a))
            var_res = dm.rw_gap[:, None] * np.exp(chain.draws["sigma"][a:b, 0])[None, :]
        else:
            fitted = X["mu"] @ chain.draws["mu"][a:b].T
            var_res = np.exp(X["sigma"] @ chain.draws["sigma"][a:b].T)
            if X["nu"] is not None:
                nu = np.exp(np.clip(X["nu"] @ chain.draws["nu"][a:b].T, -30, 30))
                ok = nu > 2
                excluded += int(np.sum(~ok))
                var_res = np.where(ok, var_res * nu / np.where(ok, nu - 2, 1.0), np.nan)
        var_fit = np.var(fitted, axis=0)
        mean_res = np.nanmean(var_res, axis=0)
        r2[a:b] = var_fit / (var_fit + mean_res)
    return float(np.median(r2)), excluded


def steady_state_gap(chain, dm, h_dm=None):
    """Per-row log-density difference between the horizon rows and the W-zeroed rows."""
    dm_h = dm if h_dm is None else h_dm
    return predictive_logdensity(chain, dm_h) - predictive_logdensity(chain, dm_h, steady_state=True)


def within_mc_error(diff, k=2.0) -> bool:
    """True when |sum(diff)| is below ``k`` standard errors of that sum."""
    diff = np.asarray(diff, dtype=float)
    se = np.sqrt(len(diff)) * np.std(diff, ddof=1) if len(diff) > 1 else 0.0
    return bool(abs(np.sum(diff)) <= k * se)


def horizon_curve(chain, history, stop_seq, horizons, test_days, seed=0, window=None, festivities=()):
    """Test LPPD at each horizon; the random walk's variance is refit on training rows per horizon.

    Returns a list of dicts (horizon, lppd, n_rows, lppd_steady).
    """
    spec = chain.spec
    kw = {"festivities": festivities}
    if window is not None:
        kw["window"] = window
    test_days = set(int(d) for d in test_days)
    out = []
    for h in horizons:
        if not 0 <= h <= 120:
            raise ValueError("horizons must lie in 0..120")
        dm = build_test_matrices(stop_seq, history, spec.L, spec.P, spec.delta, h, **kw)
        days = (dm.obs_ts + history.utc_offset_s) // 86400
        is_test = np.isin(days, list(test_days))
        test = dm.subset(is_test)
        use = chain
        if spec.kind == "rw":
            rw_spec = ModelSpec("rw", spec.L, spec.P, spec.delta, iterations=spec.iterations,
                                burn_in=spec.burn_in)
            use = fit(rw_spec, dm.subset(~is_test), seed=seed)
        row = {"horizon": int(h), "lppd": lppd(use, test), "n_rows": len(test)}
        if spec.kind != "rw":
            row["lppd_steady"] = lppd(use, test, steady_state=True)
        out.append(row)
    return out


def moment_profile(series_by_stop: dict, min_rows=30):
    """Per-stop sample mean, variance, skewness and (non-excess) kurtosis."""
    rows = []
    for stop in sorted(series_by_stop):
        x = np.asarray(series_by_stop[stop], dtype=float)
        n = len(x)
        thin = n < min_rows
        if n == 0:
            rows.append({"stop_seq": stop, "n": 0, "mean": np.nan, "var": np.nan,
                         "skew": np.nan, "kurt": np.nan, "thin": True})
            continue
        var = float(np.var(x))
        if var > 0:
            skew = float(sps.skew(x))
            kurt = float(sps.kurtosis(x, fisher=False))
        else:
            skew = kurt = np.nan
        rows.append({"stop_seq": stop, "n": n, "mean": float(np.mean(x)), "var": var,
                     "skew": skew, "kurt": kurt, "thin": thin})
    return rows


@dataclass
class EvalReport:
    model: str
    lppd_train: float
    lppd_test: float
    mae_train: float
    mae_test: float
    n_train: int = 0
    n_test: int = 0
    bayesian_r2: float = float("nan")
    r2_excluded: int = 0
    acceptance_sigma: float = float("nan")
    acceptance_nu: float = float("nan")
    inefficiency: dict = field(default_factory=dict)
    horizons: list = field(default_factory=list)

    def row(self):
        return {"model": self.model, "lppd_train": self.lppd_train, "lppd_test": self.lppd_test,
                "mae_train": self.mae_train, "mae_test": self.mae_test}


def evaluate(chain, train, test, with_if=True) -> EvalReport:
    r2, excl = bayesian_r2(chain, train) if len(train) else (float("nan"), 0)
    return EvalReport(
        model=chain.spec.kind,
        lppd_train=lppd(chain, train), lppd_test=lppd(chain, test),
        mae_train=mae(train.y, chain.point_forecast(train)) if len(train) else float("nan"),
        mae_test=mae(test.y, chain.point_forecast(test)) if len(test) else float("nan"),
        n_train=len(train), n_test=len(test), bayesian_r2=r2, r2_excluded=excl,
        acceptance_sigma=chain.acceptance_rate("sigma"), acceptance_nu=chain.acceptance_rate("nu"),
        inefficiency=inefficiency_factors(chain) if with_if else {},
    )


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_benchmark(path, reports):
    write_csv(path, [r.row() for r in reports], ("model", "lppd_train", "lppd_test", "mae_train", "mae_test"))


def write_eval_report(path, reports):
    rows = []
    for r in reports:
        ifs = list(r.inefficiency.values())
        rows.append({**r.row(), "n_train": r.n_train, "n_test": r.n_test, "bayesian_r2": r.bayesian_r2,
                     "r2_excluded": r.r2_excluded, "acceptance_sigma": r.acceptance_sigma,
                     "acceptance_nu": r.acceptance_nu,
                     "if_max": float(max(ifs)) if ifs else float("nan"),
                     "if_median": float(np.median(ifs)) if ifs else float("nan")})
    write_csv(path, rows, ("model", "lppd_train", "lppd_test", "mae_train", "mae_test", "n_train", "n_test",
                           "bayesian_r2", "r2_excluded", "acceptance_sigma", "acceptance_nu",
                           "if_max", "if_median"))


def write_horizon_curves(path, curves: dict):
    rows = [{"model": m, "horizon": c["horizon"], "lppd": c["lppd"], "n_rows": c["n_rows"]}
            for m, cs in curves.items() for c in cs]
    write_csv(path, rows, ("model", "horizon", "lppd", "n_rows"))


def write_moments(path, profile):
    write_csv(path, profile, ("stop_seq", "mean", "var", "skew", "kurt", "n", "thin"))


def format_table(reports) -> str:
    head = f"{'model':<14}{'lppd_train':>14}{'lppd_test':>14}{'mae_train':>11}{'mae_test':>10}{'R2':>7}"
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(f"{r.model:<14}{r.lppd_train:>14.1f}{r.lppd_test:>14.1f}"
                     f"{r.mae_train:>11.2f}{r.mae_test:>10.2f}{r.bayesian_r2:>7.3f}")
    return "\n".join(lines)
