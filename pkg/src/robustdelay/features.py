"""Design matrices for the mean, log-scale and log-dof regressions.

Column layout (fixed):

* steady state ``Z``: ``intercept, Hour_7..Hour_21, Weekday_2..Weekday_7``
  (baselines: hour 6 and Monday; festivities count as Sunday);
* short-run mean block: ``Delay_l{l}_p{p}`` = delay of the p-th latest
  observation of bus rank l, discounted by ``delta ** (t - h)`` minutes;
* short-run dispersion block: ``AbsDiff_l{l}_p{p}`` = ``|y_p - y_{p+1}|`` of the
  same bus (p+1 is the next older observation), discounted like ``y_p``.

Training rows use the information available at the arrival itself.  Test rows
at horizon ``h`` only use observations made before ``t_obs - h`` minutes, but
the discount still runs up to ``t_obs`` so that features fade with the horizon.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .ingest import DEFAULT_WINDOW, local_day, weekday_of

HOURS = tuple(range(7, 22))
WEEKDAYS = tuple(range(2, 8))
Z_COLUMNS = ("intercept",) + tuple(f"Hour_{h}" for h in HOURS) + tuple(f"Weekday_{d}" for d in WEEKDAYS)
N_STEADY = len(Z_COLUMNS)
DEFAULT_DELTA = 0.96
META_COLUMNS = ("bus_run_id", "obs_ts", "minute_of_day", "weekday", "y", "rw_last", "rw_gap")


def mean_columns(L: int, P: int) -> tuple:
    return tuple(f"Delay_l{l}_p{p}" for l in range(1, L + 1) for p in range(1, P + 1))


def dispersion_columns(L: int, P: int) -> tuple:
    return tuple(f"AbsDiff_l{l}_p{p}" for l in range(1, L + 1) for p in range(1, P + 1))


def discount(t, h, delta):
    """``delta ** (t - h)`` for minute indices with ``h <= t``."""
    t = np.asarray(t)
    h = np.asarray(h)
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if np.any(h > t):
        raise ValueError("observation time after query time")
    return np.power(float(delta), t - h)


def build_steady_row(minute_of_day: int, weekday: int, festivity: bool = False,
                     window=DEFAULT_WINDOW) -> np.ndarray:
    lo, hi = window
    if not lo <= minute_of_day <= hi:
        raise ValueError(f"minute {minute_of_day} outside service window {window}")
    row = np.zeros(N_STEADY)
    row[0] = 1.0
    hour = (minute_of_day - 1) // 60
    if hour in HOURS:
        row[1 + HOURS.index(hour)] = 1.0
    wd = 7 if festivity else weekday
    if wd in WEEKDAYS:
        row[1 + len(HOURS) + WEEKDAYS.index(wd)] = 1.0
    return row


@dataclass
class DesignMatrices:
    y: np.ndarray
    Z: np.ndarray
    W_mu: np.ndarray
    W_sigma: np.ndarray
    obs_ts: np.ndarray
    minute_of_day: np.ndarray
    weekday: np.ndarray
    bus_run_id: np.ndarray
    rw_last: np.ndarray
    rw_gap: np.ndarray
    L: int = 2
    P: int = 3
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    @property
    def X_mu(self):
        return np.hstack([self.Z, self.W_mu])

    @property
    def X_sigma(self):
        return np.hstack([self.Z, self.W_sigma])

    @property
    def X_nu(self):
        return self.X_sigma

    @property
    def mu_columns(self):
        return Z_COLUMNS + mean_columns(self.L, self.P)

    @property
    def sigma_columns(self):
        return Z_COLUMNS + dispersion_columns(self.L, self.P)

    def subset(self, mask) -> "DesignMatrices":
        idx = np.asarray(mask)
        take = {k: getattr(self, k)[idx] for k in
                ("y", "Z", "W_mu", "W_sigma", "obs_ts", "minute_of_day", "weekday",
                 "bus_run_id", "rw_last", "rw_gap")}
        return replace(self, **take, meta=dict(self.meta))

    def steady_state(self) -> "DesignMatrices":
        """Same rows with every short-run feature zeroed."""
        return replace(self, W_mu=np.zeros_like(self.W_mu), W_sigma=np.zeros_like(self.W_sigma),
                       meta=dict(self.meta))


def _empty(L, P, meta):
    k = L * P
    return DesignMatrices(np.zeros(0), np.zeros((0, N_STEADY)), np.zeros((0, k)), np.zeros((0, k)),
                          np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                          np.zeros(0, dtype=np.int64), np.zeros(0, dtype=object),
                          np.zeros(0), np.zeros(0), L, P, meta)


def short_run_features(lookup, t_target, L, P, delta, utc_offset_s=0):
    """Mean and dispersion feature blocks plus the random-walk anchor for one lookup batch.

    ``lookup`` must have been taken with depth ``P + 1``.
    """
    y, ts = lookup.values()
    present = ts >= 0
    tmin = (np.asarray(t_target, dtype=np.int64) + utc_offset_s) // 60
    omin = np.where(present, (ts + utc_offset_s) // 60, tmin[:, None, None])
    gap = tmin[:, None, None] - omin
    disc = discount(tmin[:, None, None], omin, delta)
    yz = np.where(present, y, 0.0)
    W_mu = np.where(present[:, :, :P], yz[:, :, :P] * disc[:, :, :P], 0.0)
    pair = present[:, :, :P] & present[:, :, 1:P + 1]
    diff = np.abs(yz[:, :, :P] - yz[:, :, 1:P + 1])
    W_sigma = np.where(pair, diff * disc[:, :, :P], 0.0)
    Q = len(tmin)
    # random-walk anchor: latest delay of the incoming bus, else of the last bus at the stop
    first = present[:, :, 0]
    has = first.any(axis=1)
    which = np.argmax(first, axis=1)
    rw_last = np.where(has, yz[np.arange(Q), which, 0], np.nan)
    rw_gap = np.where(has, gap[np.arange(Q), which, 0], -1)
    return W_mu.reshape(Q, L * P), W_sigma.reshape(Q, L * P), rw_last, rw_gap


def build_matrices(stop_seq: int, history, L: int = 2, P: int = 3, delta: float = DEFAULT_DELTA,
                   horizon_h: int = 0, window=DEFAULT_WINDOW, festivities=()) -> DesignMatrices:
    """Rows for every observation at ``stop_seq`` with features at ``t_obs - horizon_h``."""
    if horizon_h < 0:
        raise ValueError("horizon must be >= 0")
    off = history.utc_offset_s
    fest_days = {d if isinstance(d, int) else d.toordinal() - 719163 for d in festivities}
    meta = {"stop": stop_seq, "L": L, "P": P, "delta": delta, "horizon": horizon_h,
            "window": tuple(window), "utc_offset_s": off}
    jj = stop_seq - 1
    parts = []
    for day in sorted(history.blocks):
        block = history.blocks[day]
        if jj >= block.ts.shape[1]:
            continue
        rows = np.flatnonzero(np.isfinite(block.ts[:, jj]))
        if len(rows) == 0:
            continue
        t_obs = block.ts[rows, jj].astype(np.int64)
        lk = history.lookup(stop_seq, t_obs - 60 * horizon_h, day, L, P + 1)
        W_mu, W_sigma, rw_last, rw_gap = short_run_features(lk, t_obs, L, P, delta, off)
        runs = np.array([block.run_ids[r] for r in rows], dtype=object)
        parts.append((t_obs, runs, block.delay[rows, jj], W_mu, W_sigma, rw_last, rw_gap))
    if not parts:
        return _empty(L, P, meta)
    t_obs, runs, y, W_mu, W_sigma, rw_last, rw_gap = (np.concatenate(c) for c in zip(*parts))
    order = np.lexsort((runs.astype(str), t_obs))
    t_obs, runs, y = t_obs[order], runs[order], y[order]
    W_mu, W_sigma, rw_last, rw_gap = W_mu[order], W_sigma[order], rw_last[order], rw_gap[order]

    mod = (t_obs + off) % 86400 // 60 + 1
    wd = np.array([weekday_of(t, off) for t in t_obs], dtype=np.int64)
    keep, Z = [], []
    for i in range(len(t_obs)):
        fest = local_day(int(t_obs[i]), off) in fest_days
        try:
            Z.append(build_steady_row(int(mod[i]), int(wd[i]), fest, window))
            keep.append(i)
        except ValueError:
            continue
    keep = np.array(keep, dtype=np.int64)
    meta["n_rejected"] = len(t_obs) - len(keep)
    if len(keep) == 0:
        return _empty(L, P, meta)
    no_anchor = np.isnan(rw_last)
    rw_gap = np.where(no_anchor, np.maximum(1, mod - window[0] + 1), np.maximum(rw_gap, 1))
    rw_last = np.where(no_anchor, 0.0, rw_last)
    return DesignMatrices(y[keep].astype(float), np.array(Z), W_mu[keep], W_sigma[keep],
                          t_obs[keep], mod[keep], wd[keep], runs[keep],
                          rw_last[keep], rw_gap[keep].astype(float), L, P, meta)


def build_training_matrices(stop_seq, history, L=2, P=3, delta=DEFAULT_DELTA, **kw):
    return build_matrices(stop_seq, history, L, P, delta, 0, **kw)


def build_test_matrices(stop_seq, history, L=2, P=3, delta=DEFAULT_DELTA, horizon_h=0, **kw):
    return build_matrices(stop_seq, history, L, P, delta, horizon_h, **kw)


def split_by_day(dm: DesignMatrices, fraction: float = 0.8, utc_offset_s: int | None = None):
    """Chronological split: the first ``fraction`` of service days train, the rest test."""
    off = dm.meta.get("utc_offset_s", 0) if utc_offset_s is None else utc_offset_s
    days = (dm.obs_ts + off) // 86400
    uniq = np.unique(days)
    n_train = int(round(fraction * len(uniq)))
    cut = uniq[n_train - 1] if n_train > 0 else uniq.min() - 1
    return dm.subset(days <= cut), dm.subset(days > cut)


def train_days(dm: DesignMatrices, fraction: float = 0.8):
    off = dm.meta.get("utc_offset_s", 0)
    uniq = np.unique((dm.obs_ts + off) // 86400)
    return set(uniq[: int(round(fraction * len(uniq)))].tolist())


def write_matrices(path, dm: DesignMatrices) -> None:
    header = META_COLUMNS + Z_COLUMNS + mean_columns(dm.L, dm.P) + dispersion_columns(dm.L, dm.P)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(dm)):
            w.writerow([dm.bus_run_id[i], int(dm.obs_ts[i]), int(dm.minute_of_day[i]), int(dm.weekday[i]),
                        repr(float(dm.y[i])), repr(float(dm.rw_last[i])), repr(float(dm.rw_gap[i]))]
                       + [repr(float(v)) for v in dm.Z[i]]
                       + [repr(float(v)) for v in dm.W_mu[i]]
                       + [repr(float(v)) for v in dm.W_sigma[i]])


def read_matrices(path, L: int, P: int, meta=None) -> DesignMatrices:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = list(reader)
    expected = META_COLUMNS + Z_COLUMNS + mean_columns(L, P) + dispersion_columns(L, P)
    if header != expected:
        from .ingest import SchemaError
        raise SchemaError(f"feature file {path} does not match L={L}, P={P} layout")
    if not rows:
        return _empty(L, P, dict(meta or {}))
    k = L * P
    num = np.array([[float(v) for v in r[4:]] for r in rows])
    return DesignMatrices(
        y=num[:, 0], Z=num[:, 3:3 + N_STEADY], W_mu=num[:, 3 + N_STEADY:3 + N_STEADY + k],
        W_sigma=num[:, 3 + N_STEADY + k:], obs_ts=np.array([int(r[1]) for r in rows], dtype=np.int64),
        minute_of_day=np.array([int(r[2]) for r in rows], dtype=np.int64),
        weekday=np.array([int(r[3]) for r in rows], dtype=np.int64),
        bus_run_id=np.array([r[0] for r in rows], dtype=object),
        rw_last=num[:, 1], rw_gap=num[:, 2], L=L, P=P, meta=dict(meta or {}))
