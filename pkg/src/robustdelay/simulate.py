"""Synthetic AVL logs drawn from the Student-t delay model.

Arrival times are simulated first (dispatch every ``headway_min`` minutes with
a little jitter, gamma-distributed running times between stops).  Delays are
then drawn stop by stop in causal order: the features of an arrival only use
delays already drawn at earlier times, through exactly the same lookup and
feature code that the estimation pipeline uses.  The timetable is recovered
as ``scheduled = actual - delay``.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, replace

import numpy as np

from .features import (DEFAULT_DELTA, Z_COLUMNS, build_steady_row, dispersion_columns,
                       mean_columns, short_run_features)
from .history import DayBlock, HistoryIndex, Lookup
from .ingest import DEFAULT_WINDOW, AvlEvent, DelayObservation, format_window, minute_of_day, \
    parse_window, weekday_of

EPOCH = dt.date(1970, 1, 1)

DEFAULT_MU = {
    "intercept": 3.0, "Hour_7": 3.0, "Hour_8": 6.0, "Hour_9": 3.0, "Hour_15": 3.0,
    "Hour_16": 8.0, "Hour_17": 7.0, "Hour_18": 3.0, "Weekday_6": -4.0, "Weekday_7": -5.0,
    "Delay_l1_p1": 1.0, "Delay_l1_p2": 0.02, "Delay_l2_p1": 0.03,
}
DEFAULT_SIGMA = {
    "intercept": 5.5, "Hour_7": 0.2, "Hour_8": 0.5, "Hour_16": 0.5, "Hour_17": 0.6,
    "Hour_21": -0.3, "Weekday_6": -0.3, "Weekday_7": -0.4, "AbsDiff_l1_p1": 0.004,
}
DEFAULT_NU = {
    "intercept": 1.6, "Hour_7": -0.2, "Hour_8": -0.6, "Hour_16": -0.4, "Hour_17": -0.6,
    "Weekday_6": 2.0, "Weekday_7": 2.5, "AbsDiff_l1_p1": -0.0005,
}


@dataclass
class SimScenario:
    stops: int = 32
    headway_min: float = 6.0
    segment_s: float = 90.0
    segment_shape: float = 8.0
    dispatch_jitter_s: float = 30.0
    window: tuple = DEFAULT_WINDOW
    weeks: int = 25
    start_date: str = "2017-01-02"
    L: int = 2
    P: int = 3
    delta: float = DEFAULT_DELTA
    seed: int = 1
    route_id: str = "89"
    utc_offset_s: int = 0
    beta_mu: dict = field(default_factory=lambda: dict(DEFAULT_MU))
    beta_sigma: dict = field(default_factory=lambda: dict(DEFAULT_SIGMA))
    beta_nu: dict = field(default_factory=lambda: dict(DEFAULT_NU))

    def __post_init__(self):
        if self.headway_min <= 0:
            raise ValueError("headway must be positive")
        if self.stops < 1 or self.weeks < 1:
            raise ValueError("stops and weeks must be >= 1")
        if self.segment_s <= 0 or self.segment_shape <= 0:
            raise ValueError("segment time parameters must be positive")
        self.window = tuple(self.window)
        self.coefficient_vectors()  # validates names early

    @property
    def mu_columns(self):
        return Z_COLUMNS + mean_columns(self.L, self.P)

    @property
    def sigma_columns(self):
        return Z_COLUMNS + dispersion_columns(self.L, self.P)

    def coefficient_vectors(self):
        out = {}
        for block, cols, coefs in (("mu", self.mu_columns, self.beta_mu),
                                   ("sigma", self.sigma_columns, self.beta_sigma),
                                   ("nu", self.sigma_columns, self.beta_nu)):
            unknown = sorted(set(coefs) - set(cols))
            if unknown:
                raise ValueError(f"unknown {block} coefficient(s) for L={self.L}, P={self.P}: {unknown}")
            out[block] = np.array([float(coefs.get(c, 0.0)) for c in cols])
        return out

    def truth(self) -> list:
        """(name, value) pairs for every coefficient, zeros included."""
        vecs = self.coefficient_vectors()
        cols = {"mu": self.mu_columns, "sigma": self.sigma_columns, "nu": self.sigma_columns}
        return [(f"{b}.{c}", float(v)) for b in ("mu", "sigma", "nu") for c, v in zip(cols[b], vecs[b])]


_SCALARS = {"stops": int, "headway_min": float, "segment_s": float, "segment_shape": float,
            "dispatch_jitter_s": float, "weeks": int, "start_date": str, "L": int, "P": int,
            "delta": float, "seed": int, "route_id": str, "utc_offset_s": int}


def parse_scenario(path) -> SimScenario:
    """Read a ``key = value`` scenario file; coefficient keys are ``beta_<block>.<column>``.

    Listing any coefficient of a block replaces that block's defaults entirely.
    """
    kw, coefs = {}, {"mu": {}, "sigma": {}, "nu": {}}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in _SCALARS:
                kw[key] = _SCALARS[key](value)
            elif key == "window":
                kw["window"] = parse_window(value)
            elif key.startswith("beta_") and "." in key:
                block, col = key[5:].split(".", 1)
                if block not in coefs:
                    raise ValueError(f"{path}:{lineno}: unknown coefficient block {block!r}")
                coefs[block][col] = float(value)
            else:
                raise ValueError(f"{path}:{lineno}: unknown scenario key {key!r}")
    for block, c in coefs.items():
        if c:
            kw[f"beta_{block}"] = c
    return SimScenario(**kw)


def write_scenario(path, sc: SimScenario) -> None:
    with open(path, "w") as fh:
        for key in _SCALARS:
            fh.write(f"{key} = {getattr(sc, key)}\n")
        fh.write(f"window = {format_window(sc.window)}\n")
        for block in ("mu", "sigma", "nu"):
            for col, v in getattr(sc, f"beta_{block}").items():
                fh.write(f"beta_{block}.{col} = {v!r}\n")


def default_scenario(**overrides) -> SimScenario:
    """Route-scale scenario: 32 stops, 6-minute headway, 25 weeks."""
    return replace(SimScenario(), **overrides)


# weekend dof kept moderate: a cell with nu in the 30s-60s is indistinguishable from a
# Gaussian at this sample size, so its log-dof coefficient is not identified
RECOVERY_NU = {**DEFAULT_NU, "Weekday_6": 0.4, "Weekday_7": 0.6}


def recovery_scenario(**overrides) -> SimScenario:
    """Six weeks on the default route, roughly 5000 training arrivals per stop, nu between 2.7 and 9."""
    return replace(SimScenario(weeks=6, seed=7, beta_nu=dict(RECOVERY_NU)), **overrides)


HEAVY_NU = {
    "intercept": 1.25, "Hour_7": -0.2, "Hour_8": -0.4, "Hour_16": -0.3, "Hour_17": -0.4,
    "Hour_20": 1.0, "Hour_21": 1.5, "Weekday_6": 3.0, "Weekday_7": 3.5,
}


def ordering_scenario(**overrides) -> SimScenario:
    """Short route with very heavy weekday tails and near-Gaussian weekends."""
    sigma = {**DEFAULT_SIGMA, "AbsDiff_l1_p1": 0.001}
    return replace(SimScenario(stops=10, weeks=10, seed=11, beta_sigma=sigma, beta_nu=dict(HEAVY_NU)),
                   **overrides)


@dataclass
class SimResult:
    scenario: SimScenario
    events: list                # AvlEvent, sorted by (run, stop)
    observations: list          # DelayObservation for every event
    truth: list                 # (name, value)
    rows: dict                  # stop_seq -> dict of arrays the simulator used
    n_dropped: int = 0


def _arrival_times(sc: SimScenario, rng):
    """Per day: list of (run_id, actual_ts per stop), restricted to the service window."""
    lo, hi = sc.window
    start = dt.date.fromisoformat(sc.start_date)
    n_days = 7 * sc.weeks
    theta = sc.segment_s / sc.segment_shape
    head = int(round(60 * sc.headway_min))
    n_runs = (hi - lo + 1) * 60 // head + 1
    out = []
    for d in range(n_days):
        day = (start - EPOCH).days + d
        base = day * 86400 - sc.utc_offset_s + (lo - 1) * 60
        dispatch = base + head * np.arange(n_runs) + np.floor(rng.uniform(0, sc.dispatch_jitter_s, n_runs))
        seg = np.maximum(1.0, np.ceil(rng.gamma(sc.segment_shape, theta, (n_runs, sc.stops - 1))))
        ts = np.concatenate([dispatch[:, None], dispatch[:, None] + np.cumsum(seg, axis=1)], axis=1)
        date = (start + dt.timedelta(days=d)).strftime("%Y%m%d")
        for k in range(n_runs):
            out.append((f"{date}-{k + 1:03d}", ts[k].astype(np.int64)))
    return out


def simulate(sc: SimScenario) -> SimResult:
    rng = np.random.default_rng(sc.seed)
    vecs = sc.coefficient_vectors()
    lo, hi = sc.window
    off = sc.utc_offset_s
    L, P = sc.L, sc.P

    # arrival skeleton, delays filled below
    skeleton = []
    for run, ts in _arrival_times(sc, rng):
        for j, t in enumerate(ts, start=1):
            t = int(t)
            if lo <= minute_of_day(t, off) <= hi:
                skeleton.append(DelayObservation(j, run, 0, minute_of_day(t, off), t))
    history = HistoryIndex(skeleton, off, n_stops=sc.stops)
    days = sorted(history.blocks)
    offsets, acc = {}, 0
    for d in days:
        offsets[d] = acc
        acc += history.blocks[d].n_runs
    big_ts = np.vstack([history.blocks[d].ts for d in days])
    big = DayBlock(-1, sum((history.blocks[d].run_ids for d in days), []), big_ts,
                   np.full(big_ts.shape, np.nan), np.zeros_like(big_ts))

    rows = {}
    for j in range(1, sc.stops + 1):
        jj = j - 1
        # structural lookups per day; the k-th arrival of every day forms one batch
        per_day = []
        for d in days:
            block = history.blocks[d]
            r = np.flatnonzero(np.isfinite(block.ts[:, jj]))
            if len(r) == 0:
                continue
            t = block.ts[r, jj].astype(np.int64)
            order = np.lexsort((np.array(block.run_ids, dtype=object)[r].astype(str), t))
            r, t = r[order], t[order]
            lk = history.lookup(j, t, d, L, P + 1)
            runs = np.where(lk.runs >= 0, lk.runs + offsets[d], -1)
            per_day.append((r + offsets[d], t, runs, lk.stops))
        if not per_day:
            continue
        K = max(len(p[0]) for p in per_day)
        rec = {k: [] for k in ("row", "t", "y", "Z", "W_mu", "W_sigma")}
        for k in range(K):
            batch = [p for p in per_day if len(p[0]) > k]
            rr = np.array([p[0][k] for p in batch])
            t = np.array([p[1][k] for p in batch], dtype=np.int64)
            lk = Lookup(big, np.stack([p[2][k] for p in batch]), np.stack([p[3][k] for p in batch]))
            W_mu, W_sigma, _, _ = short_run_features(lk, t, L, P, sc.delta, off)
            Z = np.array([build_steady_row(minute_of_day(int(v), off), weekday_of(int(v), off), False, sc.window)
                          for v in t])
            mu = Z @ vecs["mu"][:len(Z_COLUMNS)] + W_mu @ vecs["mu"][len(Z_COLUMNS):]
            log_s2 = Z @ vecs["sigma"][:len(Z_COLUMNS)] + W_sigma @ vecs["sigma"][len(Z_COLUMNS):]
            log_nu = Z @ vecs["nu"][:len(Z_COLUMNS)] + W_sigma @ vecs["nu"][len(Z_COLUMNS):]
            nu = np.exp(log_nu)
            z = rng.standard_normal(len(t)) / np.sqrt(2.0 * rng.standard_gamma(0.5 * nu) / nu)
            with np.errstate(over="ignore", invalid="ignore"):
                y = np.rint(mu + np.sqrt(np.exp(log_s2)) * z)
            if not np.all(np.isfinite(y)):
                raise FloatingPointError(f"simulated delays diverged at stop {j}; scenario is explosive")
            big.delay[rr, jj] = y
            for key, val in (("row", rr), ("t", t), ("y", y), ("Z", Z), ("W_mu", W_mu), ("W_sigma", W_sigma)):
                rec[key].append(val)
        cat = {k: np.concatenate(v) for k, v in rec.items()}
        run_ids = np.array(big.run_ids, dtype=object)[cat["row"]]
        order = np.lexsort((run_ids.astype(str), cat["t"]))
        rows[j] = {"bus_run_id": run_ids[order], "obs_ts": cat["t"][order],
                   **{k: cat[k][order] for k in ("y", "Z", "W_mu", "W_sigma")}}

    events, observations = [], []
    for i, run in enumerate(big.run_ids):
        for jj in np.flatnonzero(np.isfinite(big.ts[i])):
            t = int(big.ts[i, jj])
            y = int(big.delay[i, jj])
            events.append(AvlEvent(sc.route_id, run, int(jj) + 1, t - y, t))
            observations.append(DelayObservation(int(jj) + 1, run, y, minute_of_day(t, off), t))
    return SimResult(sc, events, observations, sc.truth(), rows)


def write_truth(path, truth) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("name", "value"))
        for name, v in truth:
            w.writerow((name, repr(float(v))))


def read_truth(path) -> dict:
    with open(path, newline="") as fh:
        return {r["name"]: float(r["value"]) for r in csv.DictReader(fh)}
