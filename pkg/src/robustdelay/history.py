"""Causal lookup of recent bus runs and their latest delays along a route.

Observations are grouped per local service day into a runs x stops grid of
arrival timestamps.  A query at time ``t`` (epoch seconds) only sees cells with
``obs_ts < t``.  For a target stop ``j``:

* bus rank 1 is the *incoming* run: it has data before ``t`` but has not yet
  reached stop ``j``; among several, the one furthest along the route wins
  (ties: the earlier passage at that stop, then dispatch order);
* ranks 2..L are runs that have already passed ``j``, most recent passage first.

For each ranked run the latest observations at stops ``<= j`` are returned in
descending stop order (for the incoming run this automatically excludes ``j``).
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .ingest import local_day


@dataclass
class DayBlock:
    day: int
    run_ids: list
    ts: np.ndarray       # (R, J) arrival epoch seconds, +inf where missing
    delay: np.ndarray    # (R, J) delay seconds, nan where missing
    passage: np.ndarray  # (R, J) min over stops >= s of ts: time the run passed stop s

    @property
    def n_runs(self) -> int:
        return len(self.run_ids)


@dataclass
class Lookup:
    """Structural answer to a batch of queries on one day.

    ``runs[q, l]`` is the row index of the rank-(l+1) run (-1 absent) and
    ``stops[q, l, k]`` the 0-based stop of its (k+1)-th most recent
    observation (-1 absent).
    """
    block: DayBlock
    runs: np.ndarray
    stops: np.ndarray

    def values(self):
        """(delays, timestamps) arrays shaped like ``stops``; nan / -1 where absent."""
        ok = self.stops >= 0
        if not ok.any():
            return np.full(self.stops.shape, np.nan), np.full(self.stops.shape, -1, dtype=np.int64)
        r = np.broadcast_to(self.runs[:, :, None], self.stops.shape)
        rr = np.where(ok, r, 0)
        ss = np.where(ok, self.stops, 0)
        y = np.where(ok, self.block.delay[rr, ss], np.nan)
        ts = np.where(ok, self.block.ts[rr, ss], -1)
        return y, ts.astype(np.int64)


def _pad(block: DayBlock, width: int) -> DayBlock:
    """Extend a block with never-visited stops (queries beyond the observed route end)."""
    extra = width - block.ts.shape[1]
    R = block.n_runs
    ts = np.hstack([block.ts, np.full((R, extra), np.inf)])
    delay = np.hstack([block.delay, np.full((R, extra), np.nan)])
    passage = np.hstack([block.passage, np.full((R, extra), np.inf)])
    return DayBlock(block.day, block.run_ids, ts, delay, passage)


class HistoryIndex:
    def __init__(self, observations, utc_offset_s: int = 0, n_stops: int | None = None):
        self.utc_offset_s = utc_offset_s
        observations = list(observations)
        self.n_stops = n_stops or max((o.stop_seq for o in observations), default=0)
        by_run = defaultdict(list)
        for o in observations:
            by_run[o.bus_run_id].append(o)
        by_day = defaultdict(list)
        for run, obs in by_run.items():
            first = min(o.obs_ts for o in obs)
            by_day[local_day(first, utc_offset_s)].append((first, run, obs))
        self.blocks = {}
        self._where = {}
        J = self.n_stops
        for day, entries in by_day.items():
            entries.sort(key=lambda e: (e[0], e[1]))
            R = len(entries)
            ts = np.full((R, J), np.inf)
            delay = np.full((R, J), np.nan)
            for r, (_, run, obs) in enumerate(entries):
                self._where[run] = (day, r)
                for o in obs:
                    ts[r, o.stop_seq - 1] = o.obs_ts
                    delay[r, o.stop_seq - 1] = o.delay_s
            passage = np.minimum.accumulate(ts[:, ::-1], axis=1)[:, ::-1]
            self.blocks[day] = DayBlock(day, [e[1] for e in entries], ts, delay, passage)
        self._obs = {(o.bus_run_id, o.stop_seq): o for o in observations}

    def day_of(self, t: int) -> int:
        return local_day(t, self.utc_offset_s)

    def observation(self, run_id, stop_seq):
        return self._obs.get((run_id, stop_seq))

    def lookup(self, stop_seq: int, t, day: int, L: int, depth: int) -> Lookup:
        """Ranked runs and their recent stops for query cutoffs ``t`` on ``day``."""
        if L < 1 or depth < 1:
            raise ValueError("L and depth must be >= 1")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        Q = len(t)
        block = self.blocks.get(day)
        if block is None or block.n_runs == 0:
            empty = DayBlock(day, [], np.zeros((0, self.n_stops)), np.zeros((0, self.n_stops)),
                             np.zeros((0, self.n_stops)))
            return Lookup(empty, np.full((Q, L), -1), np.full((Q, L, depth), -1))
        if stop_seq < 1:
            raise ValueError("stop_seq is 1-based")
        jj = stop_seq - 1
        if jj >= block.ts.shape[1]:
            block = _pad(block, jj + 1)
        R, J = block.ts.shape
        seen = block.ts[None, :, :] < t[:, None, None]
        passed = block.passage[None, :, jj] < t[:, None]
        runs = np.full((Q, L), -1)

        # incoming run
        cand = seen.any(axis=2) & ~passed
        last = J - 1 - np.argmax(seen[:, :, ::-1], axis=2)
        last = np.where(cand, last, -1)
        best = last.max(axis=1)
        tie = cand & (last == best[:, None])
        ts_last = block.ts[np.arange(R)[None, :], np.maximum(last, 0)]
        ts_last = np.where(tie, ts_last, np.inf)
        lead = np.argmin(ts_last, axis=1)
        runs[:, 0] = np.where(tie.any(axis=1), lead, -1)

        # runs already past the stop, latest passage first (ties: later dispatch first)
        if L > 1:
            key = np.where(passed, block.passage[None, :, jj], -np.inf)
            order = R - 1 - np.argsort(-key[:, ::-1], axis=1, kind="stable")
            take = order[:, : L - 1]
            ok = np.take_along_axis(passed, take, axis=1)
            runs[:, 1: 1 + take.shape[1]] = np.where(ok, take, -1)

        stops = np.full((Q, L, depth), -1)
        for l in range(L):
            r = runs[:, l]
            lim = jj if l > 0 else jj - 1
            if lim < 0:
                continue
            sub = seen[np.arange(Q), np.maximum(r, 0), : lim + 1] & (r >= 0)[:, None]
            rev = sub[:, ::-1]
            rank = np.cumsum(rev, axis=1)
            for k in range(depth):
                hit = rev & (rank == k + 1)
                found = hit.any(axis=1)
                stops[:, l, k] = np.where(found, lim - np.argmax(hit, axis=1), -1)
        return Lookup(block, runs, stops)

    # single-query conveniences

    def recent_buses(self, stop_seq: int, t: int, L: int) -> list:
        if L < 1:
            raise ValueError("L must be >= 1")
        lk = self.lookup(stop_seq, [t], self.day_of(t), L, 1)
        out = []
        for r in lk.runs[0]:
            if r >= 0:
                out.append(lk.block.run_ids[r])
        return out

    def _ranked(self, stop_seq, t, l, depth):
        lk = self.lookup(stop_seq, [t], self.day_of(t), l, depth)
        r = lk.runs[0, l - 1]
        if r < 0:
            return None, [None] * depth
        run = lk.block.run_ids[r]
        return run, [None if s < 0 else self._obs[(run, s + 1)] for s in lk.stops[0, l - 1]]

    def preceding_set(self, stop_seq: int, t: int, l: int, P: int) -> list:
        """Up to ``P`` latest (stop_seq, observation) pairs of the rank-``l`` run; None pads."""
        if P < 1:
            raise ValueError("P must be >= 1")
        _, obs = self._ranked(stop_seq, t, l, P)
        return [None if o is None else (o.stop_seq, o) for o in obs]

    def h_lookup(self, stop_seq: int, p: int, t: int, l: int):
        """Minute of day of the ``p``-th most recent observation of run rank ``l``, or None."""
        _, obs = self._ranked(stop_seq, t, l, p)
        o = obs[p - 1]
        return None if o is None else o.minute_of_day
