"""AVL arrival records to per-stop delay streams.

Input rows are stop arrivals (``route_id,bus_run_id,stop_seq,scheduled_ts,actual_ts``);
the delay is ``actual - scheduled`` in whole seconds, positive when late.  Times
are mapped to a within-day minute index 1..1440 using a fixed UTC offset.
"""
from __future__ import annotations

import csv
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

log = logging.getLogger(__name__)

EVENT_COLUMNS = ("route_id", "bus_run_id", "stop_seq", "scheduled_ts", "actual_ts")
OBS_COLUMNS = ("stop_seq", "bus_run_id", "delay_s", "minute_of_day", "obs_ts")
DEFAULT_WINDOW = (361, 1320)  # 06:00 .. 21:59

_INT_RE = re.compile(r"^[+-]?\d+$")


class SchemaError(ValueError):
    """Input file does not have the required columns."""


class MalformedRecord(ValueError):
    pass


@dataclass(frozen=True)
class Stop:
    route_id: str
    stop_seq: int

    def __post_init__(self):
        if self.stop_seq < 1:
            raise ValueError("stop_seq is 1-based")


@dataclass(frozen=True)
class AvlEvent:
    route_id: str
    bus_run_id: str
    stop_seq: int
    scheduled_ts: int | None
    actual_ts: int | None


@dataclass(frozen=True)
class DelayObservation:
    stop_seq: int
    bus_run_id: str
    delay_s: int
    minute_of_day: int
    obs_ts: int


@dataclass
class IngestReport:
    n_rows: int = 0
    n_observations: int = 0
    n_duplicates: int = 0
    n_out_of_window: int = 0
    n_overtakes: int = 0
    rejected: list = field(default_factory=list)  # (line number, reason)

    def as_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_observations": self.n_observations,
            "n_rejected": len(self.rejected),
            "n_duplicates": self.n_duplicates,
            "n_out_of_window": self.n_out_of_window,
            "n_overtakes": self.n_overtakes,
        }


@dataclass
class IngestResult:
    # route_id -> stop_seq -> observations sorted by obs_ts
    streams: dict
    report: IngestReport

    def observations(self, route_id=None) -> list:
        if route_id is None:
            if len(self.streams) > 1:
                raise ValueError("several routes ingested; pass route_id")
            if not self.streams:
                return []
            route_id = next(iter(self.streams))
        return [o for stop in sorted(self.streams[route_id]) for o in self.streams[route_id][stop]]


def minute_of_day(ts: int, utc_offset_s: int = 0) -> int:
    return (int(ts) + utc_offset_s) % 86400 // 60 + 1


def local_day(ts: int, utc_offset_s: int = 0) -> int:
    """Days since 1970-01-01 in local time."""
    return (int(ts) + utc_offset_s) // 86400


def weekday_of(ts: int, utc_offset_s: int = 0) -> int:
    """ISO weekday, Monday=1 .. Sunday=7."""
    return (local_day(ts, utc_offset_s) + 3) % 7 + 1


def parse_clock(text: str) -> int:
    """'HH:MM' -> minute index (00:00 -> 1)."""
    hh, mm = text.strip().split(":")
    hh, mm = int(hh), int(mm)
    if not (0 <= hh < 24 and 0 <= mm < 60):
        raise ValueError(f"bad clock time {text!r}")
    return hh * 60 + mm + 1


def parse_window(text: str) -> tuple:
    lo, hi = text.split("-")
    lo, hi = parse_clock(lo), parse_clock(hi)
    if lo > hi:
        raise ValueError(f"empty window {text!r}")
    return lo, hi


def format_window(window) -> str:
    lo, hi = window
    return f"{(lo - 1) // 60:02d}:{(lo - 1) % 60:02d}-{(hi - 1) // 60:02d}:{(hi - 1) % 60:02d}"


def parse_timestamp(text: str, mode: str, utc_offset_s: int = 0) -> int:
    text = text.strip()
    if not text:
        raise MalformedRecord("missing timestamp")
    if mode == "epoch":
        if not _INT_RE.match(text):
            raise MalformedRecord(f"not an epoch integer: {text!r}")
        return int(text)
    try:
        dt = datetime.fromisoformat(text[:-1] + "+00:00" if text.endswith("Z") else text)
    except ValueError as exc:
        raise MalformedRecord(f"unparseable timestamp {text!r}") from exc
    if dt.microsecond:
        raise MalformedRecord(f"sub-second timestamp {text!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone(timedelta(seconds=utc_offset_s)))
    return int(dt.timestamp())


def _detect_mode(values) -> str:
    """Majority vote so that a few garbled cells do not flip the whole column."""
    present = [v.strip() for v in values if v.strip()]
    n_int = sum(1 for v in present if _INT_RE.match(v))
    return "epoch" if present and 2 * n_int >= len(present) else "iso"


def compute_delay(event: AvlEvent, utc_offset_s: int = 0) -> DelayObservation:
    if event.actual_ts is None or event.scheduled_ts is None:
        raise MalformedRecord("missing scheduled or actual time")
    return DelayObservation(
        stop_seq=int(event.stop_seq),
        bus_run_id=event.bus_run_id,
        delay_s=int(event.actual_ts) - int(event.scheduled_ts),
        minute_of_day=minute_of_day(event.actual_ts, utc_offset_s),
        obs_ts=int(event.actual_ts),
    )


def read_events(path, utc_offset_s: int = 0):
    """Parse an event CSV into (events with their line numbers, rejections)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    if not rows and not header:
        return [], []
    missing = [c for c in EVENT_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    modes = {c: _detect_mode(r[c] or "" for r in rows) for c in ("scheduled_ts", "actual_ts")}
    events, rejected = [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            stop = (row["stop_seq"] or "").strip()
            if not _INT_RE.match(stop) or int(stop) < 1:
                raise MalformedRecord(f"bad stop_seq {stop!r}")
            ts = {c: parse_timestamp(row[c] or "", modes[c], utc_offset_s)
                  for c in ("scheduled_ts", "actual_ts")}
            events.append((lineno, AvlEvent(row["route_id"].strip(), row["bus_run_id"].strip(),
                                            int(stop), ts["scheduled_ts"], ts["actual_ts"])))
        except MalformedRecord as exc:
            rejected.append((lineno, str(exc)))
    return events, rejected


def ingest_events(events, time_window=DEFAULT_WINDOW, utc_offset_s: int = 0,
                  report: IngestReport | None = None) -> IngestResult:
    report = report or IngestReport()
    lo, hi = time_window
    seen = set()
    runs = defaultdict(list)
    for lineno, ev in events:
        key = (ev.route_id, ev.bus_run_id, ev.stop_seq)
        if key in seen:
            report.n_duplicates += 1
            continue
        seen.add(key)
        try:
            obs = compute_delay(ev, utc_offset_s)
        except MalformedRecord as exc:
            report.rejected.append((lineno, str(exc)))
            continue
        if not lo <= obs.minute_of_day <= hi:
            report.n_out_of_window += 1
            continue
        runs[(ev.route_id, ev.bus_run_id)].append(obs)

    streams = defaultdict(lambda: defaultdict(list))
    for (route, run), obs_list in runs.items():
        obs_list.sort(key=lambda o: o.stop_seq)
        last_ts = None
        for o in obs_list:
            if last_ts is not None and o.obs_ts < last_ts:
                report.n_overtakes += 1
                log.warning("run %s: stop %d arrives before the previous stop, dropped", run, o.stop_seq)
                continue
            last_ts = o.obs_ts
            streams[route][o.stop_seq].append(o)
            report.n_observations += 1
    for route in streams:
        for stop in streams[route]:
            streams[route][stop].sort(key=lambda o: (o.obs_ts, o.bus_run_id))
    return IngestResult({r: dict(s) for r, s in streams.items()}, report)


def ingest_csv(path, time_window=DEFAULT_WINDOW, utc_offset_s: int = 0) -> IngestResult:
    events, rejected = read_events(path, utc_offset_s)
    report = IngestReport(n_rows=len(events) + len(rejected), rejected=list(rejected))
    return ingest_events(events, time_window, utc_offset_s, report)


def write_observations(path, observations) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for o in observations:
            w.writerow([o.stop_seq, o.bus_run_id, o.delay_s, o.minute_of_day, o.obs_ts])


def read_observations(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in OBS_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"missing required column(s): {', '.join(missing)}")
        return [DelayObservation(int(r["stop_seq"]), r["bus_run_id"], int(r["delay_s"]),
                                 int(r["minute_of_day"]), int(r["obs_ts"])) for r in reader]


def write_events(path, events) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([e.route_id, e.bus_run_id, e.stop_seq, e.scheduled_ts, e.actual_ts])


def write_report(path, report: IngestReport) -> None:
    with open(path, "w") as fh:
        for k, v in report.as_dict().items():
            fh.write(f"{k}={v}\n")
        for lineno, reason in report.rejected:
            fh.write(f"rejected.line{lineno}={reason}\n")
