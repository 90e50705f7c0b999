import csv
from collections import Counter
from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from robustdelay import ingest
from robustdelay.ingest import AvlEvent, DelayObservation, SchemaError

HEADER = "route_id,bus_run_id,stop_seq,scheduled_ts,actual_ts\n"
DAY0 = 1483920000  # 2017-01-09 00:00 UTC, a Monday


def _write(tmp_path, body, name="events.csv"):
    p = tmp_path / name
    p.write_text(body)
    return p


def test_delay_is_exact_subtraction():
    ev = AvlEvent("89", "r1", 3, DAY0 + 10 * 3600 + 4 * 60, DAY0 + 10 * 3600 + 5 * 60 + 30)
    obs = ingest.compute_delay(ev)
    assert obs.delay_s == 90
    early = ingest.compute_delay(AvlEvent("89", "r1", 3, DAY0 + 100, DAY0 + 40))
    assert early.delay_s == -60


def test_on_time_is_zero():
    assert ingest.compute_delay(AvlEvent("89", "r", 1, DAY0 + 500, DAY0 + 500)).delay_s == 0


def test_minute_of_day_matches_datetime_arithmetic():
    ts = DAY0 + 6 * 3600 + 30
    d = datetime.fromtimestamp(ts, tz=timezone.utc)
    oracle = (d.hour * 3600 + d.minute * 60 + d.second) // 60 + 1
    assert ingest.minute_of_day(ts) == oracle == 361


def test_minute_of_day_respects_offset():
    ts = DAY0 + 5 * 3600
    assert ingest.minute_of_day(ts, 3600) == 361


def test_weekday_monday():
    assert ingest.weekday_of(DAY0) == 1
    assert ingest.weekday_of(DAY0 + 6 * 86400 + 10) == 7


def test_window_filter(tmp_path):
    rows = [("89", "a", 8, "2017-01-09T05:29:00", "2017-01-09T05:30:00"),
            ("89", "b", 8, "2017-01-09T07:00:00", "2017-01-09T07:01:00"),
            ("89", "c", 8, "2017-01-09T20:58:00", "2017-01-09T20:59:10")]
    p = _write(tmp_path, HEADER + "".join(",".join(map(str, r)) + "\n" for r in rows))
    res = ingest.ingest_csv(p, ingest.parse_window("06:00-21:00"))
    assert len(res.streams["89"][8]) == 2
    assert res.report.n_out_of_window == 1


def test_empty_file(tmp_path):
    res = ingest.ingest_csv(_write(tmp_path, ""))
    assert res.streams == {} and res.report.n_observations == 0
    res = ingest.ingest_csv(_write(tmp_path, HEADER, "h.csv"))
    assert res.streams == {} and res.report.n_rows == 0


def test_duplicates_keep_first(tmp_path):
    body = HEADER + "".join([
        f"89,r1,1,{DAY0 + 25000},{DAY0 + 25010}\n",
        f"89,r1,1,{DAY0 + 25000},{DAY0 + 25999}\n",
        f"89,r1,2,{DAY0 + 25100},{DAY0 + 25120}\n",
        f"89,r2,1,{DAY0 + 25400},{DAY0 + 25400}\n",
        f"89,r1,2,{DAY0 + 25100},{DAY0 + 25150}\n",
    ])
    p = _write(tmp_path, body)
    with open(p) as fh:
        counts = Counter((r["bus_run_id"], r["stop_seq"]) for r in csv.DictReader(fh))
    res = ingest.ingest_csv(p)
    obs = res.observations()
    assert len(obs) == len(counts)
    assert res.report.n_duplicates == sum(c - 1 for c in counts.values())
    first = [o for o in obs if o.bus_run_id == "r1" and o.stop_seq == 1][0]
    assert first.delay_s == 10


def test_missing_column_is_fatal(tmp_path):
    p = _write(tmp_path, "route_id,bus_run_id,stop_seq,actual_ts\n89,r,1,5\n")
    with pytest.raises(SchemaError):
        ingest.ingest_csv(p)


def test_malformed_timestamps_are_reported(tmp_path):
    body = HEADER + (f"89,r1,1,{DAY0 + 25000},{DAY0 + 25010}\n"
                     f"89,r1,2,,{DAY0 + 25100}\n"
                     f"89,r1,3,{DAY0 + 25200},12x\n")
    res = ingest.ingest_csv(_write(tmp_path, body))
    assert res.report.n_observations == 1
    assert [ln for ln, _ in res.report.rejected] == [3, 4]


def test_iso_and_epoch_columns_auto_detected(tmp_path):
    body = HEADER + f"89,r1,1,2017-01-09T07:00:00,{DAY0 + 7 * 3600 + 42}\n"
    obs = ingest.ingest_csv(_write(tmp_path, body)).observations()
    assert obs[0].delay_s == 42


def test_iso_naive_uses_offset(tmp_path):
    body = HEADER + "89,r1,1,2017-01-09T08:00:00,2017-01-09T08:00:30\n"
    obs = ingest.ingest_csv(_write(tmp_path, body), utc_offset_s=3600).observations()
    assert obs[0].obs_ts == DAY0 + 7 * 3600 + 30
    assert obs[0].minute_of_day == 8 * 60 + 1


def test_unsorted_input_is_sorted(tmp_path):
    body = HEADER + (f"89,r2,1,{DAY0 + 26000},{DAY0 + 26000}\n"
                     f"89,r1,1,{DAY0 + 25000},{DAY0 + 25000}\n")
    stream = ingest.ingest_csv(_write(tmp_path, body)).streams["89"][1]
    assert [o.bus_run_id for o in stream] == ["r1", "r2"]


def test_overtake_dropped_with_warning(tmp_path, caplog):
    body = HEADER + (f"89,r1,1,{DAY0 + 25000},{DAY0 + 25100}\n"
                     f"89,r1,2,{DAY0 + 25100},{DAY0 + 25050}\n"
                     f"89,r1,3,{DAY0 + 25200},{DAY0 + 25200}\n")
    res = ingest.ingest_csv(_write(tmp_path, body))
    assert res.report.n_overtakes == 1
    assert [o.stop_seq for o in res.observations()] == [1, 3]
    assert "dropped" in caplog.text


def test_parse_window_and_clock():
    assert ingest.parse_clock("06:00") == 361
    assert ingest.parse_window("06:00-21:59") == (361, 1320)
    assert ingest.format_window((361, 1320)) == "06:00-21:59"
    with pytest.raises(ValueError):
        ingest.parse_window("10:00-09:00")


def test_stop_is_one_based():
    with pytest.raises(ValueError):
        ingest.Stop("89", 0)


event_rows = st.lists(
    st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(1, 6), st.integers(-600, 900),
              st.integers(0, 86399)),
    max_size=30)


@given(event_rows)
def test_observation_roundtrip_and_invariants(tmp_path_factory, rows):
    events = [(i + 2, AvlEvent("89", run, stop, DAY0 + t - d, DAY0 + t)) for i, (run, stop, d, t) in enumerate(rows)]
    res = ingest.ingest_events(events, (1, 1440))
    obs = res.observations() if res.streams else []
    for o in obs:
        assert 1 <= o.minute_of_day <= 1440
    per_run = {}
    for o in sorted(obs, key=lambda o: (o.bus_run_id, o.stop_seq)):
        per_run.setdefault(o.bus_run_id, []).append(o)
    for lst in per_run.values():
        stops = [o.stop_seq for o in lst]
        assert stops == sorted(set(stops))
        ts = [o.obs_ts for o in lst]
        assert ts == sorted(ts)
    path = tmp_path_factory.mktemp("rt") / "obs.csv"
    ingest.write_observations(path, obs)
    assert ingest.read_observations(path) == obs


def test_events_roundtrip(tmp_path):
    evs = [AvlEvent("89", "r1", 1, DAY0 + 25000, DAY0 + 25030), AvlEvent("89", "r1", 2, DAY0 + 25100, DAY0 + 25090)]
    p = tmp_path / "e.csv"
    ingest.write_events(p, evs)
    events, rejected = ingest.read_events(p)
    assert [e for _, e in events] == evs and rejected == []


def test_observation_file_schema(tmp_path):
    p = _write(tmp_path, "stop_seq,bus_run_id,delay_s\n1,a,3\n")
    with pytest.raises(SchemaError):
        ingest.read_observations(p)
