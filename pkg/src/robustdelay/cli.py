"""Command line pipeline: simulate, ingest, features, fit, predict, benchmark.

Exit status is 0 on success, 2 for usage, missing-file and schema problems and
1 for failures while running.  Errors are printed as a single line
``error kind=<usage|schema|runtime> message=<text>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import logging
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .features import (DEFAULT_DELTA, build_test_matrices, build_training_matrices, read_matrices,
                       train_days, write_matrices)
from .history import HistoryIndex
from .inference import KINDS, ChainDivergence, ModelSpec, fit, load_chain, save_chain
from .ingest import (SchemaError, format_window, ingest_csv, parse_window, read_observations,
                     write_events, write_observations, write_report)
from .priors import parse_prior_file
from .simulate import parse_scenario, simulate, write_scenario, write_truth

log = logging.getLogger("robustdelay")

DEFAULT_WINDOW_TEXT = "06:00-21:59"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_kv(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                out[k.strip()] = v.strip()
    return out


def _write_kv(path, d: dict) -> None:
    with open(path, "w") as fh:
        for k, v in d.items():
            fh.write(f"{k}={v}\n")


def _need_file(path, what) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _need_dir(path, what) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


def parse_horizons(text: str) -> list:
    """'0..20' or '0,5,10' or a mix like '0..5,10,20'."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 0 or max(out) > 120:
        raise UsageError(f"horizons must lie in 0..120: {text!r}")
    return sorted(set(out))


def _window(text):
    try:
        return parse_window(text)
    except ValueError as exc:
        raise UsageError(f"bad --window {text!r}: {exc}") from exc


# --------------------------------------------------------------------------


def cmd_simulate(args):
    sc = parse_scenario(_need_file(args.scenario, "scenario file"))
    if args.seed is not None:
        sc.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = simulate(sc)
    write_events(out / "events.csv", res.events)
    write_truth(out / "truth.csv", res.truth)
    write_scenario(out / "scenario.txt", sc)
    print(f"simulated {len(res.events)} arrivals on {sc.stops} stops over {7 * sc.weeks} days -> {out}")


def cmd_ingest(args):
    path = _need_file(args.events, "events file")
    window = _window(args.window)
    res = ingest_csv(path, window, args.utc_offset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for route in sorted(res.streams):
        write_observations(out / f"observations_{route}.csv", res.observations(route))
    write_report(out / "ingest_report.txt", res.report)
    _write_kv(out / "ingest.meta", {"window": format_window(window), "utc_offset_s": args.utc_offset,
                                    "routes": ",".join(sorted(res.streams))})
    rep = res.report.as_dict()
    print(" ".join(f"{k}={v}" for k, v in rep.items()))


def _observation_file(directory: Path, route):
    files = sorted(directory.glob("observations_*.csv"))
    if route is not None:
        f = directory / f"observations_{route}.csv"
        if not f.is_file():
            raise UsageError(f"no observations for route {route!r} in {directory}")
        return f
    if not files:
        raise UsageError(f"no observations_*.csv in {directory}")
    if len(files) > 1:
        raise UsageError(f"several routes in {directory}; pass --route")
    return files[0]


def _festivities(path):
    if path is None:
        return ()
    import datetime as dt
    with open(_need_file(path, "festivity file")) as fh:
        return tuple(dt.date.fromisoformat(line.strip()) for line in fh if line.strip())


def cmd_features(args):
    d = _need_dir(args.obs, "observation directory")
    obs_file = _observation_file(d, args.route)
    meta_in = _read_kv(d / "ingest.meta") if (d / "ingest.meta").is_file() else {}
    window = _window(args.window or meta_in.get("window", DEFAULT_WINDOW_TEXT))
    offset = int(meta_in.get("utc_offset_s", 0)) if args.utc_offset is None else args.utc_offset
    if not 0 < args.split < 1:
        raise UsageError("--split must lie strictly between 0 and 1")
    if not 0 <= args.delta <= 1:
        raise UsageError("--delta must lie in [0, 1]")
    if args.L < 1 or args.P < 1:
        raise UsageError("--L and --P must be >= 1")
    observations = read_observations(obs_file)
    history = HistoryIndex(observations, offset)
    if args.stop < 1 or args.stop > history.n_stops:
        raise UsageError(f"--stop {args.stop} outside 1..{history.n_stops}")
    fest = _festivities(args.festivities)
    kw = {"window": window, "festivities": fest}
    base = build_training_matrices(args.stop, history, args.L, args.P, args.delta, **kw)
    if len(base) == 0:
        raise SchemaError(f"no observations at stop {args.stop}")
    days_train = train_days(base, args.split)
    dm_days = (base.obs_ts + offset) // 86400
    train = base.subset(np.isin(dm_days, sorted(days_train)))
    test_all = build_test_matrices(args.stop, history, args.L, args.P, args.delta, args.horizon, **kw)
    t_days = (test_all.obs_ts + offset) // 86400
    test = test_all.subset(~np.isin(t_days, sorted(days_train)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrices(out / "train.csv", train)
    write_matrices(out / "test.csv", test)
    shutil.copyfile(obs_file, out / "history.csv")
    meta = {"stop": args.stop, "L": args.L, "P": args.P, "delta": args.delta, "split": args.split,
            "horizon": args.horizon, "window": format_window(window), "utc_offset_s": offset,
            "n_train": len(train), "n_test": len(test), "test_days": len(set(t_days.tolist()) - days_train),
            "festivities": ",".join(str(f) for f in fest)}
    _write_kv(out / "features.meta", meta)
    print(f"stop {args.stop}: {len(train)} training rows, {len(test)} test rows (horizon {args.horizon})")


class FeatureSet:
    def __init__(self, directory):
        d = _need_dir(directory, "feature directory")
        self.dir = d
        self.meta = _read_kv(_need_file(d / "features.meta", "features.meta"))
        try:
            self.L, self.P = int(self.meta["L"]), int(self.meta["P"])
            self.delta = float(self.meta["delta"])
            self.stop = int(self.meta["stop"])
        except KeyError as exc:
            raise SchemaError(f"features.meta lacks {exc}") from exc
        self.window = parse_window(self.meta.get("window", DEFAULT_WINDOW_TEXT))
        self.offset = int(self.meta.get("utc_offset_s", 0))
        m = {"utc_offset_s": self.offset}
        self.train = read_matrices(_need_file(d / "train.csv", "train.csv"), self.L, self.P, m)
        self.test = read_matrices(_need_file(d / "test.csv", "test.csv"), self.L, self.P, m)
        fest = self.meta.get("festivities", "")
        import datetime as dt
        self.festivities = tuple(dt.date.fromisoformat(s) for s in fest.split(",") if s)

    def history(self):
        return HistoryIndex(read_observations(_need_file(self.dir / "history.csv", "history.csv")), self.offset)

    def train_days(self):
        return set(((self.train.obs_ts + self.offset) // 86400).tolist())


def _spec(fs: FeatureSet, model, iters, burnin):
    if model not in KINDS:
        raise UsageError(f"unknown model {model!r}")
    if not 0 <= burnin < iters:
        raise UsageError("--burnin must be smaller than --iters")
    return ModelSpec(model, fs.L, fs.P, fs.delta, iterations=iters, burn_in=burnin)


def cmd_fit(args):
    fs = FeatureSet(args.features)
    spec = _spec(fs, args.model, args.iters, args.burnin)
    prior = parse_prior_file(_need_file(args.prior, "prior file")) if args.prior else None
    if len(fs.train) == 0:
        raise SchemaError("no training rows")
    chain = fit(spec, fs.train, prior, seed=args.seed)
    save_chain(chain, args.out)
    print(f"{spec.kind}: {len(chain)} draws, acceptance sigma={chain.acceptance_rate('sigma'):.3f} "
          f"nu={chain.acceptance_rate('nu'):.3f} -> {args.out}")


def cmd_predict(args):
    d = _need_dir(args.chain, "chain directory")
    _need_file(d / "chain.csv", "chain.csv")
    chain = load_chain(d)
    fs = FeatureSet(args.features)
    if (chain.spec.L, chain.spec.P) != (fs.L, fs.P):
        raise SchemaError("chain and feature files use different L, P")
    if not 0 < args.hpd < 1:
        raise UsageError("--hpd must lie strictly between 0 and 1")
    dm = fs.test if args.split == "test" else fs.train
    rng = np.random.default_rng(args.seed)
    point = chain.point_forecast(dm)
    logd = ev.predictive_logdensity(chain, dm)
    p_exceed = ev.tail_probability(chain, dm, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bus_run_id", "obs_ts", "y", "point", "hpd_lo", "hpd_hi", "p_exceed", "log_density"))
        for i in range(len(dm)):
            lo, hi = ev.PredictiveDensity.from_chain(chain, dm, i).hpd(args.hpd, rng, args.hpd_draws)
            w.writerow((dm.bus_run_id[i], int(dm.obs_ts[i]), repr(float(dm.y[i])), repr(float(point[i])),
                        repr(lo), repr(hi), repr(float(p_exceed[i])), repr(float(logd[i]))))
    report = ev.evaluate(chain, fs.train, fs.test)
    ev.write_eval_report(out / "eval_report.csv", [report])
    _write_kv(out / "predict.meta", {"threshold": args.threshold, "hpd": args.hpd, "split": args.split,
                                     "seed": args.seed, "rows": len(dm)})
    print(ev.format_table([report]))


def _bench_one(job):
    fs_dir, model, iters, burnin, seed, horizons = job
    fs = FeatureSet(fs_dir)
    spec = _spec(fs, model, iters, burnin)
    chain = fit(spec, fs.train, None, seed=seed)
    report = ev.evaluate(chain, fs.train, fs.test)
    curve = []
    if horizons:
        history = fs.history()
        all_days = set(history.blocks)
        test_days = all_days - fs.train_days()
        curve = ev.horizon_curve(chain, history, fs.stop, horizons, test_days, seed=seed,
                                 window=fs.window, festivities=fs.festivities)
    return model, report, curve


def cmd_benchmark(args):
    fs = FeatureSet(args.features)
    models = list(KINDS) if args.models == "all" else [m.strip() for m in args.models.split(",")]
    for m in models:
        _spec(fs, m, args.iters, args.burnin)
    horizons = parse_horizons(args.horizons) if args.horizons else []
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(args.seed).spawn(len(models))]
    jobs = [(str(fs.dir), m, args.iters, args.burnin, s, horizons) for m, s in zip(models, seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [r for _, r, _ in results]
    ev.write_benchmark(out / "benchmark.csv", reports)
    ev.write_eval_report(out / "eval_report.csv", reports)
    ev.write_horizon_curves(out / "horizon_lppd.csv", {m: c for m, _, c in results})
    by_stop = {}
    for o in read_observations(fs.dir / "history.csv"):
        by_stop.setdefault(o.stop_seq, []).append(o.delay_s)
    ev.write_moments(out / "moments.csv", ev.moment_profile(by_stop))
    _write_kv(out / "benchmark.meta", {"seed": args.seed, "models": ",".join(models), "iterations": args.iters,
                                       "burn_in": args.burnin, "horizons": ",".join(map(str, horizons)),
                                       **{f"seed_{m}": s for m, s in zip(models, seeds)}})
    print(ev.format_table(reports))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robustdelay", description="Robust Bayesian bus delay forecasting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a synthetic AVL event log")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ingest", help="events CSV -> per-route delay observations")
    s.add_argument("--events", required=True)
    s.add_argument("--window", default=DEFAULT_WINDOW_TEXT)
    s.add_argument("--utc-offset", type=int, default=0, help="local time offset in seconds")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("features", help="design matrices for one stop")
    s.add_argument("--obs", required=True)
    s.add_argument("--stop", type=int, required=True)
    s.add_argument("--route", default=None)
    s.add_argument("--L", type=int, default=2)
    s.add_argument("--P", type=int, default=3)
    s.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    s.add_argument("--split", type=float, default=0.8)
    s.add_argument("--horizon", type=int, default=0)
    s.add_argument("--window", default=None)
    s.add_argument("--utc-offset", type=int, default=None)
    s.add_argument("--festivities", default=None, help="file with one ISO date per line")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("fit", help="run the sampler for one model")
    s.add_argument("--features", required=True)
    s.add_argument("--model", required=True, choices=KINDS)
    s.add_argument("--iters", type=int, default=20000)
    s.add_argument("--burnin", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--prior", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predictive summaries from a stored chain")
    s.add_argument("--chain", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--hpd", type=float, default=0.90)
    s.add_argument("--threshold", type=float, default=60.0)
    s.add_argument("--split", choices=("train", "test"), default="test")
    s.add_argument("--hpd-draws", type=int, default=4000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("benchmark", help="fit and compare the seven models")
    s.add_argument("--features", required=True)
    s.add_argument("--models", default="all")
    s.add_argument("--horizons", default="0..20")
    s.add_argument("--iters", type=int, default=20000)
    s.add_argument("--burnin", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_benchmark)
    return p


def _fail(kind, message, code):
    text = " ".join(str(message).split())
    print(f"error kind={kind} message={text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except (SchemaError, FileNotFoundError) as exc:
        return _fail("schema", exc, 2)
    except ChainDivergence as exc:
        return _fail("runtime", exc, 1)
    except Exception as exc:  # noqa: BLE001 - single-line report for any runtime failure
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
