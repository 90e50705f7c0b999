"""Simulate a short route, fit the robust model at one stop and look at its forecasts.

Run with ``python3 demos/forecast_walkthrough.py``; takes about a minute.
"""
import numpy as np

from robustdelay import evaluation as ev
from robustdelay.features import build_test_matrices, build_training_matrices, split_by_day
from robustdelay.history import HistoryIndex
from robustdelay.inference import ModelSpec, fit
from robustdelay.simulate import SimScenario, simulate

STOP = 6

sc = SimScenario(stops=10, weeks=3, seed=21)
sim = simulate(sc)
history = HistoryIndex(sim.observations, sc.utc_offset_s, sc.stops)
train, test = split_by_day(build_training_matrices(STOP, history), 0.8)
print(f"{len(sim.events)} simulated arrivals; stop {STOP}: {len(train)} train / {len(test)} test rows")

chains = {}
for kind in ("gauss-hetero", "t-full"):
    chains[kind] = fit(ModelSpec(kind, iterations=3000, burn_in=1500), train, seed=1)
print(ev.format_table([ev.evaluate(c, train, test, with_if=False) for c in chains.values()]))

chain = chains["t-full"]
for name in ("mu.Delay_l1_p1", "sigma.AbsDiff_l1_p1", "nu.intercept"):
    x = chain.parameter(name)
    print(f"{name:22s} mean {x.mean():9.4f}  IF {ev.inefficiency_factor(x):5.1f}  truth {dict(sim.truth)[name]}")
print("acceptance:", {b: round(chain.acceptance_rate(b), 3) for b in ("sigma", "nu")})

# one test arrival seen from 10, 5 and 1 minute out
row = int(np.argmax(test.y))
print(f"\nlargest test delay: {test.y[row]:.0f} s at {test.minute_of_day[row]} min")
for h in (10, 5, 1):
    dm = build_test_matrices(STOP, history, horizon_h=h)
    i = int(np.flatnonzero((dm.obs_ts == test.obs_ts[row]) & (dm.bus_run_id == test.bus_run_id[row]))[0])
    pd = ev.PredictiveDensity.from_chain(chain, dm, i)
    lo, hi = pd.hpd(0.90, np.random.default_rng(0))
    print(f"  h={h:2d} min  median {pd.quantile(0.5):7.1f}  90% HPD [{lo:7.1f}, {hi:7.1f}]"
          f"  P(late >= 60 s) {pd.sf(60.0)[0]:.3f}")

# heavy tails: odds of a 3-minute delay, robust vs Gaussian
p_t = ev.tail_probability(chains["t-full"], test, 180.0)
p_g = ev.tail_probability(chains["gauss-hetero"], test, 180.0)
ratio, flag = ev.odds_ratio_from_probs(p_t, p_g)
print(f"\nP(y >= 180) averaged over test rows: t-full {p_t.mean():.4f}, gauss-hetero {p_g.mean():.2e}, "
      f"observed {np.mean(test.y >= 180):.4f}")
print(f"median log10 odds ratio t-full / gauss-hetero: {np.median(np.log10(ratio[~flag])):.1f}")
