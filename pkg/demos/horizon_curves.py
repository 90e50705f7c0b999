"""Test LPPD against forecast horizon for three models (text table, no plotting).

Short-run features fade as the horizon grows, so the t and Gaussian models drift
toward their steady-state (calendar only) predictions while the random walk keeps
losing accuracy.  Takes a few minutes.
"""
from robustdelay import evaluation as ev
from robustdelay.features import build_training_matrices, split_by_day
from robustdelay.history import HistoryIndex
from robustdelay.inference import ModelSpec, fit
from robustdelay.simulate import ordering_scenario, simulate

STOP = 8
HORIZONS = [0, 1, 2, 5, 10, 20, 60, 120]

sc = ordering_scenario(weeks=4)
sim = simulate(sc)
history = HistoryIndex(sim.observations, sc.utc_offset_s, sc.stops)
train, test = split_by_day(build_training_matrices(STOP, history), 0.8)
test_days = set((test.obs_ts // 86400).tolist())

curves = {}
for i, kind in enumerate(("rw", "gauss-hetero", "t-full")):
    chain = fit(ModelSpec(kind, iterations=2000, burn_in=1000), train, seed=i)
    curves[kind] = ev.horizon_curve(chain, history, STOP, HORIZONS, test_days, seed=i)

print(f"{'h':>4}" + "".join(f"{k:>16}" for k in curves) + f"{'t-full steady':>16}")
for j, h in enumerate(HORIZONS):
    cells = "".join(f"{curves[k][j]['lppd']:16.1f}" for k in curves)
    print(f"{h:4d}{cells}{curves['t-full'][j]['lppd_steady']:16.1f}")
