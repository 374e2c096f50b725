"""Optimal vs benchmarks on simulated sessions, across the scale on the state variables and the mark size."""
import argparse
import time

import numpy as np

from hawkes_exec.backtest import run_comparison
from hawkes_exec.impact import ImpactParams
from hawkes_exec.pipeline import open_close_profile, resilience, seasonal_spec, simulate_sessions, strategy_set

ap = argparse.ArgumentParser()
ap.add_argument("--sessions", type=int, default=100)
ap.add_argument("--x0", type=float, default=250.0)
ap.add_argument("--scales", type=float, nargs="+", default=[0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0])
ap.add_argument("--marks", type=float, nargs="+", default=[1.0, 0.1])
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

T = 8 * 3600.0
t0 = time.perf_counter()
print(f"{'m1':>5} {'scale':>8} {'r_TWAP mean':>12} {'CI':>24} {'r_VWAP mean':>12} {'r_OW mean':>10} {'Optimal cost':>13}")
for m1 in args.marks:
    spec = seasonal_spec(m1=m1, T=T)
    params = ImpactParams(resilience(spec, T), 0.5, open_close_profile(T, 0.01, 0.04), open_close_profile(T, 0.5, 2.0), m1)
    markets = simulate_sessions(spec, T, args.sessions, args.seed)
    for s in args.scales:
        sset = strategy_set(spec, params, args.x0, T, s)
        rep = run_comparison(sset.builders(["optimal", "twap", "vwap", "ow"]), markets, params, "Optimal", ["TWAP", "VWAP", "OW"])
        rel = rep.summary(n_boot=2000, seed=args.seed)["relative"]
        ci = f"[{rel['TWAP']['ci_low']:.3g}, {rel['TWAP']['ci_high']:.3g}]"
        print(
            f"{m1:5g} {s:8g} {rel['TWAP']['mean']:12.4g} {ci:>24} {rel['VWAP']['mean']:12.4g} "
            f"{rel['OW']['mean']:10.4g} {rep.totals('Optimal').mean():13.4g}"
        )
print(f"{time.perf_counter() - t0:.0f} s")
