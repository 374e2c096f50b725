"""Parameter recovery of the univariate exponential fit over many simulated sessions."""
import argparse
import time

import numpy as np

from hawkes_exec.calibrate import FitConfig, fit_mle
from hawkes_exec.hawkes_core import HawkesSpec
from hawkes_exec.simulate import simulate_hawkes

ap = argparse.ArgumentParser()
ap.add_argument("--alpha", type=float, default=0.12)
ap.add_argument("--beta", type=float, default=0.40)
ap.add_argument("--events", type=float, default=5000, help="expected events per session")
ap.add_argument("--hours", type=float, default=8.0)
ap.add_argument("--seeds", type=int, default=50)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

T = args.hours * 3600
spec = HawkesSpec.univariate(args.alpha, args.beta, args.events / T * (1 - args.alpha / args.beta))
rows = []
t0 = time.perf_counter()
for child in np.random.SeedSequence(args.seed).spawn(args.seeds):
    ev = simulate_hawkes(spec, (0.0, T), child)
    f = fit_mle(ev, FitConfig())
    rows.append((len(ev[0]), f.spec.kernel.alpha[0, 0], f.spec.kernel.beta[0, 0], f.spec.baselines[0].rate, f.converged))
r = np.array(rows, dtype=float)
truth = (args.alpha, args.beta, spec.baselines[0].rate)
print(f"{args.seeds} sessions, mean {r[:, 0].mean():.0f} events, {time.perf_counter() - t0:.1f} s, {int(r[:, 4].sum())} converged")
for name, col, true in zip(("alpha", "beta", "base rate"), (1, 2, 3), truth):
    rel = np.abs(r[:, col] - true) / true
    print(f"{name:>9}: true {true:.4g}  median fit {np.median(r[:, col]):.4g}  median rel err {np.median(rel):.3f}  90% {np.quantile(rel, .9):.3f}")
print(f"branching ratio: median {np.median(r[:, 1] / r[:, 2]):.3f} (true {args.alpha / args.beta:.3f})")
