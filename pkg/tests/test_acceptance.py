"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances."""
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from hawkes_exec.backtest import propagator_cost_double_sum, propagator_cost_recursive, run_comparison, shortfall
from hawkes_exec.calibrate import FitConfig, fit_mle, grad_hessian, log_likelihood, log_likelihood_naive
from hawkes_exec.events_io import EventStream, Side
from hawkes_exec.exec_engine import Schedule, discretize_optimal, ow, twap, vwap, zeta_omega, zeta_omega_series
from hawkes_exec.gof import diagnostics, time_change_residuals
from hawkes_exec.hawkes_core import ConstantBaseline, HawkesSpec, KernelMatrix, PiecewiseBaseline, SplineBaseline
from hawkes_exec.impact import ImpactParams, QuoteSeries, build_ladder, fit_eta, time_weighted_bas, walk_book_cost
from hawkes_exec.pipeline import baseline_shape, open_close_profile, seasonal_spec, simulate_sessions, strategy_set
from hawkes_exec.simulate import simulate_hawkes

from test_calibrate import fd_gradient, fd_hessian
from test_impact import HAND_LADDERS

H = 3600.0
T8 = 8 * H
RESULTS = []


def record(capsys, number, ok, detail):
    line = f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def _stream(rng, n, T, side):
    t = np.unique(rng.uniform(0.0, T, n))
    return EventStream(side, t, (0.0, T))


def _random_spec(rng, P, T):
    a = rng.uniform(0.05, 0.4, (P, P)) / P
    b = rng.uniform(0.2, 3.0, (P, P))
    kind = rng.integers(3)
    bls = []
    for _ in range(P):
        if kind == 0:
            bls.append(ConstantBaseline(rng.uniform(0.1, 1.0)))
        elif kind == 1:
            bls.append(PiecewiseBaseline(tuple(np.linspace(0, T, 5)), tuple(rng.uniform(0.1, 1.0, 4))))
        else:
            bls.append(SplineBaseline(tuple(rng.normal(-1.0, 0.7, 10)), (0.0, T)))
    return HawkesSpec(KernelMatrix(a, b), tuple(bls))


def test_c01_likelihood_oracle(capsys):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        P = int(rng.integers(1, 3))
        T = 1000.0
        spec = _random_spec(rng, P, T)
        n = int(rng.integers(2, 2001))
        sizes = [n // P] * P
        ev = [_stream(rng, m, T, side) for m, side in zip(sizes, (Side.BUY, Side.SELL))]
        a, b = log_likelihood(spec, ev), log_likelihood_naive(spec, ev)
        worst = max(worst, abs(a - b) / abs(b))
    spec = _random_spec(np.random.default_rng(5), 2, 1000.0)
    ev = [_stream(rng, 1000, 1000.0, Side.BUY), _stream(rng, 1000, 1000.0, Side.SELL)]
    log_likelihood(spec, ev)
    reps = []
    for _ in range(5):
        t0 = time.perf_counter()
        log_likelihood(spec, ev)
        reps.append(time.perf_counter() - t0)
    ms = 1e3 * min(reps)
    ok = worst <= 1e-8 and ms < 50
    record(capsys, 1, ok, f"max rel |rec - naive| = {worst:.2e} (<= 1e-8); n=2000 recursive eval {ms:.2f} ms (< 50)")


def test_c02_derivatives(capsys):
    rng = np.random.default_rng(202)
    worst_g = worst_h = asym = 0.0
    for _ in range(50):
        P = int(rng.integers(1, 3))
        T = 40.0
        spec = _random_spec(rng, P, T)
        ev = [_stream(rng, int(rng.integers(5, 60)), T, side) for side in (Side.BUY, Side.SELL)[:P]]
        g, Hs = grad_hessian(spec, ev)
        gf, Hf = fd_gradient(spec, ev), fd_hessian(spec, ev)
        # relative to the component magnitude, floored at 1 for near-zero components
        worst_g = max(worst_g, float(np.max(np.abs(g - gf) / np.maximum(np.abs(g), 1.0))))
        worst_h = max(worst_h, float(np.max(np.abs(Hs - Hf) / np.maximum(np.abs(Hs), 1.0))))
        asym = max(asym, float(np.max(np.abs(Hs - Hs.T))))
    ok = worst_g < 1e-5 and worst_h < 1e-5 and asym == 0.0
    record(capsys, 2, ok, f"gradient err {worst_g:.2e}, Hessian err {worst_h:.2e} (< 1e-5); max |H - H^T| = {asym:.1e} (== 0)")


@pytest.mark.slow
def test_c03_recovery(capsys):
    alpha, beta = 0.12, 0.40
    base = 5000.0 / T8 * (1 - alpha / beta)
    spec = HawkesSpec.univariate(alpha, beta, base)
    t0 = time.perf_counter()
    ea, eb, br_ok, n_conv, counts = [], [], True, 0, []
    for child in np.random.SeedSequence(303).spawn(50):
        ev = simulate_hawkes(spec, (0.0, T8), child)
        counts.append(len(ev[0]))
        f = fit_mle(ev, FitConfig())
        a, b = f.spec.kernel.alpha[0, 0], f.spec.kernel.beta[0, 0]
        ea.append(abs(a - alpha) / alpha)
        eb.append(abs(b - beta) / beta)
        if f.converged:
            n_conv += 1
            br_ok &= a / b < 1
    dt = time.perf_counter() - t0
    ma, mb = float(np.median(ea)), float(np.median(eb))
    ok = ma <= 0.15 and mb <= 0.15 and br_ok and dt <= 300
    record(
        capsys, 3, ok,
        f"median rel err alpha {ma:.3f}, beta {mb:.3f} (<= 0.15); {n_conv}/50 converged, all alpha/beta < 1: {br_ok}; "
        f"mean events {np.mean(counts):.0f}; {dt:.1f} s (<= 300)",
    )


@pytest.mark.slow
def test_c04_residual_calibration(capsys):
    alpha, beta = 0.12, 0.40
    spec = HawkesSpec.univariate(alpha, beta, 5000.0 / T8 * (1 - alpha / beta))
    passes = rejects = 0
    n = 200
    for child in np.random.SeedSequence(404).spawn(n):
        (s,) = simulate_hawkes(spec, (0.0, T8), child)
        (r,) = time_change_residuals(spec, [s])
        passes += diagnostics(r, lags=100).ks[1] >= 0.05
        pois = HawkesSpec.univariate(0.0, 1.0, len(s) / T8)  # Poisson rate MLE
        (rp,) = time_change_residuals(pois, [s])
        rejects += diagnostics(rp, lags=100).ks[1] < 0.05
    ok = passes >= 0.9 * n and rejects >= 0.8 * n
    record(capsys, 4, ok, f"true spec KS p >= 0.05 in {100 * passes / n:.1f}% (>= 90); Poisson fit rejected in {100 * rejects / n:.1f}% (>= 80)")


@pytest.mark.slow
def test_c05_spline_shape(capsys):
    T = T8
    base = 0.06
    truth = lambda t: base * baseline_shape(t, T)
    edges = np.linspace(0, T, 8 * 60 + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    rates = truth(mids)
    spec = HawkesSpec.univariate(0.0, 1.0, PiecewiseBaseline(tuple(edges), tuple(rates)))
    grid = np.linspace(0, T, 4001)
    errs = []
    for child in np.random.SeedSequence(505).spawn(30):
        ev = simulate_hawkes(spec, (0.0, T), child)
        f = fit_mle(ev, FitConfig(baseline="spline", n_basis=10))
        fitted = f.spec.baselines[0](grid)
        tv = truth(grid)
        errs.append(math.sqrt(np.trapezoid((fitted - tv) ** 2, grid) / np.trapezoid(tv**2, grid)))
    med = float(np.median(errs))
    record(capsys, 5, med <= 0.15, f"median relative L2 error {med:.4f} (<= 0.15) over 30 seeds")


def test_c06_zeta_omega(capsys):
    worst = 0.0
    for y in (1e-8, 1e-6, 1e-4):
        for s in (1.0, -1.0):
            z, w = zeta_omega(s * y)
            zs, ws = zeta_omega_series(s * y)
            worst = max(worst, abs(z - zs), abs(w - ws))
    exact = zeta_omega(0.0) == (1.0, 0.5)
    record(capsys, 6, worst <= 1e-12 and exact, f"max |evaluator - series| = {worst:.2e} (<= 1e-12); zeta(0)=1, omega(0)=1/2 exact: {exact}")


def test_c07_degeneracies(capsys):
    spec = seasonal_spec()
    p = ImpactParams(rho=0.16075 / H, mu=0.5)
    from hawkes_exec.hawkes_core import constant_equivalent_sum, symmetric_reduction
    from hawkes_exec.simulate import simulate_market

    sym = symmetric_reduction(spec.kernel)
    lam = constant_equivalent_sum(spec, (0.0, T8))
    dev_s0 = 0.0
    ends = []
    for child in np.random.SeedSequence(707).spawn(20):
        b, s = simulate_market(spec, (0.0, T8), child)
        s0 = discretize_optimal(250.0, (0.0, T8), p, sym, b, s, lam, 0.0)
        s1 = discretize_optimal(250.0, (0.0, T8), p, sym, b, s, lam, 1.0)
        dev_s0 = max(dev_s0, float(np.max(np.abs(s0.targets - ow(250.0, (0.0, T8), p.rho).targets))))
        ends += [s0.targets[-1], s1.targets[-1]]
    dev_tw = float(np.max(np.abs(ow(250.0, (0.0, T8), 1e6 / H).targets - twap(250.0, (0.0, T8)).targets)))
    from hawkes_exec.pipeline import expected_volume_profile

    ends += [twap(250.0, (0.0, T8)).targets[-1], ow(250.0, (0.0, T8), p.rho).targets[-1],
             vwap(250.0, expected_volume_profile(spec, T8)).targets[-1]]
    zero = all(e == 0.0 for e in ends)
    ok = dev_s0 <= 1e-9 and dev_tw <= 1e-3 and zero
    record(capsys, 7, ok, f"s=0 vs OW max {dev_s0:.2e} MWh (<= 1e-9); OW(rho=1e6/h) vs TWAP {dev_tw:.2e} MWh (<= 1e-3); all end at 0: {zero}")


def test_c08_shortfall_oracle(capsys):
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 481))
        grid = np.sort(rng.choice(np.arange(1, 481) * 60.0, n, replace=False))
        x = rng.normal(0, 3, n)
        p = ImpactParams(rho=rng.uniform(1e-5, 1e-2), mu=rng.uniform(0, 1))
        a, b = propagator_cost_double_sum(grid, x, p), propagator_cost_recursive(grid, x, p)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    p1 = ImpactParams(rho=0.01, mu=1.0)
    costs = []
    for _ in range(20):
        n = int(rng.integers(1, 100))
        grid = np.sort(rng.choice(np.arange(1, 481) * 60.0, n, replace=False))
        x = rng.normal(0, 3, n)
        x[-1] = -250.0 - x[:-1].sum()
        costs.append(shortfall(Schedule(grid, x, 250.0, "r"), p1).total)
    spread = max(costs) - min(costs)
    ok = worst <= 1e-8 and spread <= 1e-9 * max(abs(c) for c in costs)
    record(capsys, 8, ok, f"max rel |double sum - recursion| = {worst:.2e} (<= 1e-8); mu=1 equal-volume cost spread {spread:.2e} (rel <= 1e-9)")


def c09_setup():
    """Fixed configuration: seasonal univariate market, hour-profiled impact, 250 MWh over 8 h."""
    spec = seasonal_spec(alpha=0.12, beta=0.40, base_rate=0.06, T=T8)
    from hawkes_exec.pipeline import resilience

    params = ImpactParams(
        rho=resilience(spec, T8),
        mu=0.5,
        eta=open_close_profile(T8, 0.01, 0.04),
        spread=open_close_profile(T8, 0.5, 2.0),
        m1=spec.m1,
    )
    return spec, params


@pytest.mark.slow
def test_c09_directional_backtest(capsys):
    spec, params = c09_setup()
    t0 = time.perf_counter()
    sset = strategy_set(spec, params, 250.0, T8, 1.0, 60.0)
    markets = simulate_sessions(spec, T8, 500, 909)
    rep = run_comparison(sset.builders(["optimal", "twap", "vwap", "ow"]), markets, params, "Optimal", ["TWAP", "VWAP", "OW"])
    summ = rep.summary(n_boot=10000, seed=909)["relative"]
    dt = time.perf_counter() - t0
    rt, rv = summ["TWAP"], summ["VWAP"]
    ok = rt["mean"] > 0 and rt["ci_low"] > 0 and rv["mean"] > 0 and rv["ci_low"] > 0 and dt <= 600
    record(
        capsys, 9, ok,
        f"r_TWAP mean {rt['mean']:.4g} CI [{rt['ci_low']:.4g}, {rt['ci_high']:.4g}]; "
        f"r_VWAP mean {rv['mean']:.4g} CI [{rv['ci_low']:.4g}, {rv['ci_high']:.4g}] (need > 0, CI excluding 0); {dt:.0f} s (<= 600)",
    )


def test_c10_impact_estimators(capsys):
    exact = all(walk_book_cost(build_ladder(lv), U) == float(e) for lv, U, e in HAND_LADDERS)
    rng = np.random.default_rng(1010)
    U = rng.uniform(1, 100, 10_000)
    C = 0.025 * U + rng.normal(0, 0.3, U.size)
    fit = fit_eta(U, C)
    z = abs(fit.eta - 0.025) / fit.se
    worst = 0.0
    for _ in range(100):
        ts = np.concatenate([[0.0], np.sort(rng.uniform(0, 3600, 200))])
        s = rng.uniform(0.1, 5.0, ts.size)
        q = QuoteSeries(ts, 50 - s / 2, 50 + s / 2)
        edges = np.unique(np.concatenate([[0.0, 3600.0], rng.uniform(0, 3600, int(rng.integers(1, 30)))]))
        fine = sum(time_weighted_bas(q, (a, b)) * (b - a) for a, b in zip(edges[:-1], edges[1:])) / 3600.0
        coarse = time_weighted_bas(q, (0.0, 3600.0))
        worst = max(worst, abs(fine - coarse) / coarse)
    ok = exact and z <= 3 and worst <= 1e-9
    record(capsys, 10, ok, f"20 hand ladders exact: {exact}; eta error {z:.2f} SE (<= 3); BAS partition err {worst:.1e} (<= 1e-9)")


@pytest.mark.slow
def test_c11_cli_determinism(capsys, tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(seasonal_spec(T=2 * H, base_rate=0.05).to_json())

    def pipeline(out):
        cmds = [
            ["simulate", "--spec", str(spec_path), "--window-hours", "2", "--n-products", "2", "--seed", "42", "--out", f"{out}/sim"],
            ["calibrate", "--trades", f"{out}/sim/trades.csv", "--baseline", "spline", "--gate-closure", "7200",
             "--window-hours", "2", "--out", f"{out}/cal"],
            ["gof", "--fits", f"{out}/cal/fits.json", "--trades", f"{out}/sim/trades.csv", "--gate-closure", "7200",
             "--window-hours", "2", "--seed", "42", "--out", f"{out}/gof"],
            ["strategy", "--fit", f"{out}/cal/fits.json", "--horizon", "2h", "--x0", "50", "--seed", "42", "--out", f"{out}/strat"],
            ["backtest", "--fits", f"{out}/cal/fits.json", "--horizon", "2h", "--x0", "50", "--seeds", "5", "--seed", "42",
             "--out", f"{out}/bt"],
            ["report", "--in", f"{out}/bt", "--out", f"{out}/rep"],
        ]
        for c in cmds:
            r = subprocess.run([sys.executable, "-W", "ignore", "-m", "hawkes_exec", *c], capture_output=True, text=True)
            assert r.returncode == 0, r.stderr

    pipeline(tmp_path / "run1")
    pipeline(tmp_path / "run2")
    files = sorted(p.relative_to(tmp_path / "run1") for p in (tmp_path / "run1").rglob("*") if p.suffix in (".csv", ".json"))
    same = [((tmp_path / "run1" / f).read_bytes() == (tmp_path / "run2" / f).read_bytes()) for f in files]
    record(capsys, 11, all(same), f"{sum(same)}/{len(files)} output files byte-identical across two CLI runs")
