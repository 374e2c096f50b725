import numpy as np
import pytest
from hypothesis import given, strategies as st

from hawkes_exec.backtest import (
    CoverageError,
    bootstrap_ci,
    market_price_path,
    propagator_cost_double_sum,
    propagator_cost_recursive,
    relative_improvement,
    run_comparison,
    shortfall,
)
from hawkes_exec.exec_engine import Schedule, ow, twap
from hawkes_exec.impact import ImpactParams, StepProfile


def _sched(trades, grid=None, x0=None):
    trades = np.asarray(trades, float)
    grid = np.arange(1, trades.size + 1, dtype=float) if grid is None else grid
    return Schedule(grid, trades, -trades.sum() if x0 is None else x0, "s")


def test_half_spread_cost():
    p = ImpactParams(rho=1.0, mu=0.5, spread=2.0)
    c = shortfall(_sched([-7.0]), p)
    assert c.spread_cost == 7.0
    assert c.temporary_cost == 0.0


def test_permanent_only_two_trades():
    p = ImpactParams(rho=3.0, mu=1.0)
    x1, x2 = -2.0, -5.0
    c = shortfall(_sched([x1, x2]), p)
    assert c.propagator_cost == pytest.approx(x1 * x2 + (x1**2 + x2**2) / 2)
    assert c.propagator_cost == pytest.approx((x1 + x2) ** 2 / 2)


def test_zero_schedule_costs_nothing():
    p = ImpactParams(rho=1.0, mu=0.5, eta=0.3, spread=1.0)
    c = shortfall(Schedule(np.array([1.0, 2.0]), np.zeros(2), 0.0, "z"), p)
    assert c.total == 0.0


@given(st.integers(0, 2**32 - 1))
def test_double_sum_equals_recursion(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 200))
    grid = np.cumsum(rng.uniform(1, 100, n))
    x = rng.normal(0, 5, n)
    p = ImpactParams(rho=rng.uniform(1e-4, 1e-1), mu=rng.uniform(0, 1))
    a = propagator_cost_double_sum(grid, x, p)
    b = propagator_cost_recursive(grid, x, p)
    assert b == pytest.approx(a, rel=1e-8, abs=1e-10)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(1e-3, 10))
def test_permanent_only_volume_invariance(x, rho):
    x = np.asarray(x)
    x0 = -x.sum()
    p = ImpactParams(rho=rho, mu=1.0)
    a = shortfall(_sched(x, x0=x0), p).propagator_cost
    b = shortfall(_sched(np.r_[np.zeros(x.size - 1), x.sum()], x0=x0), p).propagator_cost
    assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_relative_improvement():
    assert relative_improvement(100.0, 70.0) == pytest.approx(0.30)
    assert relative_improvement(5.0, 5.0) == 0.0
    assert np.isnan(relative_improvement(0.0, 1.0))


@given(st.floats(1, 1e4), st.floats(0, 1e4), st.floats(1e-3, 1e3))
def test_relative_improvement_scale_invariant(b, s, c):
    assert relative_improvement(c * b, c * s) == pytest.approx(relative_improvement(b, s), rel=1e-12, abs=1e-12)


def test_spread_coverage_checked():
    p = ImpactParams(rho=1.0, spread=StepProfile(np.array([0.0, 10.0]), np.array([np.nan])))
    with pytest.raises(CoverageError):
        shortfall(_sched([-1.0]), p)


def test_market_flow_cost_sign():
    p = ImpactParams(rho=1e-3, mu=0.5, m1=1.0)
    sch = twap(10.0, (0.0, 600.0))
    buys, sells = np.array([1.0, 2.0, 3.0]), np.array([])
    up = shortfall(sch, p, market=(buys, sells))
    # buy flow lifts the price while we sell: the market term lowers the cost
    assert up.flow_cost < 0
    path = market_price_path(buys, sells, np.array([0.5, 2.5, 1e7]), p)
    assert path[0] == 0.0
    assert path[-1] == pytest.approx(3 * 0.5)


def test_identical_strategies_zero_r():
    p = ImpactParams(rho=1e-3, mu=0.5, eta=0.01, spread=0.5)
    strats = {"A": lambda m: twap(50.0, (0.0, 600.0)), "B": lambda m: twap(50.0, (0.0, 600.0))}
    rng = np.random.default_rng(0)
    markets = [(np.sort(rng.uniform(0, 600, 20)), np.sort(rng.uniform(0, 600, 20))) for _ in range(5)]
    rep = run_comparison(strats, markets, p, "A", ["B"])
    np.testing.assert_array_equal(rep.r("B"), 0.0)
    s = rep.summary(n_boot=200)
    assert s["relative"]["B"]["mean"] == 0.0
    assert rep.table()[0]["mean_pct"] == 0.0


def test_comparison_machinery():
    p = ImpactParams(rho=2.0 / 600.0, mu=0.5, eta=0.01, spread=0.2)
    strats = {"OW": lambda m: ow(50.0, (0.0, 600.0), p.rho), "TWAP": lambda m: twap(50.0, (0.0, 600.0))}
    markets = [(np.array([]), np.array([]))] * 3
    rep = run_comparison(strats, markets, p, "OW", ["TWAP"], "P")
    assert rep.runs == [0, 1, 2]
    grid = np.arange(1, 11) * 60.0
    curve = rep.difference_curve("TWAP", grid)
    assert curve.shape == (10,)
    assert curve[-1] == pytest.approx(rep.r("TWAP")[0])
    with pytest.raises(ValueError):
        run_comparison(strats, markets, p, "VWAP", ["TWAP"])


def test_bootstrap_ci_covers_mean():
    x = np.random.default_rng(2).normal(1.0, 1.0, 400)
    lo, hi = bootstrap_ci(x, n_boot=2000, seed=1)
    assert lo < x.mean() < hi
    assert bootstrap_ci(x, n_boot=2000, seed=1) == (lo, hi)
