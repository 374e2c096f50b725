"""Execution-shortfall accounting and strategy comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .exec_engine import Schedule
from .impact import ImpactParams


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class CostBreakdown:
    propagator_cost: float
    spread_cost: float
    temporary_cost: float
    flow_cost: float = 0.0
    per_step: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def total(self) -> float:
        return self.propagator_cost + self.spread_cost + self.temporary_cost + self.flow_cost

    def to_dict(self) -> dict:
        return {
            "propagator_cost": self.propagator_cost,
            "spread_cost": self.spread_cost,
            "temporary_cost": self.temporary_cost,
            "flow_cost": self.flow_cost,
            "total": self.total,
        }


def propagator_cost_double_sum(grid, trades, params: ImpactParams) -> float:
    """``sum_k xi_k sum_{k' < k} G(t_k - t_k') xi_k' + sum_k xi_k^2 / 2``."""
    t = np.asarray(grid, dtype=float)
    x = np.asarray(trades, dtype=float)
    lag = t[:, None] - t[None, :]
    G = np.where(lag > 0, params.propagator(np.where(lag > 0, lag, 0.0)), 0.0)
    return float(x @ G @ x + 0.5 * x @ x)


def _propagator_steps(t, x, params: ImpactParams) -> np.ndarray:
    """Per-trade propagator cost by exponential recursion over the grid."""
    rho, mu = params.rho, params.mu
    out = np.empty(x.size)
    transient = 0.0
    permanent = 0.0
    for k in range(x.size):
        if k:
            transient = (transient + x[k - 1]) * math.exp(-rho * (t[k] - t[k - 1]))
            permanent += x[k - 1]
        out[k] = x[k] * ((1.0 - mu) * transient + mu * permanent) + 0.5 * x[k] * x[k]
    return out


def propagator_cost_recursive(grid, trades, params: ImpactParams) -> float:
    return float(_propagator_steps(np.asarray(grid, float), np.asarray(trades, float), params).sum())


def market_price_path(buys, sells, grid, params: ImpactParams) -> np.ndarray:
    """Mid-price move from other participants: ``m1 sum_{tau <= t} dN_tau G(t - tau)``."""
    buys = np.asarray(getattr(buys, "times", buys), dtype=float)
    sells = np.asarray(getattr(sells, "times", sells), dtype=float)
    jt = np.concatenate([buys, sells])
    js = np.concatenate([np.ones(buys.size), -np.ones(sells.size)])
    order = np.argsort(jt, kind="stable")
    jt, js = jt[order], js[order]
    grid = np.asarray(grid, dtype=float)
    out = np.empty(grid.size)
    trans = 0.0
    perm = 0.0
    tl = jt[0] if jt.size else 0.0
    j = 0
    for k, t in enumerate(grid):
        while j < jt.size and jt[j] <= t:
            trans = trans * math.exp(-params.rho * (jt[j] - tl)) + js[j]
            perm += js[j]
            tl = jt[j]
            j += 1
        out[k] = params.m1 * ((1.0 - params.mu) * trans * math.exp(-params.rho * (t - tl)) + params.mu * perm)
    return out


def shortfall(schedule: Schedule, params: ImpactParams, market=None, method: str = "recursive") -> CostBreakdown:
    """Cost of a schedule relative to the initial mid-price.

    ``market`` is an optional ``(buys, sells)`` pair whose flow moves the mid
    price; its contribution is ``flow_cost``.
    """
    t, x = schedule.grid, schedule.trades
    if method == "recursive":
        steps_prop = _propagator_steps(t, x, params)
        prop = float(steps_prop.sum())
    elif method == "double_sum":
        prop = propagator_cost_double_sum(t, x, params)
        steps_prop = _propagator_steps(t, x, params)
    else:
        raise ValueError(f"unknown method {method!r}")
    s = np.asarray(params.spread_at(t), dtype=float)
    if np.any(~np.isfinite(s)):
        raise CoverageError("spread profile does not cover every trade time")
    eta = np.asarray(params.eta_at(t), dtype=float)
    steps_spread = np.abs(x) * s / 2.0
    steps_temp = eta * x * x
    if market is not None:
        steps_flow = x * market_price_path(market[0], market[1], t, params)
    else:
        steps_flow = np.zeros_like(x)
    return CostBreakdown(
        prop,
        float(steps_spread.sum()),
        float(steps_temp.sum()),
        float(steps_flow.sum()),
        steps_prop + steps_spread + steps_temp + steps_flow,
    )


def relative_improvement(d_bench: float, d_strat: float) -> float:
    """``(D_bench - D_strat) / D_bench``; NaN when the benchmark cost is zero."""
    if d_bench == 0:
        return float("nan")
    return (d_bench - d_strat) / d_bench


def bootstrap_ci(values, level: float = 0.95, n_boot: int = 10000, seed=0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(n_boot, v.size))
    means = v[idx].mean(axis=1)
    lo = (1.0 - level) / 2.0
    return float(np.quantile(means, lo)), float(np.quantile(means, 1.0 - lo))


@dataclass
class BacktestReport:
    strategies: list
    costs: dict  # (run, strategy) -> CostBreakdown
    runs: list
    target: str
    benchmarks: list
    product_id: str = ""

    def totals(self, strategy: str) -> np.ndarray:
        return np.array([self.costs[(r, strategy)].total for r in self.runs])

    def r(self, bench: str, strat: str | None = None) -> np.ndarray:
        strat = strat or self.target
        return np.array(
            [relative_improvement(self.costs[(r, bench)].total, self.costs[(r, strat)].total) for r in self.runs]
        )

    def summary(self, n_boot: int = 10000, seed: int = 0) -> dict:
        out = {"product_id": self.product_id, "n_runs": len(self.runs), "target": self.target, "strategies": {}, "relative": {}}
        for s in self.strategies:
            tot = self.totals(s)
            out["strategies"][s] = {"mean_cost": float(tot.mean()), "std_cost": float(tot.std())}
        for b in self.benchmarks:
            r = self.r(b)
            fin = r[np.isfinite(r)]
            lo, hi = bootstrap_ci(fin, n_boot=n_boot, seed=seed)
            out["relative"][b] = {
                "mean": float(fin.mean()) if fin.size else float("nan"),
                "std": float(fin.std()) if fin.size else float("nan"),
                "ci_low": lo,
                "ci_high": hi,
                "n_missing": int(r.size - fin.size),
            }
        return out

    def table(self) -> list[dict]:
        """Rows of mean +/- std relative improvement (percent) per benchmark."""
        rows = []
        for b in self.benchmarks:
            r = self.r(b)
            fin = r[np.isfinite(r)]
            rows.append(
                {
                    "product": self.product_id,
                    "benchmark": b,
                    "mean_pct": 100 * float(fin.mean()) if fin.size else float("nan"),
                    "std_pct": 100 * float(fin.std()) if fin.size else float("nan"),
                }
            )
        return rows

    def difference_curve(self, bench: str, grid: np.ndarray) -> np.ndarray:
        """Mean over runs of ``(cum cost bench - cum cost target) / total bench`` at each grid time."""
        curves = []
        for r in self.runs:
            cb, cs = self.costs[(r, bench)], self.costs[(r, self.target)]
            if cb.per_step is None or cs.per_step is None or cb.total == 0:
                continue
            curves.append((np.cumsum(cb.per_step) - np.cumsum(cs.per_step)) / cb.total)
        return np.mean(curves, axis=0) if curves else np.full(len(grid), np.nan)


def run_comparison(
    strategies: Mapping[str, Callable[[tuple], Schedule]],
    markets: Iterable[tuple],
    params: ImpactParams,
    target: str,
    benchmarks: Sequence[str] = ("TWAP", "VWAP"),
    product_id: str = "",
) -> BacktestReport:
    """Evaluate each strategy on each market ``(buys, sells)``; schedules may depend on the market."""
    costs = {}
    runs = []
    names = list(strategies)
    if target not in names or any(b not in names for b in benchmarks):
        raise ValueError("target and benchmarks must be among the strategies")
    for i, mkt in enumerate(markets):
        runs.append(i)
        x0 = None
        for name in names:
            sch = strategies[name](mkt)
            if x0 is None:
                x0 = sch.x0
            elif abs(sch.x0 - x0) > 1e-12:
                raise ValueError("strategies must share X0")
            costs[(i, name)] = shortfall(sch, params, market=mkt)
    return BacktestReport(names, costs, runs, target, list(benchmarks), product_id)
