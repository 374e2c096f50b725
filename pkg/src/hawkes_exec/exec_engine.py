"""Closed-form optimal liquidation under Hawkes order flow and benchmark schedules.

Sign convention: ``X0 > 0`` is a long position to sell, trades are negative.
Buy programs use ``X0 < 0``; every schedule is linear in ``X0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events_io import VolumeProfile
from .hawkes_core import ExecState, SymmetricKernel, advance_exec_state, initial_exec_state
from .impact import ImpactParams

SERIES_CUT = 1e-6
POWER_CUT = 0.5


def _power_series(y: float, shift: int) -> float:
    """``sum_k (-y)^k / (k + shift)!`` to double precision."""
    term = 1.0 / math.factorial(shift)
    total = term
    k = 0
    while abs(term) > 1e-18 * abs(total):
        k += 1
        term *= -y / (k + shift)
        total += term
    return total


def zeta_omega(y: float) -> tuple[float, float]:
    """``zeta(y) = (1 - e^{-y}) / y`` and ``omega(y) = (e^{-y} - 1 + y) / y^2`` with their limits at 0.

    Below ``1e-6`` a quadratic series is exact to double precision; up to 0.5
    the full power series avoids the cancellation in ``e^{-y} - 1 + y``.
    """
    y = float(y)
    if y == 0.0:
        return 1.0, 0.5
    a = abs(y)
    if a < SERIES_CUT:
        return 1.0 - y / 2.0 + y * y / 6.0, 0.5 - y / 6.0 + y * y / 24.0
    if a < POWER_CUT:
        return _power_series(y, 1), _power_series(y, 2)
    em = math.expm1(-y)
    return -em / y, (em + y) / (y * y)


def zeta_omega_series(y: float) -> tuple[float, float]:
    """The three-term series alone."""
    return 1.0 - y / 2.0 + y * y / 6.0, 0.5 - y / 6.0 + y * y / 24.0


def kappa_coefficient(h: float, params: ImpactParams, sym: SymmetricKernel) -> float:
    """Coefficient of ``kappa`` in the optimal target at time-to-horizon ``h``."""
    rho, mu, eps = params.rho, params.mu, params.epsilon
    if not rho > 0:
        raise ValueError("rho must be positive")
    if eps >= 1.0:
        raise ValueError("mu = 1 leaves no transient impact; the target is undefined")
    rh = rho * h
    z, w = zeta_omega(h * sym.eta)
    return params.m1 * (2.0 + rh) / (2.0 * rho * (1.0 - eps)) * (1.0 + rh / (2.0 + rh) * (z + mu * rh * w))


def optimal_target(
    D: float,
    kappa: float,
    h: float,
    params: ImpactParams,
    sym: SymmetricKernel,
    scale: float = 1.0,
) -> float:
    """Optimal inventory ``X*`` given deviation ``D``, imbalance ``kappa`` and time-to-horizon ``h``.

    ``scale`` multiplies both state variables.
    """
    if h < 0:
        raise ValueError("time-to-horizon must be non-negative")
    if not params.rho > 0:
        raise ValueError("rho must be positive")
    if params.epsilon >= 1.0:
        raise ValueError("mu = 1 leaves no transient impact; the target is undefined")
    rh = params.rho * h
    return -(1.0 + rh) / (1.0 - params.epsilon) * scale * D + kappa_coefficient(h, params, sym) * scale * kappa


def transient_deviation(times, signs, t: float, params: ImpactParams) -> float:
    """``sum_{tau <= t} dN_tau [G(t - tau) - G(inf)]`` for marks of size ``m1``."""
    times = np.asarray(times, dtype=float)
    signs = np.asarray(signs, dtype=float)
    sel = times <= t
    return float(params.m1 * (1.0 - params.mu) * np.sum(signs[sel] * np.exp(-params.rho * (t - times[sel]))))


def transient_path(times, signs, grid, params: ImpactParams) -> np.ndarray:
    """Transient deviation at each (sorted) grid time by exponential recursion."""
    times = np.asarray(times, dtype=float)
    signs = np.asarray(signs, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ValueError("jumps must be ordered")
    out = np.empty(grid.size)
    acc = 0.0
    tl = grid[0] if grid.size else 0.0
    if times.size:
        tl = min(tl, times[0])
    j = 0
    c = params.m1 * (1.0 - params.mu)
    for k, t in enumerate(grid):
        while j < times.size and times[j] <= t:
            acc = acc * math.exp(-params.rho * (times[j] - tl)) + signs[j]
            tl = times[j]
            j += 1
        out[k] = c * acc * math.exp(-params.rho * (t - tl))
    return out


# --------------------------------------------------------------------------
# schedules


@dataclass
class Schedule:
    grid: np.ndarray
    trades: np.ndarray
    x0: float
    label: str
    t_begin: float = 0.0
    kappa: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.trades = np.asarray(self.trades, dtype=float)
        if self.grid.shape != self.trades.shape:
            raise ValueError("grid and trades must align")
        if self.grid.size and (np.any(np.diff(self.grid) <= 0) or self.grid[0] < self.t_begin):
            raise ValueError("grid must be increasing and start at or after t_begin")
        if abs(self.x0 + self.trades.sum()) > 1e-9 * max(1.0, abs(self.x0)):
            raise ValueError("schedule does not liquidate the position")

    @property
    def targets(self) -> np.ndarray:
        """Inventory after each trade; exactly zero at the final point."""
        x = self.x0 + np.cumsum(self.trades)
        if x.size:
            x[-1] = 0.0
        return x

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])


def default_grid(t_begin: float, t_end: float, step: float = 60.0) -> np.ndarray:
    n = int(round((t_end - t_begin) / step))
    if n < 1 or abs(t_begin + n * step - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("step must divide the window")
    return t_begin + step * np.arange(1, n + 1)


def _close(trades: np.ndarray, x0: float) -> np.ndarray:
    trades[-1] = -x0 - trades[:-1].sum()
    return trades


def twap(x0: float, window: tuple[float, float], grid=None) -> Schedule:
    t0, T = window
    grid = default_grid(t0, T) if grid is None else np.asarray(grid, dtype=float)
    prev = np.concatenate([[t0], grid[:-1]])
    trades = -x0 * (grid - prev) / (T - t0)
    return Schedule(grid, _close(trades, x0), x0, "TWAP", t0)


def ow_inventory(x0: float, t, window, rho: float):
    """Inventory just after trading at ``t`` (``t < T``): ``x0 (1 + rho (T - t)) / (2 + rho T)``."""
    t0, T = window
    L = T - t0
    return x0 * (1.0 + rho * (T - np.asarray(t, dtype=float))) / (2.0 + rho * L)


def ow(x0: float, window: tuple[float, float], rho: float, grid=None) -> Schedule:
    """Blocks at both ends and a constant rate in between, accumulated on the grid."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    t0, T = window
    grid = default_grid(t0, T) if grid is None else np.asarray(grid, dtype=float)
    x_after = ow_inventory(x0, grid, window, rho)
    x_after[grid >= T] = 0.0
    x_prev = np.concatenate([[x0], x_after[:-1]])
    return Schedule(grid, _close(x_after - x_prev, x0), x0, "OW", t0)


def vwap(x0: float, profile: VolumeProfile, t_begin: float = 0.0) -> Schedule:
    n = profile.n_buckets
    grid = t_begin + profile.bucket_width * np.arange(1, n + 1)
    trades = -(x0 / n) * np.asarray(profile.factors, dtype=float)
    return Schedule(grid, _close(trades, x0), x0, "VWAP", t_begin)


@dataclass
class MarketState:
    D: float
    S: float
    exec: ExecState
    X: float

    def __post_init__(self):
        if not all(np.isfinite([self.D, self.S, self.X, self.exec.kappa, self.exec.gamma])):
            raise ValueError("market state must be finite")


def discretize_optimal(
    x0: float,
    window: tuple[float, float],
    params: ImpactParams,
    sym: SymmetricKernel,
    buys,
    sells,
    lam_inf_sum: float,
    scale: float = 1.0,
    grid=None,
) -> Schedule:
    """Optimal schedule on a grid, driven by realized buy/sell arrival times.

    The inventory is the OW path plus a dynamic part.  At each grid point the
    dynamic part jumps so that the optimal-target relation holds right after
    the trade, using the market deviation and imbalance (both scaled) and the
    transient deviation caused by the dynamic trades themselves.  With
    ``scale = 0`` the dynamic part stays at zero and the schedule is OW.
    The final grid point closes the residual.
    """
    if not 0.0 <= scale <= 1.0:
        raise ValueError("scale must lie in [0, 1]")
    t0, T = window
    grid = default_grid(t0, T) if grid is None else np.asarray(grid, dtype=float)
    buys = np.sort(np.asarray(getattr(buys, "times", buys), dtype=float))
    sells = np.sort(np.asarray(getattr(sells, "times", sells), dtype=float))
    rho, eps = params.rho, params.epsilon
    if eps >= 1.0:
        raise ValueError("mu = 1 leaves no transient impact; the target is undefined")

    jt = np.concatenate([buys, sells])
    js = np.concatenate([np.ones(buys.size), -np.ones(sells.size)])
    order = np.argsort(jt, kind="stable")
    d_mkt = transient_path(jt[order], js[order], grid, params)

    x_ow = ow_inventory(x0, grid, window, rho)
    x_ow[grid >= T] = 0.0
    state = initial_exec_state(sym, lam_inf_sum, t0)
    x_dyn = 0.0
    d_own = 0.0
    t_last = t0
    trades = np.empty(grid.size)
    kappas = np.empty(grid.size)
    x_prev_total = x0
    ib = isl = 0
    for k, t in enumerate(grid):
        nb = int(np.searchsorted(buys, t, side="right"))
        ns = int(np.searchsorted(sells, t, side="right"))
        state = advance_exec_state(state, sym, lam_inf_sum, t, buys[ib:nb], sells[isl:ns])
        ib, isl = nb, ns
        kappas[k] = state.kappa
        d_own *= math.exp(-rho * (t - t_last))
        t_last = t
        h = T - t
        if k < grid.size - 1 and h > 0:
            target = -(1.0 + rho * h) / (1.0 - eps) * d_own + optimal_target(d_mkt[k], state.kappa, h, params, sym, scale)
            xi_dyn = (target - x_dyn) / (2.0 + rho * h)
            x_dyn += xi_dyn
            d_own += (1.0 - eps) * xi_dyn
            x_now = x_ow[k] + x_dyn
        else:
            x_now = 0.0
        trades[k] = x_now - x_prev_total
        x_prev_total = x_now
    sched = Schedule(grid, _close(trades, x0), x0, f"Optimal(s={scale:g})", t0, kappas, d_mkt)
    return sched
