"""Goodness-of-fit and stylized-fact diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .calibrate import excitation_sum, _stream_times
from .events_io import EventStream
from .hawkes_core import HawkesSpec
from .simulate import PricePath, simulate_hawkes


class DegenerateSeriesError(ValueError):
    pass


@dataclass(frozen=True)
class ResidualSeries:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0):
            raise ValueError("residuals must be non-negative")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def cumulative_compensator(spec: HawkesSpec, events, p: int, at: np.ndarray) -> np.ndarray:
    """``Lambda_p(t_begin, t)`` at sorted times ``at`` (left limits: events at ``t`` excluded)."""
    times, (t0, _) = _stream_times(events)
    a, b = spec.kernel.alpha, spec.kernel.beta
    at = np.ascontiguousarray(at, dtype=float)
    bl = spec.baselines[p]
    out = np.asarray(bl.cumulative(at), dtype=float) - float(np.asarray(bl.cumulative(np.array([t0])))[0])
    for s, src in enumerate(times):
        if src.size == 0:
            continue
        count = np.searchsorted(src, at, side="left")
        R = excitation_sum(at, src, b[p, s])
        out = out + a[p, s] / b[p, s] * (count - R)
    return out


def time_change_residuals(spec: HawkesSpec, events) -> list[ResidualSeries]:
    """Compensator increments between consecutive events, one series per component."""
    times, _ = _stream_times(events)
    if len(times) != spec.P:
        raise ValueError("stream count does not match the model components")
    out = []
    for p, t in enumerate(times):
        if t.size < 2:
            out.append(ResidualSeries(np.empty(0)))
            continue
        cum = cumulative_compensator(spec, events, p, t)
        out.append(ResidualSeries(np.clip(np.diff(cum), 0.0, None)))
    return out


def anderson_darling_exp(x) -> float:
    """A^2 against the fully specified Exp(1)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    i = np.arange(1, n + 1)
    log_f = np.log(-np.expm1(-x))
    log_sf = -x[::-1]
    return float(-n - np.sum((2 * i - 1) * (log_f + log_sf)) / n)


def ljung_box(x, lags: int = 100) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < lags + 1:
        raise ValueError(f"need at least {lags + 1} residuals for {lags} lags")
    d = x - x.mean()
    den = float(d @ d)
    if den <= 0 or not np.isfinite(den):
        raise DegenerateSeriesError("zero-variance series: Ljung-Box undefined")
    acf = np.array([d[k:] @ d[:-k] for k in range(1, lags + 1)]) / den
    q = n * (n + 2) * float(np.sum(acf**2 / (n - np.arange(1, lags + 1))))
    return q, float(stats.chi2.sf(q, lags))


def wasserstein_exp(x) -> float:
    """Exact ``int_0^inf |F_n(x) - (1 - e^{-x})| dx`` for a non-negative sample."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")

    def piece(c, a, b):
        # signed int_a^b (c - G)
        return (c - 1.0) * (b - a) + np.exp(-a) - np.exp(-b)

    total = x[0] + math.expm1(-x[0])  # c = 0 on [0, x_1]
    c = np.arange(1, n) / n
    a, b = x[:-1], x[1:]
    cross = np.clip(-np.log1p(-c), a, b)
    total += float(np.sum(np.abs(piece(c, a, cross)) + np.abs(piece(c, cross, b))))
    total += math.exp(-x[-1])  # c = 1 tail
    return float(total)


def wasserstein_two_sample(x, y) -> float:
    return float(stats.wasserstein_distance(np.asarray(x, float), np.asarray(y, float)))


@dataclass(frozen=True)
class DiagnosticsReport:
    ks: tuple
    ad: float
    ljung_box: tuple
    wasserstein: float
    aic: float | None = None
    n: int = 0
    mean: float = float("nan")

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "ks_stat": self.ks[0],
            "ks_p": self.ks[1],
            "ad_stat": self.ad,
            "lb_q": self.ljung_box[0],
            "lb_p": self.ljung_box[1],
            "lb_lags": self.ljung_box[2],
            "wasserstein": self.wasserstein,
            "aic": self.aic,
        }


def diagnostics(residuals, lags: int = 100, aic: float | None = None) -> DiagnosticsReport:
    x = np.asarray(getattr(residuals, "values", residuals), dtype=float)
    if x.size == 0:
        raise ValueError("empty residual series")
    ks = stats.kstest(x, "expon", method="asymp")
    q, p = ljung_box(x, lags)
    return DiagnosticsReport(
        ks=(float(ks.statistic), float(ks.pvalue)),
        ad=anderson_darling_exp(x),
        ljung_box=(q, p, int(lags)),
        wasserstein=wasserstein_exp(x),
        aic=aic,
        n=int(x.size),
        mean=float(x.mean()),
    )


def ks_two_sample(sim, emp) -> tuple[float, float]:
    sim = np.asarray(getattr(sim, "values", sim), dtype=float)
    emp = np.asarray(getattr(emp, "values", emp), dtype=float)
    if sim.size == 0 or emp.size == 0:
        raise ValueError("both samples must be non-empty")
    r = stats.ks_2samp(sim, emp, method="asymp")
    return float(r.statistic), float(r.pvalue)


def qq_points(residuals) -> tuple[np.ndarray, np.ndarray]:
    """(theoretical Exp(1) quantiles at (i - 1/2)/n, sorted residuals)."""
    x = np.sort(np.asarray(getattr(residuals, "values", residuals), dtype=float))
    n = x.size
    return -np.log1p(-(np.arange(1, n + 1) - 0.5) / n), x


def simulated_ks(spec: HawkesSpec, events, seed=0, sims: int = 1, match: str = "time") -> list[list[float]]:
    """Two-sample KS p-values between simulated and observed inter-arrival times.

    Returns ``[component][simulation]`` p-values.  With ``match="time"`` each
    simulation spans the observed window; with ``match="count"`` each simulated
    component is cut to the observed event count (the window still bounds it).
    """
    if match not in ("time", "count"):
        raise ValueError(f"match must be 'time' or 'count', got {match!r}")
    times, window = _stream_times(events)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    out = [[] for _ in times]
    for child in ss.spawn(sims):
        sim = simulate_hawkes(spec, window, child)
        for p, (s, e) in enumerate(zip(sim, times)):
            st = s.times[: len(e)] if match == "count" else s.times
            gs, ge = np.diff(st), np.diff(e)
            out[p].append(ks_two_sample(gs, ge)[1] if gs.size and ge.size else float("nan"))
    return out


def ks_pass_table(pvalues: dict, level: float = 0.05) -> dict:
    """Per key: share of p >= level (percent) and mean/std of p."""
    table = {}
    for key, ps in pvalues.items():
        p = np.asarray([v for v in ps if np.isfinite(v)], dtype=float)
        if p.size == 0:
            table[key] = {"n": 0, "pct_pass": float("nan"), "mean_p": float("nan"), "std_p": float("nan")}
            continue
        table[key] = {
            "n": int(p.size),
            "pct_pass": float(100.0 * np.mean(p >= level)),
            "mean_p": float(p.mean()),
            "std_p": float(p.std()),
        }
    return table


@dataclass(frozen=True)
class StepCurve:
    edges: np.ndarray
    values: np.ndarray  # events per second


def empirical_intensity(events, dt: float) -> StepCurve:
    """Counts per ``[t, t + dt)`` bin divided by bin length (events per second).

    A list of streams (days) is averaged bin by bin; all must share a window.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    streams = [events] if isinstance(events, EventStream) else list(events)
    t0, t1 = streams[0].window
    if any(s.window != (t0, t1) for s in streams):
        raise ValueError("streams must share a window to be averaged")
    nb = int(math.ceil((t1 - t0) / dt - 1e-12))
    edges = np.minimum(t0 + dt * np.arange(nb + 1), t1)
    edges[-1] = t1
    counts = np.zeros(nb)
    for s in streams:
        idx = np.clip(np.floor((s.times - t0) / dt).astype(int), 0, nb - 1)
        counts += np.bincount(idx, minlength=nb)
    counts /= len(streams)
    return StepCurve(edges, counts / np.diff(edges))


def signature_surface(path: PricePath, deltas: Sequence[float], horizons: Sequence[float]) -> np.ndarray:
    """``C[h, d] = sum_{k=1}^{floor(T_h / delta_d)} (S_{k delta} - S_{(k-1) delta})^2``, times from the path start."""
    deltas = np.asarray(deltas, dtype=float)
    horizons = np.asarray(horizons, dtype=float)
    if np.any(deltas <= 0) or np.any(horizons <= 0):
        raise ValueError("grids must be positive")
    t0 = path.window[0]
    if np.any(horizons > path.window[1] - t0 + 1e-9):
        raise ValueError("horizon beyond the path window")
    out = np.zeros((horizons.size, deltas.size))
    for j, d in enumerate(deltas):
        kmax = int(math.floor(horizons.max() / d + 1e-9))
        s = path.value(t0 + d * np.arange(kmax + 1))
        inc2 = np.cumsum(np.diff(s) ** 2)
        for i, T in enumerate(horizons):
            k = int(math.floor(T / d + 1e-9))
            out[i, j] = inc2[k - 1] if k > 0 else 0.0
    return out
