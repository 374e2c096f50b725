"""Execution-cost primitives estimated from limit-order-book snapshots."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .events_io import QuoteSeries, Side, Snapshot, DataWarning

DEFAULT_PENALTY_TICKS = 2.0
BAS_INTERVAL = 6.0
BANDWIDTH_FLOOR = 1e-6
MIN_SNAPSHOTS = 30


class BookError(ValueError):
    pass


# --------------------------------------------------------------------------
# ladders


@dataclass(frozen=True)
class BookLadder:
    offsets: np.ndarray  # ticks from the best non-empty level
    volumes: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        vol = np.asarray(self.volumes, dtype=float)
        if off.size == 0 or off.shape != vol.shape:
            raise BookError("ladder needs matching, non-empty offsets and volumes")
        if off[0] != 0 or np.any(np.diff(off) <= 0):
            raise BookError("offsets must start at 0 and increase strictly")
        if np.any(vol <= 0):
            raise BookError("ladder volumes must be positive")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "volumes", vol)

    @property
    def cum(self) -> np.ndarray:
        return np.cumsum(self.volumes)

    @property
    def depth(self) -> float:
        return float(self.volumes.sum())

    def __len__(self):
        return self.offsets.size


def build_ladder(levels, side: Side | str | None = None) -> BookLadder:
    """Keep the levels with positive volume; offsets rebased to the first of them.

    ``levels`` is a Snapshot, or ``(offset_ticks, volume)`` pairs in level order.
    """
    if isinstance(levels, Snapshot):
        if side is not None:
            want = Side.parse(side) if isinstance(side, str) else side
            if want != levels.side:
                raise BookError("snapshot side does not match")
        pairs = list(zip(levels.offsets, levels.volumes))
    else:
        pairs = [(float(o), float(v)) for o, v in levels]
    kept = [(o, v) for o, v in pairs if v > 0]
    if not kept:
        raise BookError("empty book: no level with positive volume")
    kept.sort()
    off = np.array([o for o, _ in kept])
    return BookLadder(off - off[0], np.array([v for _, v in kept]))


def walk_book_cost(
    ladder: BookLadder,
    U: float,
    tick_size: float = 1.0,
    penalty_ticks: float = DEFAULT_PENALTY_TICKS,
) -> float:
    """Per-unit cost of a market order of size ``U`` consuming the ladder level by level.

    Volume beyond the book is priced at the deepest offset plus ``penalty_ticks``.
    """
    if not U > 0:
        raise ValueError("order size must be positive")
    remaining = U
    total = 0.0
    for off, vol in zip(ladder.offsets, ladder.volumes):
        take = min(vol, remaining)
        total += take * off
        remaining -= take
        if remaining <= 0:
            break
    if remaining > 0:
        total += remaining * (ladder.offsets[-1] + penalty_ticks)
    return total / U * tick_size


def two_level_cost(ladder: BookLadder, U: float, tick_size: float = 1.0, penalty_ticks: float = DEFAULT_PENALTY_TICKS) -> float:
    """Per-unit cost when the filled cumulative volume ``m_j`` is priced at ``dP_j`` and the rest at ``dP_{j+1}``."""
    m = ladder.cum
    off = ladder.offsets
    if U <= m[0]:
        return 0.0
    j = int(np.searchsorted(m, U, side="left")) - 1  # m_j < U <= m_{j+1}
    nxt = off[j + 1] if j + 1 < off.size else off[-1] + penalty_ticks
    return (m[j] * off[j] + (U - m[j]) * nxt) / U * tick_size


# --------------------------------------------------------------------------
# KDE approximation


def silverman_bandwidth(x: np.ndarray, d: int = 2) -> float:
    x = x[np.isfinite(x)]
    if x.size < 2:
        return 0.0
    sd = float(np.std(x, ddof=1))
    if sd == 0:
        return 0.0
    h = sd * (4.0 / (d + 2)) ** (1.0 / (d + 4)) * x.size ** (-1.0 / (d + 4))
    return max(h, BANDWIDTH_FLOOR * sd)


@dataclass
class LadderSample:
    """Cumulative depths padded with +inf and per-level mean offsets for a set of snapshots."""

    cum: np.ndarray  # [n_snapshots, n_levels]
    offsets: np.ndarray  # [n_levels]

    @classmethod
    def from_ladders(cls, ladders: Sequence[BookLadder]) -> "LadderSample":
        K = max(len(l) for l in ladders)
        cum = np.full((len(ladders), K), np.inf)
        off_sum = np.zeros(K)
        off_cnt = np.zeros(K)
        for i, l in enumerate(ladders):
            cum[i, : len(l)] = l.cum
            off_sum[: len(l)] += l.offsets
            off_cnt[: len(l)] += 1
        return cls(cum, off_sum / off_cnt)


def approx_cost(
    ladders: Sequence[BookLadder] | LadderSample,
    U: float,
    tick_size: float = 1.0,
    penalty_ticks: float = DEFAULT_PENALTY_TICKS,
    min_samples: int = MIN_SNAPSHOTS,
) -> float:
    """Expected two-level per-unit cost under a Gaussian product-kernel KDE of ``(m_j, m_{j+1})``.

    Offsets are the per-level means.  A dimension with zero spread uses its
    empirical indicator instead of a kernel (with a warning).
    """
    sample = ladders if isinstance(ladders, LadderSample) else LadderSample.from_ladders(ladders)
    n, K = sample.cum.shape
    if n < min_samples:
        raise BookError(f"need at least {min_samples} snapshots, got {n}")
    if not U > 0:
        raise ValueError("order size must be positive")
    off = sample.offsets
    total = 0.0
    degenerate = False
    for j in range(K):
        x = sample.cum[:, j]
        y = sample.cum[:, j + 1] if j + 1 < K else np.full(n, np.inf)
        fin_x = np.isfinite(x)
        if not fin_x.any():
            continue
        hx = silverman_bandwidth(x)
        hy = silverman_bandwidth(y)
        degenerate |= hx == 0 or (hy == 0 and np.isfinite(y).sum() > 1)
        xs = x[fin_x]
        ys = y[fin_x]
        if hx > 0:
            z = (U - xs) / hx
            px = ndtr(z)
            ex = xs * px - hx * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)  # E[X 1{X<U}]
        else:
            px = (xs < U).astype(float)
            ex = xs * px
        fin_y = np.isfinite(ys)
        py = np.ones_like(ys)
        if hy > 0:
            py[fin_y] = 1.0 - ndtr((U - ys[fin_y]) / hy)
        else:
            py[fin_y] = (ys[fin_y] >= U).astype(float)
        nxt = np.where(fin_y, off[j + 1] if j + 1 < K else 0.0, off[j] + penalty_ticks)
        contrib = (off[j] * ex + nxt * (U * px - ex)) * py
        total += float(contrib.sum())
    if degenerate:
        warnings.warn("zero-variance depth: KDE replaced by empirical frequencies", DataWarning, stacklevel=2)
    return total / n / U * tick_size


class EtaFit(NamedTuple):
    eta: float
    sigma: float
    se: float = float("nan")


def fit_eta(sizes, costs) -> EtaFit:
    """OLS of cost on size through the origin; ``sigma`` is the residual SD."""
    U = np.asarray(sizes, dtype=float)
    C = np.asarray(costs, dtype=float)
    if U.shape != C.shape:
        raise ValueError("sizes and costs must align")
    if np.unique(U).size < 2:
        raise ValueError("need at least two distinct sizes (rank-deficient design)")
    suu = float(U @ U)
    eta = float(U @ C) / suu
    resid = C - eta * U
    dof = max(U.size - 1, 1)
    sigma = math.sqrt(float(resid @ resid) / dof)
    return EtaFit(eta, sigma, sigma / math.sqrt(suu))


# --------------------------------------------------------------------------
# spreads


def time_weighted_bas(quotes: QuoteSeries, interval: tuple[float, float]) -> float:
    """Duration-weighted spread on ``interval``; quotes hold on ``[t_j, t_{j+1})``."""
    a, b = map(float, interval)
    if not b > a:
        raise ValueError("empty interval")
    ts = quotes.timestamps
    sp = quotes.spread
    i0 = int(np.searchsorted(ts, a, side="right")) - 1
    if i0 < 0:
        raise BookError(f"no quote valid at interval start {a}")
    i1 = int(np.searchsorted(ts, b, side="left"))
    starts = np.concatenate([[a], ts[i0 + 1 : i1]])
    ends = np.concatenate([ts[i0 + 1 : i1], [b]])
    vals = sp[i0:i1]
    dur = ends - starts
    ok = np.isfinite(vals)
    if not ok.any() or dur[ok].sum() <= 0:
        raise BookError("no two-sided quote coverage on the interval")
    return float(np.sum(vals[ok] * dur[ok]) / dur[ok].sum())


def bas_profile(quotes: QuoteSeries, t0: float, t1: float, step: float = BAS_INTERVAL) -> "StepProfile":
    edges = np.append(np.arange(t0, t1, step), t1)
    vals = []
    for a, b in zip(edges[:-1], edges[1:]):
        try:
            vals.append(time_weighted_bas(quotes, (a, b)))
        except BookError:
            vals.append(np.nan)
    vals = np.asarray(vals)
    if np.all(np.isnan(vals)):
        raise BookError("no quote coverage on the window")
    # carry the last covered value into uncovered intervals
    idx = np.where(np.isfinite(vals), np.arange(vals.size), 0)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.argmax(np.isfinite(vals)))
    vals = np.where(np.arange(vals.size) < first, vals[first], vals[idx])
    return StepProfile(edges, vals)


# --------------------------------------------------------------------------
# profiles and parameters


@dataclass(frozen=True)
class StepProfile:
    """Right-open piecewise-constant function; values beyond the edges extend flat."""

    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if e.size != v.size + 1 or np.any(np.diff(e) <= 0):
            raise ValueError("need increasing edges with len(values) + 1 entries")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        i = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.values.size - 1)
        out = self.values[i]
        return out if np.ndim(out) else float(out)

    @classmethod
    def constant(cls, value: float, t0: float = 0.0, t1: float = 1.0) -> "StepProfile":
        return cls(np.array([t0, t1]), np.array([value]))

    def to_dict(self):
        return {"edges": self.edges.tolist(), "values": self.values.tolist()}


def _as_profile(v) -> StepProfile | float:
    if isinstance(v, StepProfile):
        return v
    if isinstance(v, dict):
        return StepProfile(np.asarray(v["edges"]), np.asarray(v["values"]))
    return float(v)


def evaluate_profile(p, t):
    if isinstance(p, StepProfile):
        return p(t)
    return np.full(np.shape(t), float(p)) if np.ndim(t) else float(p)


@dataclass(frozen=True)
class ImpactParams:
    rho: float
    mu: float = 0.5
    eta: object = 0.0  # float or StepProfile (EUR/MWh^2)
    spread: object = 0.0  # float or StepProfile (EUR)
    m1: float = 1.0
    epsilon: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.mu)
        elif self.epsilon != self.mu:
            raise ValueError("epsilon must equal mu")
        object.__setattr__(self, "eta", _as_profile(self.eta))
        object.__setattr__(self, "spread", _as_profile(self.spread))
        etas = self.eta.values if isinstance(self.eta, StepProfile) else np.array([self.eta])
        if np.any(etas < 0):
            raise ValueError("eta must be non-negative")
        if not self.m1 > 0:
            raise ValueError("m1 must be positive")

    def propagator(self, u):
        """``G(u) = (1 - mu) exp(-rho u) + mu``."""
        u = np.asarray(u, dtype=float)
        return (1.0 - self.mu) * np.exp(-self.rho * u) + self.mu

    def eta_at(self, t):
        return evaluate_profile(self.eta, t)

    def spread_at(self, t):
        return evaluate_profile(self.spread, t)


def resilience_from_kernel(alpha: float, beta: float, T: float) -> float:
    """``(1 - alpha/beta) / (T/2)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    br = alpha / beta
    if not 0.0 <= br < 1.0:
        raise ValueError(f"branching ratio {br} outside [0, 1)")
    return (1.0 - br) / (T / 2.0)


# --------------------------------------------------------------------------
# estimation over snapshot collections


def hour_bin(t: float, gate: float, width: float = 3600.0) -> int:
    """Index of the ``width`` bin counted back from gate closure (0 = last bin)."""
    return int(max(math.floor((gate - t) / width - 1e-12), 0))


def estimate_impact(
    snapshots: Iterable[Snapshot],
    quotes: dict[str, QuoteSeries] | None,
    sizes: Sequence[float],
    gate: float | dict,
    book_side: Side = Side.BUY,
    tick_size: float = 1.0,
    penalty_ticks: float = DEFAULT_PENALTY_TICKS,
    bin_width: float = 3600.0,
    min_samples: int = MIN_SNAPSHOTS,
) -> dict[tuple[str, int], dict]:
    """``{(product, bin): {eta, sigma, se, mean_bas, n_snapshots}}`` from KDE costs at each size.

    ``book_side`` is the side whose liquidity is consumed (bids for a seller).
    """
    groups: dict[tuple[str, int], list[BookLadder]] = {}
    for s in snapshots:
        if s.side != book_side:
            continue
        g = gate[s.product_id] if isinstance(gate, dict) else gate
        try:
            lad = build_ladder(s)
        except BookError:
            continue
        groups.setdefault((s.product_id, hour_bin(s.time, g, bin_width)), []).append(lad)
    out = {}
    for key in sorted(groups):
        lads = groups[key]
        if len(lads) < min_samples:
            warnings.warn(f"{key}: only {len(lads)} snapshots, bin skipped", DataWarning, stacklevel=2)
            continue
        sample = LadderSample.from_ladders(lads)
        costs = [approx_cost(sample, u, tick_size, penalty_ticks, min_samples) for u in sizes]
        fit = fit_eta(sizes, costs)
        prod, b = key
        mean_bas = float("nan")
        if quotes and prod in quotes:
            g = gate[prod] if isinstance(gate, dict) else gate
            lo, hi = g - (b + 1) * bin_width, g - b * bin_width
            try:
                mean_bas = time_weighted_bas(quotes[prod], (max(lo, quotes[prod].timestamps[0]), hi))
            except (BookError, ValueError):
                pass
        out[key] = {
            "eta": fit.eta,
            "sigma": fit.sigma,
            "se": fit.se,
            "mean_bas": mean_bas,
            "n_snapshots": len(lads),
            "costs": [float(c) for c in costs],
        }
    return out


def synthetic_snapshots(
    rng: np.random.Generator,
    times: np.ndarray,
    depth: Callable[[float], float],
    product_id: str = "P",
    side: Side = Side.BUY,
    n_levels: int = 10,
    p_empty: float = 0.2,
) -> list[Snapshot]:
    """Random ladders whose mean level volume is ``depth(t)``; some levels left empty."""
    snaps = []
    for t in times:
        d = depth(float(t))
        vol = rng.gamma(2.0, d / 2.0, size=n_levels)
        vol[1:][rng.random(n_levels - 1) < p_empty] = 0.0
        snaps.append(Snapshot(product_id, float(t), side, list(map(float, range(n_levels))), list(map(float, vol))))
    return snaps


def synthetic_quotes(
    rng: np.random.Generator,
    t0: float,
    t1: float,
    spread: Callable[[float], float],
    rate: float = 0.2,
    mid: float = 100.0,
    product_id: str = "P",
) -> QuoteSeries:
    """Quote updates at Poisson times with spreads ``spread(t) * U(0.5, 1.5)``."""
    n = rng.poisson(rate * (t1 - t0))
    ts = np.concatenate([[t0], np.sort(rng.uniform(t0, t1, n))])
    s = np.array([spread(t) for t in ts]) * rng.uniform(0.5, 1.5, ts.size)
    return QuoteSeries(ts, mid - s / 2, mid + s / 2, product_id)
