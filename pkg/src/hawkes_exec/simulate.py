"""Ogata thinning for exponential Hawkes processes and tick price paths."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .events_io import EventStream, Side, jitter_ties, DataWarning
from .hawkes_core import HawkesSpec, SplineBaseline

log = logging.getLogger(__name__)


class BoundViolation(AssertionError):
    pass


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


def _segments(spec: HawkesSpec, t0: float, t1: float):
    """Merged segment edges on ``[t0, t1]`` and per-component baseline maxima on each."""
    edges = [np.array([t0, t1])]
    for bl in spec.baselines:
        if isinstance(bl, SplineBaseline):
            e, _ = bl._seg
            edges.append(e[(e > t0) & (e < t1)])
        else:
            k = bl.knots(t0, t1)
            edges.append(k)
    edges = np.unique(np.concatenate(edges))
    ub = np.array([[bl.upper_bound(a, b) for a, b in zip(edges[:-1], edges[1:])] for bl in spec.baselines])
    return edges, ub


def _scalar_eval(bl):
    if bl.kind == "constant":
        r = bl.rate
        return lambda t: r
    if bl.kind == "spline":
        return bl.rate_at
    return bl


@dataclass
class ThinningStats:
    proposals: int = 0
    accepted: int = 0
    max_ratio: float = 0.0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")


def simulate_hawkes(
    spec: HawkesSpec,
    window: tuple[float, float],
    seed=0,
    max_events: int | None = None,
    product_id: str = "",
    sides: tuple = (Side.BUY, Side.SELL),
    stats: ThinningStats | None = None,
) -> tuple[EventStream, ...]:
    """Exact simulation on ``window``; returns one EventStream per component.

    The dominating rate is the excitation at the current time (which can only
    decay until the next accepted event) plus each baseline's maximum on the
    current segment.  When ``max_events`` is given the simulation stops at
    that many events and the streams' window ends at the last one.
    """
    spec.kernel.check_stable()
    t0, t1 = map(float, window)
    rng = make_rng(seed)
    P = spec.P
    a = spec.kernel.alpha.tolist()
    b = spec.kernel.beta.tolist()
    edges, ub = _segments(spec, t0, t1)
    ub = ub.tolist()
    nseg = edges.size - 1
    evals = [_scalar_eval(bl) for bl in spec.baselines]
    S = [[0.0] * P for _ in range(P)]
    out = [[] for _ in range(P)]
    st = stats if stats is not None else ThinningStats()
    t = t0
    tcur = t0
    k = 0
    n = 0
    stop = t1
    while k < nseg:
        exc = 0.0
        for p in range(P):
            for m in range(P):
                if S[p][m]:
                    exc += a[p][m] * S[p][m] * math.exp(-b[p][m] * (t - tcur))
        M = exc + sum(ub[p][k] for p in range(P))
        t_new = t + rng.exponential(1.0 / M)
        if t_new >= edges[k + 1]:
            t = float(edges[k + 1])
            k += 1
            continue
        lam = []
        for p in range(P):
            v = evals[p](t_new)
            for m in range(P):
                if S[p][m]:
                    v += a[p][m] * S[p][m] * math.exp(-b[p][m] * (t_new - tcur))
            lam.append(v)
        tot = sum(lam)
        st.proposals += 1
        st.max_ratio = max(st.max_ratio, tot / M)
        if tot > M * (1 + 1e-12):
            raise BoundViolation(f"intensity {tot} exceeds dominating rate {M} at t={t_new}")
        u = rng.random() * M
        t = t_new
        if u >= tot:
            continue
        comp = 0
        acc = lam[0]
        while u >= acc and comp < P - 1:
            comp += 1
            acc += lam[comp]
        for p in range(P):
            for m in range(P):
                S[p][m] *= math.exp(-b[p][m] * (t - tcur))
            S[p][comp] += 1.0
        tcur = t
        out[comp].append(t)
        st.accepted += 1
        n += 1
        if max_events is not None and n >= max_events:
            stop = t
            break
    if max_events is not None and n < max_events:
        log.warning("window exhausted after %d of %d requested events", n, max_events)
    log.debug("thinning acceptance %.3f over %d proposals", st.acceptance_rate, st.proposals)
    win = (t0, stop if stop > t0 else t1)
    return tuple(EventStream(sides[p], np.array(out[p]), win, product_id) for p in range(P))


def simulate_market(spec: HawkesSpec, window, seed=0, product_id: str = "") -> tuple[EventStream, EventStream]:
    """Buy and sell streams: the bivariate spec directly, or two independent copies of a univariate one."""
    if spec.P == 2:
        return simulate_hawkes(spec, window, seed, product_id=product_id)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    kb, ks = ss.spawn(2)
    (buys,) = simulate_hawkes(spec, window, kb, product_id=product_id, sides=(Side.BUY,))
    (sells,) = simulate_hawkes(spec, window, ks, product_id=product_id, sides=(Side.SELL,))
    return buys, sells


@dataclass(frozen=True)
class PricePath:
    s0: float
    jump_times: np.ndarray
    jump_signs: np.ndarray
    mark_size: float = 1.0
    window: tuple = (0.0, 1.0)

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        js = np.asarray(self.jump_signs, dtype=int)
        if jt.shape != js.shape:
            raise ValueError("jump times and signs must align")
        if jt.size > 1 and np.any(np.diff(jt) <= 0):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_signs", js)

    def value(self, t):
        """Path value at ``t`` (right-continuous: a jump at ``t`` is included)."""
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0], np.cumsum(self.jump_signs)])
        idx = np.searchsorted(self.jump_times, t, side="right")
        out = self.s0 + self.mark_size * cum[idx]
        return out if out.ndim else float(out)

    @property
    def terminal(self) -> float:
        return self.s0 + self.mark_size * float(self.jump_signs.sum())


def price_path_from_events(buys: EventStream, sells: EventStream, s0: float = 0.0, mark: float = 1.0) -> PricePath:
    if buys.window != sells.window:
        raise ValueError("buy and sell streams must share a window")
    t = np.concatenate([buys.times, sells.times])
    sg = np.concatenate([np.ones(len(buys), int), -np.ones(len(sells), int)])
    order = np.argsort(t, kind="stable")
    t, sg = t[order], sg[order]
    t, n_shift = jitter_ties(t)
    if n_shift:
        warnings.warn(f"{n_shift} coincident buy/sell times jittered", DataWarning, stacklevel=2)
    return PricePath(float(s0), t, sg, float(mark), buys.window)
