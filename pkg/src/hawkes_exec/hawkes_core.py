"""Exponential-kernel Hawkes model with deterministic baselines.

Intensity of component ``p``::

    lambda_p(t) = mu_p(t) + sum_m sum_{t_j^m < t} alpha[p, m] exp(-beta[p, m] (t - t_j^m))

Baselines are constant, piecewise constant, or ``exp`` of a sum of cosine
bumps.  The execution-state helpers work on the symmetric two-sided reduction
``(alpha_self, alpha_cross, beta)`` used by the optimal strategy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

GL_ORDER = 16
QUAD_TOL = 1e-10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


class UnstableSpecError(ValueError):
    pass


# --------------------------------------------------------------------------
# quadrature


def gauss_legendre(f, a: float, b: float) -> float:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * float(np.dot(_GL_W, f(mid + half * _GL_X)))


def adaptive_gl(f, a: float, b: float, tol: float = QUAD_TOL, depth: int = 0) -> float:
    """Adaptive Gauss-Legendre (order 16) with bisection until halves agree."""
    whole = gauss_legendre(f, a, b)
    m = 0.5 * (a + b)
    left = gauss_legendre(f, a, m)
    right = gauss_legendre(f, m, b)
    if abs(left + right - whole) <= tol or depth >= 30:
        return left + right
    return adaptive_gl(f, a, m, tol / 2, depth + 1) + adaptive_gl(f, m, b, tol / 2, depth + 1)


def composite_nodes(edges: np.ndarray, sub: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """GL16 nodes/weights on every cell of ``edges`` split into ``sub`` pieces."""
    pts = []
    for a, b in zip(edges[:-1], edges[1:]):
        pts.append(np.linspace(a, b, sub + 1))
    cells = np.concatenate([np.column_stack([p[:-1], p[1:]]) for p in pts])
    half = 0.5 * (cells[:, 1] - cells[:, 0])
    mid = 0.5 * (cells[:, 1] + cells[:, 0])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


# --------------------------------------------------------------------------
# baselines


def cosine_bump(x):
    """``(cos(pi x / 2) + 1) / 4`` on ``|x| <= 2``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= 2.0, (np.cos(0.5 * np.pi * x) + 1.0) / 4.0, 0.0)
    return out if out.ndim else float(out)


class Baseline:
    kind: str

    def __call__(self, t):
        raise NotImplementedError

    def integral(self, a: float, b: float) -> float:
        raise NotImplementedError

    def cumulative(self, t) -> np.ndarray:
        """Integral from the baseline's reference origin to each ``t`` (sorted or not)."""
        raise NotImplementedError

    def knots(self, a: float, b: float) -> np.ndarray:
        """Points in ``[a, b]`` (endpoints included) between which the baseline is smooth."""
        return np.array([a, b], dtype=float)

    def upper_bound(self, a: float, b: float) -> float:
        raise NotImplementedError

    def time_average(self, a: float, b: float) -> float:
        return self.integral(a, b) / (b - a)

    @property
    def n_params(self) -> int:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantBaseline(Baseline):
    rate: float
    kind = "constant"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("baseline rate must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.rate)
        return out if out.ndim else float(out)

    def integral(self, a, b):
        return self.rate * (b - a)

    def cumulative(self, t):
        return self.rate * np.asarray(t, dtype=float)

    def upper_bound(self, a, b):
        return self.rate

    @property
    def n_params(self):
        return 1

    def to_dict(self):
        return {"kind": "constant", "rate": self.rate}


@dataclass(frozen=True)
class PiecewiseBaseline(Baseline):
    """Rate ``rates[k]`` on ``[breakpoints[k], breakpoints[k+1])``; end rates extend outward."""

    breakpoints: tuple
    rates: tuple
    kind = "piecewise"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        object.__setattr__(self, "breakpoints", tuple(bp.tolist()))
        object.__setattr__(self, "rates", tuple(r.tolist()))
        if bp.size != r.size + 1:
            raise ValueError("need len(breakpoints) == len(rates) + 1")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(r <= 0):
            raise ValueError("piecewise rates must be positive")

    @cached_property
    def _bp(self):
        return np.asarray(self.breakpoints)

    @cached_property
    def _r(self):
        return np.asarray(self.rates)

    def piece_index(self, t):
        return np.clip(np.searchsorted(self._bp, t, side="right") - 1, 0, self._r.size - 1)

    def __call__(self, t):
        out = self._r[self.piece_index(np.asarray(t, dtype=float))]
        return out if np.ndim(out) else float(out)

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        bp, r = self._bp, self._r
        cum = np.concatenate([[0.0], np.cumsum(r * np.diff(bp))])
        k = self.piece_index(t)
        return cum[k] + r[k] * (t - bp[k])

    def integral(self, a, b):
        return float(self.cumulative(b) - self.cumulative(a))

    def knots(self, a, b):
        inner = [x for x in self._bp if a < x < b]
        return np.array([a, *inner, b], dtype=float)

    def upper_bound(self, a, b):
        lo, hi = self.piece_index(a), self.piece_index(b)
        return float(self._r[lo : hi + 1].max())

    @property
    def n_params(self):
        return self._r.size

    def to_dict(self):
        return {"kind": "piecewise", "breakpoints": list(self.breakpoints), "rates": list(self.rates)}


@dataclass(frozen=True)
class SplineBaseline(Baseline):
    """``exp(sum_i coeffs[i] f_i(t))`` with cosine bumps of width ``l / (n_basis - 3)``."""

    coeffs: tuple
    window: tuple
    kind = "spline"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", tuple(c.tolist()))
        object.__setattr__(self, "window", tuple(map(float, self.window)))
        if c.size < 4:
            raise ValueError("spline baseline needs n_basis >= 4")
        if not self.window[1] > self.window[0]:
            raise ValueError("empty spline window")

    @property
    def n_basis(self) -> int:
        return len(self.coeffs)

    @property
    def width(self) -> float:
        return (self.window[1] - self.window[0]) / (self.n_basis - 3)

    @cached_property
    def _c(self):
        return np.asarray(self.coeffs)

    def basis(self, t) -> np.ndarray:
        """Matrix ``[len(t), n_basis]`` of ``f_i(t)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        i = np.arange(1, self.n_basis + 1)
        x = (t[:, None] - self.window[0] - (i[None, :] - 2) * self.width) / self.width
        return cosine_bump(x)

    def rate_at(self, t: float) -> float:
        """Scalar evaluation touching only the (at most five) bumps covering ``t``."""
        w = self.width
        x0 = (t - self.window[0]) / w
        c = self.coeffs
        g = 0.0
        # bump i (1-based) is centred at (i - 2) w
        lo = max(1, math.ceil(x0 + 2 - 2))
        hi = min(len(c), math.floor(x0 + 2 + 2))
        for i in range(lo, hi + 1):
            x = x0 - (i - 2)
            if -2.0 <= x <= 2.0:
                g += c[i - 1] * (math.cos(0.5 * math.pi * x) + 1.0) / 4.0
        return math.exp(g)

    def log_rate(self, t):
        out = self.basis(t) @ self._c
        return out if np.ndim(t) else float(out[0])

    def __call__(self, t):
        out = np.exp(self.basis(t) @ self._c)
        return out if np.ndim(t) else float(out[0])

    def knots(self, a, b):
        t0, w = self.window[0], self.width
        k_lo, k_hi = math.floor((a - t0) / w) + 1, math.ceil((b - t0) / w) - 1
        inner = [t0 + k * w for k in range(k_lo, k_hi + 1) if a < t0 + k * w < b]
        return np.array([a, *inner, b], dtype=float)

    def integral(self, a, b):
        if b <= a:
            return -self.integral(b, a) if b < a else 0.0
        k = self.knots(a, b)
        return float(sum(adaptive_gl(self, lo, hi, QUAD_TOL / (len(k) - 1)) for lo, hi in zip(k[:-1], k[1:])))

    @cached_property
    def _cum_table(self):
        k = self.knots(*self.window)
        seg = np.array([adaptive_gl(self, lo, hi, QUAD_TOL / len(k)) for lo, hi in zip(k[:-1], k[1:])])
        return k, np.concatenate([[0.0], np.cumsum(seg)])

    def cumulative(self, t, sub: int = 4):
        """Integral from ``window[0]``; exact table at knots plus composite GL16 remainders."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        knots, cum = self._cum_table
        j = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
        a = knots[j]
        out = cum[j].copy()
        # remainder [a, t] with sub x GL16
        frac = (np.arange(sub + 1) / sub)
        for s in range(sub):
            lo = a + (t - a) * frac[s]
            hi = a + (t - a) * frac[s + 1]
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
            vals = np.exp(self.basis(nodes.ravel()) @ self._c).reshape(nodes.shape)
            out += half * (vals @ _GL_W)
        return out

    def segment_bounds(self, sub: int = 8) -> tuple[np.ndarray, np.ndarray]:
        """Rigorous upper bounds of the rate on a fine partition of the window.

        Uses the Lipschitz constant of the exponent: ``|f_i'| <= pi / (8 w)``.
        """
        k = self.knots(*self.window)
        edges = np.unique(np.concatenate([np.linspace(lo, hi, sub + 1) for lo, hi in zip(k[:-1], k[1:])]))
        mids = 0.5 * (edges[:-1] + edges[1:])
        h = np.diff(edges)
        lip = np.abs(self._c).sum() * math.pi / (8.0 * self.width)
        # at most 4 bumps overlap any point, so a tighter constant holds, but
        # the full sum keeps the bound simple and valid
        g = np.maximum(np.maximum(self.log_rate(edges[:-1]), self.log_rate(edges[1:])), self.log_rate(mids))
        return edges, np.exp(g + lip * h / 2)

    def upper_bound(self, a, b):
        edges, bounds = self._seg
        t0, t1 = self.window
        if a < t0 or b > t1:
            # every bump is at most 1/2
            return float(math.exp(0.5 * np.clip(self._c, 0, None).sum()))
        lo = max(np.searchsorted(edges, a, side="right") - 1, 0)
        hi = min(np.searchsorted(edges, b, side="left"), bounds.size)
        return float(bounds[lo:max(hi, lo + 1)].max())

    @cached_property
    def _seg(self):
        return self.segment_bounds()

    @property
    def n_params(self):
        return self.n_basis

    def to_dict(self):
        return {"kind": "spline", "coeffs": list(self.coeffs), "window": list(self.window)}


def baseline_from_dict(d: dict) -> Baseline:
    kind = d["kind"]
    if kind == "constant":
        return ConstantBaseline(float(d["rate"]))
    if kind == "piecewise":
        return PiecewiseBaseline(tuple(d["breakpoints"]), tuple(d["rates"]))
    if kind == "spline":
        return SplineBaseline(tuple(d["coeffs"]), tuple(d["window"]))
    raise ValueError(f"unknown baseline kind {kind!r}")


# --------------------------------------------------------------------------
# kernel / spec


@dataclass(frozen=True)
class KernelMatrix:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        b = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if a.shape != b.shape or a.shape[0] != a.shape[1] or a.shape[0] not in (1, 2):
            raise ValueError(f"alpha/beta must be matching PxP with P in (1, 2), got {a.shape}, {b.shape}")
        if np.any(a < 0) or np.any(b <= 0):
            raise ValueError("need alpha >= 0 and beta > 0")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def P(self) -> int:
        return self.alpha.shape[0]

    @property
    def branching(self) -> np.ndarray:
        return self.alpha / self.beta

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.branching))))

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0

    def check_stable(self):
        r = self.spectral_radius
        if not r < 1.0:
            raise UnstableSpecError(f"spectral radius {r:.6g} >= 1")


@dataclass(frozen=True)
class HawkesSpec:
    kernel: KernelMatrix
    baselines: tuple
    m1: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "baselines", tuple(self.baselines))
        if len(self.baselines) != self.kernel.P:
            raise ValueError("need one baseline per component")
        if not self.m1 > 0:
            raise ValueError("m1 must be positive")

    @property
    def P(self) -> int:
        return self.kernel.P

    @classmethod
    def univariate(cls, alpha: float, beta: float, baseline: Baseline | float, m1: float = 1.0):
        if not isinstance(baseline, Baseline):
            baseline = ConstantBaseline(float(baseline))
        return cls(KernelMatrix([[alpha]], [[beta]]), (baseline,), m1)

    @property
    def n_params(self) -> int:
        return sum(b.n_params for b in self.baselines) + 2 * self.P * self.P

    def to_dict(self) -> dict:
        return {
            "P": self.P,
            "alpha": self.kernel.alpha.tolist(),
            "beta": self.kernel.beta.tolist(),
            "baseline": [b.to_dict() for b in self.baselines],
            "m1": self.m1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesSpec":
        P = int(d["P"])
        base = d["baseline"]
        if isinstance(base, dict):
            base = [base] * P
        spec = cls(KernelMatrix(d["alpha"], d["beta"]), tuple(baseline_from_dict(b) for b in base), float(d.get("m1", 1.0)))
        if spec.P != P:
            raise ValueError("P does not match kernel shape")
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "HawkesSpec":
        return cls.from_dict(json.loads(s))


# --------------------------------------------------------------------------
# evaluation


def _as_history(spec: HawkesSpec, history) -> list[np.ndarray]:
    if spec.P == 1 and isinstance(history, np.ndarray) and history.ndim == 1:
        history = [history]
    hist = [np.asarray(getattr(h, "times", h), dtype=float) for h in history]
    if len(hist) != spec.P:
        raise ValueError(f"expected {spec.P} event components, got {len(hist)}")
    for h in hist:
        if h.size > 1 and np.any(np.diff(h) < 0):
            raise ValueError("history must be ordered")
    return hist


def intensity(spec: HawkesSpec, history, t: float) -> np.ndarray:
    """Left-limit intensity vector at ``t`` (events at ``t`` are excluded)."""
    hist = _as_history(spec, history)
    lam = np.array([b(t) for b in spec.baselines], dtype=float)
    a, b = spec.kernel.alpha, spec.kernel.beta
    for m, h in enumerate(hist):
        past = h[h < t]
        if past.size == 0:
            continue
        for p in range(spec.P):
            lam[p] += a[p, m] * np.exp(-b[p, m] * (t - past)).sum()
    return lam


def intensity_path(spec: HawkesSpec, history, ts) -> np.ndarray:
    """Left-limit intensities at sorted query times via the decay recursion.

    Returns ``[len(ts), P]``; one ordered sweep over events and queries.
    """
    hist = _as_history(spec, history)
    ts = np.asarray(ts, dtype=float)
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise ValueError("query times must be sorted")
    P = spec.P
    a, b = spec.kernel.alpha, spec.kernel.beta
    times = np.concatenate(hist) if hist else np.empty(0)
    comp = np.concatenate([np.full(h.size, m) for m, h in enumerate(hist)]).astype(int)
    order = np.argsort(times, kind="stable")
    times, comp = times[order], comp[order]
    S = np.zeros((P, P))  # S[p, m] = sum_j exp(-beta[p,m](t - t_j^m))
    tcur = -np.inf
    out = np.empty((ts.size, P))
    j = 0
    for q, t in enumerate(ts):
        while j < times.size and times[j] < t:
            if np.isfinite(tcur):
                S *= np.exp(-b * (times[j] - tcur))
            tcur = times[j]
            S[:, comp[j]] += 1.0
            j += 1
        decay = np.exp(-b * (t - tcur)) if np.isfinite(tcur) else 0.0
        out[q] = (a * S * decay).sum(axis=1)
    base = np.column_stack([bl(ts) for bl in spec.baselines]) if ts.size else np.empty((0, P))
    return out + base


def compensator(spec: HawkesSpec, history, a: float, b: float) -> np.ndarray:
    """``Lambda_p(a, b) = int_a^b lambda_p`` per component."""
    if b < a:
        raise ValueError("need a <= b")
    hist = _as_history(spec, history)
    alpha, beta = spec.kernel.alpha, spec.kernel.beta
    out = np.array([bl.integral(a, b) for bl in spec.baselines], dtype=float)
    for m, h in enumerate(hist):
        ev = h[h < b]
        if ev.size == 0:
            continue
        start = np.maximum(a, ev) - ev
        for p in range(spec.P):
            be = beta[p, m]
            out[p] += alpha[p, m] / be * (np.exp(-be * start) - np.exp(-be * (b - ev))).sum()
    return out


# --------------------------------------------------------------------------
# execution state


@dataclass(frozen=True)
class SymmetricKernel:
    alpha_self: float
    alpha_cross: float
    beta: float

    @property
    def alpha_tilde(self) -> float:
        return self.alpha_self - self.alpha_cross

    @property
    def eta(self) -> float:
        """Decay rate of the imbalance: ``beta - (alpha_self - alpha_cross)``."""
        return self.beta - self.alpha_tilde


def is_symmetric(kernel: KernelMatrix, tol: float = 1e-12) -> bool:
    a, b = kernel.alpha, kernel.beta
    if kernel.P == 1:
        return True
    return (abs(a[0, 0] - a[1, 1]) <= tol and abs(a[0, 1] - a[1, 0]) <= tol
            and np.ptp(b) <= tol)


def symmetric_reduction(kernel: KernelMatrix) -> SymmetricKernel:
    """Map a fitted kernel to the common-beta symmetric form.

    ``P == 1``: the univariate kernel applies to both sides with no cross term.
    ``P == 2``: self/cross amplitudes averaged, beta the alpha-weighted mean.
    """
    a, b = kernel.alpha, kernel.beta
    if kernel.P == 1:
        return SymmetricKernel(float(a[0, 0]), 0.0, float(b[0, 0]))
    a_s = 0.5 * (a[0, 0] + a[1, 1])
    a_c = 0.5 * (a[0, 1] + a[1, 0])
    tot = a.sum()
    beta = float((a * b).sum() / tot) if tot > 0 else float(b.mean())
    return SymmetricKernel(float(a_s), float(a_c), beta)


@dataclass(frozen=True)
class ExecState:
    """Imbalance/total intensity at ``last_time``.

    ``theta`` is the jump accumulator of the imbalance rescaled to
    ``last_time`` -- ``sum_j exp(-beta (last_time - tau_j)) dI_j`` -- which is
    ``exp(-beta last_time) Theta`` without the overflow of the raw form.
    """

    kappa: float
    gamma: float
    theta: float
    last_time: float
    kappa0: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


def initial_exec_state(sym: SymmetricKernel, lam_inf_sum: float, t0: float = 0.0) -> ExecState:
    return ExecState(0.0, float(lam_inf_sum), 0.0, float(t0), 0.0, float(t0))


def advance_exec_state(
    state: ExecState,
    sym: SymmetricKernel,
    lam_inf_sum: float,
    t: float,
    buys=(),
    sells=(),
) -> ExecState:
    """Propagate ``state`` to ``t`` through the (unit-mark) events in ``(last_time, t]``."""
    if t < state.last_time:
        raise ValueError("cannot move the execution state backwards")
    buys = np.asarray(buys, dtype=float)
    sells = np.asarray(sells, dtype=float)
    beta = sym.beta
    d_imb = sym.alpha_self - sym.alpha_cross
    d_tot = sym.alpha_self + sym.alpha_cross
    ev_t = np.concatenate([buys, sells])
    ev_s = np.concatenate([np.ones(buys.size), -np.ones(sells.size)])
    decay = math.exp(-beta * (t - state.last_time))
    w = np.exp(-beta * (t - ev_t))
    theta = state.theta * decay + float((w * ev_s).sum()) * d_imb
    kappa = state.kappa0 * math.exp(-beta * (t - state.t0)) + theta
    gamma = lam_inf_sum + (state.gamma - lam_inf_sum) * decay + float(w.sum()) * d_tot
    return ExecState(kappa, gamma, theta, float(t), state.kappa0, state.t0)


def exec_state(
    spec: HawkesSpec,
    history,
    t: float,
    window: tuple[float, float] | None = None,
    reduce: bool = True,
) -> ExecState:
    """From-scratch ``(kappa, gamma)`` at ``t`` from buy/sell histories (events in ``[t0, t]``)."""
    if len(history) != 2:
        raise ValueError("exec_state needs (buys, sells) histories")
    if not reduce and not is_symmetric(spec.kernel):
        raise ValueError("kernel is not symmetric with a common beta; pass reduce=True")
    buys, sells = (np.asarray(getattr(h, "times", h), dtype=float) for h in history)
    sym = symmetric_reduction(spec.kernel)
    lam_sum = constant_equivalent_sum(spec, window)
    t0 = window[0] if window else 0.0
    st = initial_exec_state(sym, lam_sum, t0)
    return advance_exec_state(st, sym, lam_sum, t, buys[(buys >= t0) & (buys <= t)], sells[(sells >= t0) & (sells <= t)])


def constant_equivalent_sum(spec: HawkesSpec, window: tuple[float, float] | None = None) -> float:
    """Sum over both sides of the time-averaged baseline (the constant the closed form assumes)."""
    if window is None:
        window = getattr(spec.baselines[0], "window", (0.0, 1.0))
    avg = [b.time_average(*window) for b in spec.baselines]
    return float(sum(avg)) if spec.P == 2 else 2.0 * float(avg[0])
