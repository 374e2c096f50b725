"""Maximum-likelihood calibration of exponential Hawkes models.

The log-likelihood splits over target components ``m``::

    L_m = sum_k log lambda_m(t_k) - int mu_m - sum_n alpha_mn / beta_mn * sum_j (1 - exp(-beta_mn (T - s_j)))

with ``lambda_m(t_k) = mu_m(t_k) + sum_n alpha_mn R_mn(k)``.  ``R``, ``R'`` and
``R''`` (sums of ``d^p exp(-beta d)`` over strictly earlier source events)
come from one linear sweep each, which also gives the exact gradient and
Hessian.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numba
import numpy as np
from scipy.optimize import minimize

from .events_io import EventStream, Side
from .hawkes_core import (
    Baseline,
    ConstantBaseline,
    HawkesSpec,
    KernelMatrix,
    PiecewiseBaseline,
    SplineBaseline,
    composite_nodes,
)

log = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-6
PENALTY_WEIGHT = 1e4
XI_BOUND = 20.0
QUAD_SUB = 8


class CalibrationError(ValueError):
    pass


# --------------------------------------------------------------------------
# recursions


@numba.njit(cache=True)
def excitation_sums(targets, sources, beta):
    """``R, R', R''`` at each target time over strictly earlier source times."""
    n = targets.size
    r0 = np.zeros(n)
    r1 = np.zeros(n)
    r2 = np.zeros(n)
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    tl = 0.0
    started = False
    j = 0
    for k in range(n):
        tk = targets[k]
        while j < sources.size and sources[j] < tk:
            if started:
                d = sources[j] - tl
                e = math.exp(-beta * d)
                s2 = e * (s2 + 2.0 * d * s1 + d * d * s0)
                s1 = e * (s1 + d * s0)
                s0 = e * s0
            tl = sources[j]
            started = True
            s0 += 1.0
            j += 1
        if started:
            d = tk - tl
            e = math.exp(-beta * d)
            s2 = e * (s2 + 2.0 * d * s1 + d * d * s0)
            s1 = e * (s1 + d * s0)
            s0 = e * s0
            tl = tk
        r0[k] = s0
        r1[k] = s1
        r2[k] = s2
    return r0, r1, r2


@numba.njit(cache=True)
def excitation_sum(targets, sources, beta):
    """``R`` only (the value path)."""
    n = targets.size
    r0 = np.zeros(n)
    s0 = 0.0
    tl = 0.0
    started = False
    j = 0
    for k in range(n):
        tk = targets[k]
        while j < sources.size and sources[j] < tk:
            if started:
                s0 *= math.exp(-beta * (sources[j] - tl))
            tl = sources[j]
            started = True
            s0 += 1.0
            j += 1
        if started:
            s0 *= math.exp(-beta * (tk - tl))
            tl = tk
        r0[k] = s0
    return r0


def _tail_sums(sources, beta, T):
    d = T - sources
    e = np.exp(-beta * d)
    return (1.0 - e).sum(), (d * e).sum(), (d * d * e).sum()


# --------------------------------------------------------------------------
# parameter vector


def _stream_times(events) -> tuple[list[np.ndarray], tuple[float, float]]:
    if isinstance(events, EventStream):
        events = [events]
    events = list(events)
    windows = {e.window for e in events}
    if len(windows) != 1:
        raise CalibrationError("all components must share a window")
    return [np.ascontiguousarray(e.times, dtype=float) for e in events], windows.pop()


def param_vector(spec: HawkesSpec) -> np.ndarray:
    """Natural parameters: baseline params per component, then alpha and beta (row-major)."""
    parts = []
    for bl in spec.baselines:
        if isinstance(bl, ConstantBaseline):
            parts.append([bl.rate])
        elif isinstance(bl, PiecewiseBaseline):
            parts.append(list(bl.rates))
        else:
            parts.append(list(bl.coeffs))
    parts.append(spec.kernel.alpha.ravel())
    parts.append(spec.kernel.beta.ravel())
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def spec_from_vector(template: HawkesSpec, x: np.ndarray) -> HawkesSpec:
    x = np.asarray(x, dtype=float)
    P = template.P
    i = 0
    bls = []
    for bl in template.baselines:
        k = bl.n_params
        v = x[i : i + k]
        i += k
        if isinstance(bl, ConstantBaseline):
            bls.append(ConstantBaseline(float(v[0])))
        elif isinstance(bl, PiecewiseBaseline):
            bls.append(PiecewiseBaseline(bl.breakpoints, tuple(v)))
        else:
            bls.append(SplineBaseline(tuple(v), bl.window))
    a = x[i : i + P * P].reshape(P, P)
    b = x[i + P * P : i + 2 * P * P].reshape(P, P)
    return HawkesSpec(KernelMatrix(a, b), tuple(bls), template.m1)


def _baseline_slices(spec: HawkesSpec):
    out, i = [], 0
    for bl in spec.baselines:
        out.append(slice(i, i + bl.n_params))
        i += bl.n_params
    return out, i


# --------------------------------------------------------------------------
# likelihood


class _BaselineTerms:
    """Values, parameter derivatives and integrals of one baseline at event times."""

    def __init__(self, bl: Baseline, times: np.ndarray, window):
        self.bl = bl
        t0, t1 = window
        if isinstance(bl, ConstantBaseline):
            self.mu = np.full(times.size, bl.rate)
            self.g = np.ones((times.size, 1))
            self.int_mu = bl.rate * (t1 - t0)
            self.int_g = np.array([t1 - t0])
            self.h_sum = None
            self.int_h = np.zeros((1, 1))
        elif isinstance(bl, PiecewiseBaseline):
            idx = bl.piece_index(times)
            self.mu = np.asarray(bl._r)[idx]
            self.g = np.zeros((times.size, bl.n_params))
            self.g[np.arange(times.size), idx] = 1.0
            bp = np.asarray(bl.breakpoints)
            lo = np.maximum(bp[:-1], t0)
            hi = np.minimum(bp[1:], t1)
            length = np.clip(hi - lo, 0.0, None)
            # end pieces extend outward
            if t0 < bp[0]:
                length[0] += bp[0] - t0
            if t1 > bp[-1]:
                length[-1] += t1 - bp[-1]
            self.int_g = length
            self.int_mu = float(np.dot(bl._r, length))
            self.h_sum = None
            self.int_h = np.zeros((bl.n_params, bl.n_params))
        else:
            F = bl.basis(times)
            self.mu = np.exp(F @ bl._c)
            self.g = self.mu[:, None] * F
            nodes, w = composite_nodes(bl.knots(t0, t1), QUAD_SUB)
            Fq = bl.basis(nodes)
            wq = w * np.exp(Fq @ bl._c)
            self.int_mu = float(wq.sum())
            self.int_g = Fq.T @ wq
            self.int_h = (Fq * wq[:, None]).T @ Fq
            self.F = F
            self.h_sum = True


def _component_loglik(m, times, T, window, spec, bterm, derivs):
    P = spec.P
    a, b = spec.kernel.alpha, spec.kernel.beta
    tk = times[m]
    n = tk.size
    lam = bterm.mu.copy()
    R = np.zeros((P, n))
    R1 = np.zeros((P, n))
    R2 = np.zeros((P, n))
    tails = np.zeros((P, 3))
    for s in range(P):
        if derivs:
            R[s], R1[s], R2[s] = excitation_sums(tk, times[s], b[m, s])
        else:
            R[s] = excitation_sum(tk, times[s], b[m, s])
        tails[s] = _tail_sums(times[s], b[m, s], T)
        lam += a[m, s] * R[s]
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        log.warning("non-positive intensity at an event for component %d", m)
        return -np.inf, None, None, lam
    A, B, C = tails[:, 0], tails[:, 1], tails[:, 2]
    am, bm = a[m], b[m]
    val = float(np.log(lam).sum() - bterm.int_mu - (am / bm * A).sum())
    if not derivs:
        return val, None, None, lam
    nb = bterm.g.shape[1]
    K = nb + 2 * P
    inv = 1.0 / lam
    inv2 = inv * inv
    # derivatives of lambda_k wrt (baseline, alpha_m., beta_m.)
    D = np.empty((n, K))
    D[:, :nb] = bterm.g
    D[:, nb : nb + P] = R.T
    D[:, nb + P :] = -(am[:, None] * R1).T
    grad = D.T @ inv
    grad[:nb] -= bterm.int_g
    grad[nb : nb + P] -= A / bm
    grad[nb + P :] -= -am * A / bm**2 + am * B / bm
    H = -(D * inv2[:, None]).T @ D
    # second derivatives of lambda_k
    if bterm.h_sum:
        H[:nb, :nb] += (bterm.g * inv[:, None]).T @ bterm.F
        H[:nb, :nb] -= bterm.int_h
    for s in range(P):
        ia, ib = nb + s, nb + P + s
        cross = -(R1[s] * inv).sum()
        H[ia, ib] += cross - (-A[s] / bm[s] ** 2 + B[s] / bm[s])
        H[ib, ia] = H[ia, ib]
        H[ib, ib] += am[s] * (R2[s] * inv).sum() - (
            2 * am[s] * A[s] / bm[s] ** 3 - 2 * am[s] * B[s] / bm[s] ** 2 - am[s] * C[s] / bm[s]
        )
    H = 0.5 * (H + H.T)
    return val, grad, H, lam


def _evaluate(spec: HawkesSpec, events, derivs: bool):
    times, window = _stream_times(events)
    if len(times) != spec.P:
        raise CalibrationError(f"spec has {spec.P} components but {len(times)} streams given")
    T = window[1]
    P = spec.P
    total = 0.0
    slices, nbase = _baseline_slices(spec)
    K = nbase + 2 * P * P
    grad = np.zeros(K) if derivs else None
    H = np.zeros((K, K)) if derivs else None
    for m in range(P):
        bterm = _BaselineTerms(spec.baselines[m], times[m], window)
        v, g, h, _ = _component_loglik(m, times, T, window, spec, bterm, derivs)
        if not np.isfinite(v):
            return -np.inf, None, None
        total += v
        if derivs:
            idx = np.concatenate(
                [
                    np.arange(slices[m].start, slices[m].stop),
                    nbase + m * P + np.arange(P),
                    nbase + P * P + m * P + np.arange(P),
                ]
            )
            grad[idx] += g
            H[np.ix_(idx, idx)] += h
    return total, grad, H


def log_likelihood(spec: HawkesSpec, events) -> float:
    """Exact log-likelihood by linear recursion; ``-inf`` if an intensity is not positive."""
    return _evaluate(spec, events, derivs=False)[0]


def grad_hessian(spec: HawkesSpec, events) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian in the natural parameters of ``param_vector``."""
    _, g, H = _evaluate(spec, events, derivs=True)
    if g is None:
        raise CalibrationError("log-likelihood is -inf at this spec")
    return g, H


def log_likelihood_naive(spec: HawkesSpec, events) -> float:
    """O(n^2) direct evaluation; an oracle for the recursion."""
    times, (t0, T) = _stream_times(events)
    a, b = spec.kernel.alpha, spec.kernel.beta
    total = 0.0
    for m in range(spec.P):
        tk = times[m]
        lam = np.asarray(spec.baselines[m](tk), dtype=float).copy()
        comp = spec.baselines[m].integral(t0, T)
        for s in range(spec.P):
            src = times[s]
            d = tk[:, None] - src[None, :]
            mask = d > 0
            lam += a[m, s] * np.where(mask, np.exp(-b[m, s] * np.where(mask, d, 0.0)), 0.0).sum(axis=1)
            comp += a[m, s] / b[m, s] * (1.0 - np.exp(-b[m, s] * (T - src))).sum()
        if np.any(lam <= 0):
            return -np.inf
        total += np.log(lam).sum() - comp
    return float(total)


# --------------------------------------------------------------------------
# fitting


@dataclass
class FitConfig:
    model: str = "uni"  # uni | bi
    baseline: str = "constant"  # constant | piecewise | spline
    n_basis: int = 10
    n_pieces: int = 8
    tol: float = 1e-5
    ftol: float = 1e-9
    max_iter: int = 500
    restarts: int = 5
    alpha_bounds: tuple = (1e-8, 1e3)
    beta_bounds: tuple = (1e-5, 1e3)
    rate_bounds: tuple = (1e-10, 1e6)
    newton_polish: bool = True
    min_events: int = 10

    def __post_init__(self):
        if self.model not in ("uni", "bi"):
            raise ValueError(f"model must be 'uni' or 'bi', got {self.model!r}")
        if self.baseline not in ("constant", "piecewise", "spline"):
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.baseline == "spline" and self.n_basis < 4:
            raise ValueError("n_basis must be >= 4")
        if self.restarts < 1:
            raise ValueError("need at least one start")


@dataclass
class FitResult:
    spec: HawkesSpec
    loglik: float
    n_params: int
    aic: float
    converged: bool
    iterations: int
    gradient_norm: float
    n_events: tuple = ()
    window: tuple = (0.0, 1.0)
    product_id: str = ""
    label: str = ""
    baseline: str = "constant"
    n_basis: int | None = None
    data_id: str = ""
    stderr: list | None = None
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec"] = self.spec.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        d = dict(d)
        d["spec"] = HawkesSpec.from_dict(d["spec"])
        d["n_events"] = tuple(d.get("n_events", ()))
        d["window"] = tuple(d.get("window", (0.0, 1.0)))
        return cls(**d)


def data_fingerprint(events) -> str:
    times, window = _stream_times(events)
    h = hashlib.sha256(np.asarray(window, dtype=float).tobytes())
    for t in times:
        h.update(np.int64(t.size).tobytes())
        h.update(t.tobytes())
    return h.hexdigest()[:16]


def _initial_baseline(kind: str, cfg: FitConfig, t: np.ndarray, window, scale: float) -> Baseline:
    t0, t1 = window
    rate = max(t.size, 1) / (t1 - t0) * scale
    if kind == "constant":
        return ConstantBaseline(rate)
    if kind == "piecewise":
        bp = np.linspace(t0, t1, cfg.n_pieces + 1)
        cnt = np.histogram(t, bins=bp)[0]
        r = np.maximum(cnt / np.diff(bp), 0.1 / (t1 - t0) * cfg.n_pieces) * scale
        return PiecewiseBaseline(tuple(bp), tuple(r))
    # spline: least-squares fit of the log binned rate on the basis
    proto = SplineBaseline((0.0,) * cfg.n_basis, (t0, t1))
    nb = 3 * cfg.n_basis
    bins = np.linspace(t0, t1, nb + 1)
    cnt = np.histogram(t, bins=bins)[0].astype(float)
    width = (t1 - t0) / nb
    y = np.log(np.maximum(cnt, 0.5) / width * scale)
    F = proto.basis(0.5 * (bins[:-1] + bins[1:]))
    xi = np.linalg.lstsq(F, y, rcond=None)[0]
    return SplineBaseline(tuple(np.clip(xi, -XI_BOUND + 1, XI_BOUND - 1)), (t0, t1))


def _starts(cfg: FitConfig, times, window, P, init: HawkesSpec | None):
    combos = [(0.2, 0.1), (0.2, 1.0), (0.5, 0.1), (0.5, 1.0), (0.3, 0.4)]
    while len(combos) < cfg.restarts:
        k = len(combos)
        combos.append((0.1 + 0.15 * (k % 5), 10 ** (-1.5 + 0.5 * (k % 6))))
    specs = [init] if init is not None else []
    for br, b0 in combos[: cfg.restarts - len(specs)]:
        if P == 1:
            a = np.array([[br * b0]])
        else:
            a = np.array([[0.7, 0.3], [0.3, 0.7]]) * br * b0
        bl = tuple(_initial_baseline(cfg.baseline, cfg, times[p], window, 1.0 - br) for p in range(P))
        specs.append(HawkesSpec(KernelMatrix(a, np.full((P, P), b0)), bl))
    return specs


class _Objective:
    """Negative per-event log-likelihood in log/unconstrained coordinates, plus stability penalty."""

    def __init__(self, template: HawkesSpec, events, cfg: FitConfig):
        self.template = template
        self.events = events
        self.cfg = cfg
        self.n = max(sum(len(e) for e in events), 1)
        slices, nbase = _baseline_slices(template)
        P = template.P
        K = nbase + 2 * P * P
        self.is_log = np.ones(K, bool)
        lo, hi = np.empty(K), np.empty(K)
        for bl, sl in zip(template.baselines, slices):
            if isinstance(bl, SplineBaseline):
                self.is_log[sl] = False
                lo[sl], hi[sl] = -XI_BOUND, XI_BOUND
            else:
                lo[sl], hi[sl] = np.log(cfg.rate_bounds)
        na = slice(nbase, nbase + P * P)
        nbt = slice(nbase + P * P, K)
        lo[na], hi[na] = np.log(cfg.alpha_bounds)
        lo[nbt], hi[nbt] = np.log(cfg.beta_bounds)
        self.lo, self.hi = lo, hi
        self.nbase = nbase
        self.P = P
        self.nfev = 0

    def to_natural(self, z):
        return np.where(self.is_log, np.exp(z), z)

    def to_internal(self, x):
        return np.where(self.is_log, np.log(np.maximum(x, 1e-300)), x)

    def spec(self, z):
        return spec_from_vector(self.template, self.to_natural(z))

    def penalty(self, x):
        """Value and gradient (natural coords) of the spectral-radius penalty."""
        P, nb = self.P, self.nbase
        a = x[nb : nb + P * P].reshape(P, P)
        b = x[nb + P * P :].reshape(P, P)
        Bm = a / b
        thr = 1.0 - STABILITY_MARGIN
        if P == 1:
            r = Bm[0, 0]
            dr = np.ones((1, 1))
        else:
            w, vr = np.linalg.eig(Bm)
            i = int(np.argmax(np.abs(w)))
            r = float(np.real(w[i]))
            wl, vl = np.linalg.eig(Bm.T)
            j = int(np.argmax(np.abs(wl)))
            u = np.real(vl[:, j])
            v = np.real(vr[:, i])
            dr = np.outer(u, v) / float(u @ v)
        g = np.zeros_like(x)
        if r < thr:
            return 0.0, g
        val = PENALTY_WEIGHT * (r - thr) ** 2
        c = 2 * PENALTY_WEIGHT * (r - thr)
        g[nb : nb + P * P] = (c * dr / b).ravel()
        g[nb + P * P :] = (-c * dr * a / b**2).ravel()
        return val, g

    def __call__(self, z):
        self.nfev += 1
        x = self.to_natural(z)
        try:
            spec = spec_from_vector(self.template, x)
        except ValueError:
            return 1e10, np.zeros_like(z)
        val, g, _ = _evaluate(spec, self.events, derivs=True)
        if not np.isfinite(val):
            return 1e10, np.zeros_like(z)
        pv, pg = self.penalty(x)
        f = -val / self.n + pv
        gx = -g / self.n + pg
        gz = np.where(self.is_log, gx * x, gx)
        return f, gz

    def hessian_internal(self, z):
        x = self.to_natural(z)
        spec = spec_from_vector(self.template, x)
        val, g, H = _evaluate(spec, self.events, derivs=True)
        gx = -g / self.n
        Hx = -H / self.n
        jac = np.where(self.is_log, x, 1.0)
        Hz = Hx * np.outer(jac, jac) + np.diag(np.where(self.is_log, gx * x, 0.0))
        return Hz

    def projected_grad(self, z, gz):
        pg = gz.copy()
        at_lo = (z <= self.lo + 1e-12) & (gz > 0)
        at_hi = (z >= self.hi - 1e-12) & (gz < 0)
        pg[at_lo | at_hi] = 0.0
        return pg


def _newton_polish(obj: _Objective, z, f, g, max_steps: int = 8):
    """Projected Newton steps on the free coordinates; keeps only improving steps."""
    steps = 0
    for _ in range(max_steps):
        free = ~(((z <= obj.lo + 1e-12) & (g > 0)) | ((z >= obj.hi - 1e-12) & (g < 0)))
        if not free.any():
            break
        try:
            H = obj.hessian_internal(z)[np.ix_(free, free)]
            if obj.penalty(obj.to_natural(z))[0] > 0:
                break
            w, V = np.linalg.eigh(H)
            if w.min() <= 0:
                break
            step = -(V @ ((V.T @ g[free]) / w))
        except (np.linalg.LinAlgError, ValueError, CalibrationError):
            break
        improved = False
        t = 1.0
        for _ in range(10):
            zn = z.copy()
            zn[free] = np.clip(z[free] + t * step, obj.lo[free], obj.hi[free])
            fn, gn = obj(zn)
            if fn <= f:
                z, f, g = zn, fn, gn
                improved = True
                break
            t *= 0.5
        steps += 1
        if not improved or np.max(np.abs(obj.projected_grad(z, g))) < 1e-12:
            break
    return z, f, g, steps


def _standard_errors(spec, events):
    try:
        _, H = grad_hessian(spec, events)
        cov = np.linalg.inv(-H)
        d = np.diag(cov)
        return [float(math.sqrt(v)) if v > 0 else float("nan") for v in d]
    except (np.linalg.LinAlgError, CalibrationError):
        return None


def fit_mle(events, config: FitConfig | None = None, init: HawkesSpec | None = None, label: str = "") -> FitResult:
    """Multi-start L-BFGS-B on log-parameters; the best log-likelihood over starts is kept.

    Never raises on optimizer trouble: non-convergence shows up as
    ``converged=False``.  Raises CalibrationError on unusable input.
    """
    cfg = config or FitConfig()
    if isinstance(events, EventStream):
        events = [events]
    events = list(events)
    P = 2 if cfg.model == "bi" else 1
    if len(events) != P:
        raise CalibrationError(f"model {cfg.model!r} needs {P} stream(s), got {len(events)}")
    times, window = _stream_times(events)
    for e in events:
        if len(e) < cfg.min_events:
            raise CalibrationError(f"need >= {cfg.min_events} events per component, got {len(e)}")
    n = sum(t.size for t in times)
    best = None
    total_iter = 0
    for spec0 in _starts(cfg, times, window, P, init):
        obj = _Objective(spec0, events, cfg)
        z0 = np.clip(obj.to_internal(param_vector(spec0)), obj.lo, obj.hi)
        try:
            res = minimize(
                obj,
                z0,
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(obj.lo, obj.hi)),
                options={"maxiter": cfg.max_iter, "ftol": cfg.ftol, "gtol": cfg.tol * 1e-2, "maxcor": 20},
            )
        except (ValueError, FloatingPointError) as exc:
            log.warning("start failed: %s", exc)
            continue
        z, f, g = res.x, *obj(res.x)
        total_iter += int(res.nit)
        if cfg.newton_polish:
            z, f, g, k = _newton_polish(obj, z, f, g)
            total_iter += k
        if best is None or f < best[1]:
            best = (z, f, g, obj, res)
    if best is None:
        raise CalibrationError("every start failed")
    z, f, g, obj, res = best
    spec = obj.spec(z)
    ll = log_likelihood(spec, events)
    # gradient norm in internal coordinates scaled per event, projected on the box
    gnorm = float(np.max(np.abs(obj.projected_grad(z, g))))
    penalty_active = obj.penalty(obj.to_natural(z))[0] > 0
    converged = bool(gnorm <= cfg.tol and np.isfinite(ll) and not penalty_active)
    K = spec.n_params
    side = ",".join(e.side.value for e in events)
    return FitResult(
        spec=spec,
        loglik=float(ll),
        n_params=K,
        aic=float(-2.0 * ll + 2 * K),
        converged=converged,
        iterations=total_iter,
        gradient_norm=gnorm,
        n_events=tuple(int(t.size) for t in times),
        window=tuple(window),
        product_id=events[0].product_id,
        label=label or f"{cfg.model}-{cfg.baseline}-{side}",
        baseline=cfg.baseline,
        n_basis=cfg.n_basis if cfg.baseline == "spline" else None,
        data_id=data_fingerprint(events),
        stderr=_standard_errors(spec, events) if np.isfinite(ll) else None,
        message=str(res.message),
    )


def fit_product(buys: EventStream, sells: EventStream, config: FitConfig) -> list[FitResult]:
    """Bivariate fit of (buy, sell), or one univariate fit per side."""
    if config.model == "bi":
        return [fit_mle([buys, sells], config)]
    return [fit_mle([s], config) for s in (buys, sells)]


@dataclass
class ModelRanking:
    order: list
    labels: list
    aic: np.ndarray
    delta_aic: np.ndarray
    delta_loglik: np.ndarray

    @property
    def best(self):
        return self.order[0]


def select_model(fits: Sequence[FitResult]) -> ModelRanking:
    """Rank by AIC; ``delta_aic[i, j] = aic_i - aic_j`` in ranked order (same for log-likelihood)."""
    fits = list(fits)
    if not fits:
        raise ValueError("no fits to rank")
    ids = {f.data_id for f in fits}
    if len(ids) > 1:
        raise ValueError("fits were computed on different datasets")
    order = sorted(range(len(fits)), key=lambda i: fits[i].aic)
    ranked = [fits[i] for i in order]
    aic = np.array([f.aic for f in ranked])
    ll = np.array([f.loglik for f in ranked])
    return ModelRanking(
        order=ranked,
        labels=[f.label for f in ranked],
        aic=aic,
        delta_aic=aic[:, None] - aic[None, :],
        delta_loglik=ll[:, None] - ll[None, :],
    )


def fit_summary(fits: Sequence[FitResult]) -> dict:
    """Median and std of branching ratio and kernel parameters, over all fits and converged ones only."""

    def agg(sel):
        if not sel:
            return {"n": 0}
        br = np.array([f.spec.kernel.spectral_radius for f in sel])
        a = np.array([f.spec.kernel.alpha.mean() for f in sel])
        b = np.array([f.spec.kernel.beta.mean() for f in sel])
        return {
            "n": len(sel),
            "branching_median": float(np.median(br)),
            "branching_std": float(np.std(br)),
            "alpha_median": float(np.median(a)),
            "alpha_std": float(np.std(a)),
            "beta_median": float(np.median(b)),
            "beta_std": float(np.std(b)),
        }

    fits = list(fits)
    return {"all": agg(fits), "converged": agg([f for f in fits if f.converged])}
