"""Glue between fitted models, impact tables and the backtest engine."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibrate import FitResult
from .events_io import DataWarning, VolumeProfile
from .exec_engine import discretize_optimal, ow, twap, vwap
from .hawkes_core import (
    ConstantBaseline,
    HawkesSpec,
    KernelMatrix,
    SymmetricKernel,
    constant_equivalent_sum,
    symmetric_reduction,
)
from .impact import ImpactParams, StepProfile, resilience_from_kernel
from .simulate import simulate_market

HOUR = 3600.0


def market_spec(fits: Sequence[FitResult]) -> HawkesSpec:
    """One bivariate spec for a product: a bivariate fit as is, or two univariate fits on the diagonal."""
    fits = list(fits)
    if len(fits) == 1 and fits[0].spec.P == 2:
        return fits[0].spec
    if len(fits) == 1:
        s = fits[0].spec
        a, b = s.kernel.alpha[0, 0], s.kernel.beta[0, 0]
        return HawkesSpec(KernelMatrix(np.diag([a, a]), np.full((2, 2), b)), (s.baselines[0],) * 2, s.m1)
    if len(fits) != 2 or any(f.spec.P != 1 for f in fits):
        raise ValueError("need one bivariate fit or a (buy, sell) pair of univariate fits")
    buy, sell = sorted(fits, key=lambda f: f.label.split("-")[-1] != "B")
    a = np.diag([buy.spec.kernel.alpha[0, 0], sell.spec.kernel.alpha[0, 0]])
    b = np.array([[buy.spec.kernel.beta[0, 0], 1.0], [1.0, sell.spec.kernel.beta[0, 0]]])
    return HawkesSpec(KernelMatrix(a, b), (buy.spec.baselines[0], sell.spec.baselines[0]), buy.spec.m1)


def resilience(spec: HawkesSpec, T: float) -> float:
    return resilience_from_kernel(spec.kernel.spectral_radius, 1.0, T)


def hourly_profile(values_by_bin: dict[int, float], T: float, fallback: float = 0.0) -> StepProfile:
    """Step profile on ``[0, T]`` with hourly steps; bin 0 is the last hour before ``T``."""
    n = int(math.ceil(T / HOUR - 1e-12))
    edges = np.minimum(np.arange(n + 1) * HOUR, T)
    edges[-1] = T
    avail = {k: v for k, v in values_by_bin.items() if v is not None and np.isfinite(v)}
    vals = []
    for i in range(n):
        b = n - 1 - i
        if b in avail:
            vals.append(avail[b])
        elif avail:
            near = min(avail, key=lambda k: (abs(k - b), k))
            vals.append(avail[near])
        else:
            vals.append(fallback)
    return StepProfile(edges, np.asarray(vals, dtype=float))


def impact_params_for(
    product: str,
    impact_table: dict,
    spec: HawkesSpec,
    T: float,
    mu: float = 0.5,
    rho: float | None = None,
) -> ImpactParams:
    """Impact parameters for a product from the ``impact.json`` table (``"product|bin"`` keys)."""
    eta, bas = {}, {}
    for key, row in impact_table.items():
        prod, _, b = key.rpartition("|")
        if prod != product:
            continue
        eta[int(b)] = row.get("eta")
        bas[int(b)] = row.get("mean_bas")
    if not eta:
        warnings.warn(f"no impact rows for {product!r}; using eta = spread = 0", DataWarning, stacklevel=2)
    eta_p = hourly_profile(eta, T, 0.0)
    eta_p = StepProfile(eta_p.edges, np.maximum(eta_p.values, 0.0))
    bas_p = hourly_profile(bas, T, 0.0)
    return ImpactParams(rho=rho if rho is not None else resilience(spec, T), mu=mu, eta=eta_p, spread=bas_p, m1=spec.m1)


def expected_volume_profile(spec: HawkesSpec, T: float, bucket: float = 60.0) -> VolumeProfile:
    """Per-bucket expected volume from the baselines, scaled by the stationary amplification."""
    n = int(round(T / bucket))
    amp = 1.0 / (1.0 - spec.kernel.spectral_radius)
    vol = np.array(
        [sum(bl.integral(k * bucket, (k + 1) * bucket) for bl in spec.baselines) for k in range(n)]
    ) * amp * spec.m1
    return VolumeProfile(float(bucket), vol, vol / vol.mean())


@dataclass
class StrategySet:
    x0: float
    T: float
    params: ImpactParams
    sym: SymmetricKernel
    lam_inf_sum: float
    profile: VolumeProfile
    scale: float = 1.0
    step: float = 60.0

    def builders(self, names: Sequence[str]) -> dict:
        window = (0.0, self.T)
        grid = np.arange(1, int(round(self.T / self.step)) + 1) * self.step
        out = {}
        for name in names:
            key = name.lower()
            if key == "optimal":
                out["Optimal"] = lambda m: discretize_optimal(
                    self.x0, window, self.params, self.sym, m[0], m[1], self.lam_inf_sum, self.scale, grid
                )
            elif key == "twap":
                out["TWAP"] = lambda m: twap(self.x0, window, grid)
            elif key == "ow":
                out["OW"] = lambda m: ow(self.x0, window, self.params.rho, grid)
            elif key == "vwap":
                out["VWAP"] = lambda m: vwap(self.x0, self.profile)
            else:
                raise ValueError(f"unknown strategy {name!r}")
        return out


def strategy_set(spec: HawkesSpec, params: ImpactParams, x0: float, T: float, scale: float = 1.0, step: float = 60.0) -> StrategySet:
    return StrategySet(
        x0,
        T,
        params,
        symmetric_reduction(spec.kernel),
        constant_equivalent_sum(spec, (0.0, T)),
        expected_volume_profile(spec, T, step),
        scale,
        step,
    )


def simulate_sessions(spec: HawkesSpec, T: float, n: int, seed=0) -> list:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return [simulate_market(spec, (0.0, T), child) for child in ss.spawn(n)]


def seasonal_spec(
    alpha: float = 0.12,
    beta: float = 0.40,
    base_rate: float = 0.06,
    T: float = 8 * HOUR,
    n_basis: int = 10,
    m1: float = 1.0,
) -> HawkesSpec:
    """Univariate spec whose spline baseline rises toward the window end and drops in the final hour."""
    from .hawkes_core import SplineBaseline

    proto = SplineBaseline((0.0,) * n_basis, (0.0, T))
    t = np.linspace(0, T, 400)
    target = np.log(baseline_shape(t, T) * base_rate)
    xi = np.linalg.lstsq(proto.basis(t), target, rcond=None)[0]
    return HawkesSpec.univariate(alpha, beta, SplineBaseline(tuple(xi), (0.0, T)), m1)


def baseline_shape(t, T: float):
    """Dimensionless seasonal shape: activity rising toward gate closure, halved in the last hour."""
    t = np.asarray(t, dtype=float)
    x = t / T
    rise = 1.0 + 2.0 * x**2
    drop = 1.0 - 0.5 / (1.0 + np.exp(-(t - (T - HOUR)) / 300.0))
    return rise * drop


def open_close_profile(T: float, low: float, high: float) -> StepProfile:
    """Hourly profile high in the first hour and the last hour, flat and low in between."""
    n = int(round(T / HOUR))
    shape = np.full(n, 1.0)
    shape[0] = high / low
    if n > 1:
        shape[1] = 0.5 * (1 + high / low)
        shape[-1] = high / low
    return StepProfile(np.arange(n + 1) * HOUR, low * shape)
