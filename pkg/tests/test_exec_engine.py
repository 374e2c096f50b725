import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hawkes_exec.events_io import VolumeProfile
from hawkes_exec.exec_engine import (
    Schedule,
    default_grid,
    discretize_optimal,
    kappa_coefficient,
    optimal_target,
    ow,
    transient_deviation,
    transient_path,
    twap,
    vwap,
    zeta_omega,
    zeta_omega_series,
)
from hawkes_exec.hawkes_core import SymmetricKernel
from hawkes_exec.impact import ImpactParams

H = 3600.0
T8 = 8 * H
SYM = SymmetricKernel(0.12, 0.0, 0.40)


def mp_zeta_omega(y):
    if y == 0:
        return mp.mpf(1), mp.mpf(1) / 2
    # enough digits to survive the cancellation in e^-y - 1 + y
    extra = max(0, int(-2 * math.log10(abs(y)))) if abs(y) < 1 else 0
    with mp.workdps(mp.mp.dps + extra):
        y = mp.mpf(y)
        z, w = (1 - mp.exp(-y)) / y, (mp.exp(-y) - 1 + y) / y**2
    return +z, +w


def test_zeta_omega_at_zero_exact():
    assert zeta_omega(0.0) == (1.0, 0.5)


def test_zeta_one():
    z, _ = zeta_omega(1.0)
    assert z == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert z == pytest.approx(0.632121, abs=1e-6)


@pytest.mark.parametrize("y", [1e-8, -1e-8, 1e-6, -1e-6, 1e-4, -1e-4])
def test_zeta_omega_series_agreement(y):
    z, w = zeta_omega(y)
    zs, ws = zeta_omega_series(y)
    assert abs(z - zs) < 1e-12 and abs(w - ws) < 1e-12


@given(st.floats(-30, 30, allow_nan=False))
def test_zeta_omega_vs_mpmath(y):
    mp.mp.dps = 40
    z, w = zeta_omega(y)
    zr, wr = mp_zeta_omega(y)
    assert z == pytest.approx(float(zr), rel=1e-14)
    assert w == pytest.approx(float(wr), rel=1e-13)


def mp_target(D, kappa, h, mu, rho, m1, eta_decay, scale=1):
    mp.mp.dps = 50
    D, kappa, h, mu, rho, m1 = map(mp.mpf, (D, kappa, h, mu, rho, m1))
    rh = rho * h
    z, w = mp_zeta_omega(h * mp.mpf(eta_decay))
    coef = m1 * (2 + rh) / (2 * rho * (1 - mu)) * (1 + rh / (2 + rh) * (z + mu * rh * w))
    return -(1 + rh) / (1 - mu) * scale * D + coef * scale * kappa


def test_target_zero_state():
    p = ImpactParams(rho=0.16075 / H, mu=0.5)
    assert optimal_target(0.0, 0.0, 4 * H, p, SYM) == 0.0
    assert optimal_target(3.0, 0.2, 4 * H, p, SYM, scale=0.0) == 0.0


def test_target_high_precision_oracle():
    p = ImpactParams(rho=0.16075 / H, mu=0.5, m1=1.0)
    got = optimal_target(0.0, 0.01, 4 * H, p, SYM)
    ref = mp_target(0.0, 0.01, 4 * H, 0.5, 0.16075 / H, 1.0, SYM.eta)
    assert got == pytest.approx(float(ref), rel=1e-13)


@given(
    st.floats(-5, 5), st.floats(-5, 5), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1), st.floats(0, T8), st.floats(0.0, 0.9)
)
def test_target_linear(d1, d2, k1, k2, h, mu):
    p = ImpactParams(rho=1e-4, mu=mu)
    lhs = optimal_target(d1 + d2, k1 + k2, h, p, SYM)
    rhs = optimal_target(d1, k1, h, p, SYM) + optimal_target(d2, k2, h, p, SYM)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
    assert optimal_target(2 * d1, 2 * k1, h, p, SYM) == pytest.approx(2 * optimal_target(d1, k1, h, p, SYM), rel=1e-12, abs=1e-12)


def test_target_undefined_for_permanent_only():
    p = ImpactParams(rho=1.0, mu=1.0)
    with pytest.raises(ValueError):
        optimal_target(1.0, 1.0, 1.0, p, SYM)
    with pytest.raises(ValueError):
        kappa_coefficient(1.0, p, SYM)


def test_transient_deviation_examples():
    p = ImpactParams(rho=1.0, mu=0.5)
    assert transient_deviation([], [], 1.0, p) == 0.0
    assert transient_deviation([0.0], [1], 1.0, p) == pytest.approx(0.5 * math.exp(-1))
    assert transient_deviation([0.0], [1], 1e4, p) == pytest.approx(0.0, abs=1e-300)


@given(st.integers(0, 2**32 - 1))
def test_transient_recursion_matches_sum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 1000))
    t = np.sort(rng.uniform(0, 1000, n))
    s = rng.choice([-1.0, 1.0], n)
    p = ImpactParams(rho=rng.uniform(1e-3, 0.1), mu=rng.uniform(0, 1), m1=rng.uniform(0.5, 2))
    grid = np.sort(rng.uniform(0, 1000, 25))
    fast = transient_path(t, s, grid, p)
    slow = np.array([transient_deviation(t, s, g, p) for g in grid])
    np.testing.assert_allclose(fast, slow, rtol=1e-10, atol=1e-10)


def test_twap_halfway():
    sch = twap(250.0, (0.0, T8))
    assert sch.grid.size == 480
    k = np.searchsorted(sch.grid, 4 * H)
    assert sch.targets[k] == pytest.approx(125.0, abs=1e-9)
    assert sch.targets[-1] == 0.0


def test_ow_to_twap_limit():
    a = ow(250.0, (0.0, T8), 1e6 / H)
    b = twap(250.0, (0.0, T8))
    assert np.max(np.abs(a.targets - b.targets)) < 1e-3


def test_ow_blocks():
    rho = 1.0 / H
    sch = ow(250.0, (0.0, T8), rho)
    first = 250.0 - sch.targets[0]
    # initial block plus one minute of the constant rate
    block = 250.0 / (2 + rho * T8)
    rate = 250.0 * rho / (2 + rho * T8)
    assert first == pytest.approx(block + rate * 60.0)
    assert -sch.trades[-1] == pytest.approx(block + rate * 60.0)


def test_vwap_uniform_is_twap():
    prof = VolumeProfile(60.0, np.full(480, 3.0), np.ones(480))
    np.testing.assert_allclose(vwap(250.0, prof).trades, twap(250.0, (0.0, T8)).trades, atol=1e-12)


@given(st.floats(-500, 500).filter(lambda x: abs(x) > 1e-6), st.integers(1, 30))
def test_all_schedules_liquidate(x0, n):
    T = n * 60.0
    p = ImpactParams(rho=1e-3, mu=0.5)
    grid = default_grid(0.0, T)
    prof = VolumeProfile(60.0, np.arange(1.0, n + 1), np.arange(1.0, n + 1) / np.mean(np.arange(1.0, n + 1)))
    rng = np.random.default_rng(n)
    buys, sells = np.sort(rng.uniform(0, T, 20)), np.sort(rng.uniform(0, T, 15))
    for sch in (
        twap(x0, (0.0, T)),
        ow(x0, (0.0, T), 1e-3),
        vwap(x0, prof),
        discretize_optimal(x0, (0.0, T), p, SYM, buys, sells, 0.1, 1.0, grid),
    ):
        assert sch.targets[-1] == 0.0
        assert abs(x0 + sch.trades.sum()) <= 1e-9 * max(1, abs(x0))


def test_schedule_rejects_partial():
    with pytest.raises(ValueError):
        Schedule(np.array([1.0, 2.0]), np.array([-1.0, -1.0]), 3.0, "x")


def test_scale_zero_is_ow():
    rng = np.random.default_rng(0)
    p = ImpactParams(rho=0.16 / H, mu=0.5)
    buys, sells = np.sort(rng.uniform(0, T8, 900)), np.sort(rng.uniform(0, T8, 700))
    a = discretize_optimal(250.0, (0.0, T8), p, SYM, buys, sells, 0.1, 0.0)
    b = ow(250.0, (0.0, T8), p.rho)
    assert np.max(np.abs(a.targets - b.targets)) <= 1e-9


def test_no_flow_is_ow():
    p = ImpactParams(rho=0.16 / H, mu=0.5)
    a = discretize_optimal(250.0, (0.0, T8), p, SYM, [], [], 0.1, 1.0)
    b = ow(250.0, (0.0, T8), p.rho)
    assert np.max(np.abs(a.targets - b.targets)) <= 1e-9


def test_single_grid_point_block():
    p = ImpactParams(rho=1e-3, mu=0.5)
    sch = discretize_optimal(10.0, (0.0, 60.0), p, SYM, [5.0], [], 0.1, 1.0, np.array([60.0]))
    np.testing.assert_array_equal(sch.trades, [-10.0])


def test_buy_pressure_back_loads():
    from hawkes_exec.hawkes_core import ConstantBaseline, HawkesSpec, KernelMatrix
    from hawkes_exec.simulate import simulate_hawkes

    T = 2 * H
    spec = HawkesSpec(KernelMatrix(np.diag([0.12, 0.12]), np.full((2, 2), 0.4)), (ConstantBaseline(0.06), ConstantBaseline(0.02)))
    p = ImpactParams(rho=2 * 0.7 / T, mu=0.5, m1=0.01)
    tw = twap(50.0, (0.0, T))
    diffs = []
    for child in np.random.SeedSequence(9).spawn(200):
        b, s = simulate_hawkes(spec, (0.0, T), child)
        sch = discretize_optimal(50.0, (0.0, T), p, SYM, b, s, 0.08, 1.0)
        diffs.append(np.mean(sch.targets - tw.targets))
    assert np.median(diffs) > 0
