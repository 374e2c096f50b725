import math
import warnings
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hawkes_exec.events_io import DataWarning, QuoteSeries, Side, Snapshot
from hawkes_exec.impact import (
    BookError,
    BookLadder,
    ImpactParams,
    LadderSample,
    approx_cost,
    build_ladder,
    estimate_impact,
    fit_eta,
    resilience_from_kernel,
    synthetic_snapshots,
    time_weighted_bas,
    two_level_cost,
    walk_book_cost,
)

# (levels as (offset, volume), order size, per-unit cost in ticks); penalty 2 ticks
HAND_LADDERS = [
    ([(0, 10), (1, 10)], 15, Fr(1, 3)),
    ([(0, 10), (1, 10)], 20, Fr(1, 2)),
    ([(0, 10), (1, 10)], 5, Fr(0)),
    ([(0, 10), (1, 10)], 10, Fr(0)),
    ([(0, 10), (1, 10)], 30, Fr(4, 3)),
    ([(0, 5)], 5, Fr(0)),
    ([(0, 5)], 10, Fr(1)),
    ([(0, 1), (2, 1), (5, 2)], 4, Fr(3)),
    ([(0, 1), (2, 1), (5, 2)], 3, Fr(7, 3)),
    ([(0, 1), (2, 1), (5, 2)], 2, Fr(1)),
    ([(0, 4), (1, 4), (2, 4), (3, 4)], 16, Fr(3, 2)),
    ([(0, 4), (1, 4), (2, 4), (3, 4)], 8, Fr(1, 2)),
    ([(0, 4), (1, 4), (2, 4), (3, 4)], 6, Fr(1, 3)),
    ([(0, 4), (1, 4), (2, 4), (3, 4)], 20, Fr(11, 5)),
    ([(0, 10), (1, 0), (2, 5)], 15, Fr(2, 3)),
    ([(0, 10), (1, 0), (2, 5)], 12, Fr(1, 3)),
    ([(0, 0), (1, 3), (3, 3)], 6, Fr(1)),
    ([(0, 2.5), (1, 0.5)], 3, Fr(1, 6)),
    ([(0, 2.5), (1, 0.5)], 4, Fr(7, 8)),
    ([(0, 100), (1, 50), (4, 25)], 160, Fr(9, 16)),
]


@pytest.mark.parametrize("levels,U,expected", HAND_LADDERS)
def test_walk_book_hand_oracles(levels, U, expected):
    assert walk_book_cost(build_ladder(levels), U) == float(expected)


def test_ladder_skip_rule():
    lad = build_ladder([(0, 10), (1, 0), (2, 5)])
    np.testing.assert_array_equal(lad.offsets, [0, 2])
    np.testing.assert_array_equal(lad.cum, [10, 15])
    assert len(build_ladder([(0, 3)])) == 1
    with pytest.raises(BookError):
        build_ladder([(0, 0), (1, 0)])


def test_snapshot_side_checked():
    snap = Snapshot("P", 0.0, Side.SELL, [0.0, 1.0], [1.0, 2.0])
    with pytest.raises(BookError):
        build_ladder(snap, Side.BUY)
    assert len(build_ladder(snap, "S")) == 2


@given(
    st.lists(st.tuples(st.integers(0, 3), st.floats(0.0, 20.0)), min_size=1, max_size=8),
    st.floats(0.1, 100.0),
    st.floats(0.1, 100.0),
)
def test_walk_book_monotone(raw, u1, u2):
    off = np.cumsum([1 + d for d, _ in raw]).tolist()
    levels = [(o, v) for o, (_, v) in zip(off, raw)]
    if not any(v > 0 for _, v in levels):
        return
    lad = build_ladder(levels)
    lo, hi = sorted((u1, u2))
    assert walk_book_cost(lad, lo) <= walk_book_cost(lad, hi) + 1e-12


def test_kde_collapse_identical_books():
    lad = build_ladder([(0, 10), (1, 10), (3, 5)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)
        for U in (4.0, 12.0, 20.0, 23.0, 40.0):
            assert approx_cost([lad] * 40, U) == pytest.approx(two_level_cost(lad, U), rel=1e-14, abs=0)


def test_kde_below_all_depths():
    rng = np.random.default_rng(0)
    lads = [BookLadder([0.0, 1.0], [v, v]) for v in rng.uniform(100, 120, 50)]
    assert approx_cost(lads, 1.0) < 1e-12


def test_kde_two_point_mixture_mc_oracle():
    # 20 thin books and 20 deep books; oracle: Monte Carlo over the per-level product kernels
    lads = [BookLadder([0.0, 1.0, 2.0], [10.0, 10.0, 10.0])] * 20 + [BookLadder([0.0, 1.0, 2.0], [30.0, 30.0, 30.0])] * 20
    U = 25.0
    got = approx_cost(lads, U)
    sample = LadderSample.from_ladders(lads)
    from hawkes_exec.impact import silverman_bandwidth

    rng = np.random.default_rng(1)
    n_mc = 400_000
    off = sample.offsets
    total = 0.0
    K = sample.cum.shape[1]
    for j in range(K):
        x = sample.cum[:, j]
        y = sample.cum[:, j + 1] if j + 1 < K else np.full(x.size, np.inf)
        idx = rng.integers(0, x.size, n_mc)
        xs = x[idx] + silverman_bandwidth(x) * rng.standard_normal(n_mc)
        hy = silverman_bandwidth(y) if np.isfinite(y).all() else 0.0
        ys = y[idx] + hy * rng.standard_normal(n_mc)
        nxt = off[j + 1] if j + 1 < K else off[j] + 2.0
        hit = (xs < U) & (U <= ys)
        total += np.mean(np.where(hit, off[j] * xs + nxt * (U - xs), 0.0))
    assert got == pytest.approx(total / U, rel=0, abs=5e-3)


def test_kde_needs_samples():
    with pytest.raises(BookError):
        approx_cost([BookLadder([0.0], [1.0])] * 5, 1.0)


def test_eta_exact_line():
    U = np.array([10.0, 20.0, 50.0])
    fit = fit_eta(U, 0.5 * U)
    assert fit.eta == 0.5 and fit.sigma == 0.0


def test_eta_planted_slope():
    rng = np.random.default_rng(7)
    U = rng.uniform(1, 100, 10_000)
    C = 0.03 * U + rng.normal(0, 0.2, U.size)
    fit = fit_eta(U, C)
    assert abs(fit.eta - 0.03) < 3 * fit.se


def test_eta_rank_deficient():
    with pytest.raises(ValueError):
        fit_eta([5.0, 5.0, 5.0], [1.0, 2.0, 3.0])


def _quotes(ts, spreads):
    s = np.asarray(spreads, dtype=float)
    return QuoteSeries(np.asarray(ts, float), 100 - s / 2, 100 + s / 2)


def test_bas_examples():
    assert time_weighted_bas(_quotes([0.0], [1.5]), (0.0, 10.0)) == pytest.approx(1.5)
    assert time_weighted_bas(_quotes([0.0, 5.0], [1.0, 3.0]), (0.0, 10.0)) == pytest.approx(2.0)
    assert time_weighted_bas(_quotes([0.0, 10.0], [1.0, 3.0]), (0.0, 10.0)) == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_bas_partition_consistency(seed, parts):
    rng = np.random.default_rng(seed)
    ts = np.concatenate([[0.0], np.sort(rng.uniform(0, 100, 30))])
    q = _quotes(ts, rng.uniform(0.1, 5, ts.size))
    edges = np.concatenate([[0.0], np.sort(rng.uniform(0, 100, parts - 1)), [100.0]])
    edges = np.unique(edges)
    fine = [time_weighted_bas(q, (a, b)) * (b - a) for a, b in zip(edges[:-1], edges[1:])]
    assert sum(fine) / 100.0 == pytest.approx(time_weighted_bas(q, (0.0, 100.0)), rel=1e-9)


def test_resilience_examples():
    T = 8 * 3600.0
    assert resilience_from_kernel(0.357, 1.0, T) * 3600 == pytest.approx(0.16075, rel=1e-12)
    assert resilience_from_kernel(0.0, 1.0, T) == pytest.approx(2 / T)
    assert resilience_from_kernel(1 - 1e-9, 1.0, T) < 1e-12


def test_impact_params_validation():
    with pytest.raises(ValueError):
        ImpactParams(rho=1.0, mu=1.5)
    with pytest.raises(ValueError):
        ImpactParams(rho=0.0)
    with pytest.raises(ValueError):
        ImpactParams(rho=1.0, eta=-0.1)
    with pytest.raises(ValueError):
        ImpactParams(rho=1.0, mu=0.3, epsilon=0.4)
    p = ImpactParams(rho=2.0, mu=0.25)
    assert p.epsilon == 0.25
    assert p.propagator(0.0) == pytest.approx(1.0)
    assert p.propagator(1e9) == pytest.approx(0.25)


def test_eta_profile_rises_toward_gate():
    rng = np.random.default_rng(3)
    T = 8 * 3600.0
    times = np.sort(rng.uniform(0, T, 2400))
    snaps = synthetic_snapshots(rng, times, lambda t: 60.0 - 50.0 * t / T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataWarning)
        table = estimate_impact(snaps, None, [10.0, 25.0, 50.0, 100.0], T)
    eta = np.array([table[("P", b)]["eta"] for b in range(8)])
    # bin 0 is the last hour before gate closure
    assert eta[0] > eta[3] > eta[7]
