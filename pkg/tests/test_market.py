import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from cohem._validation import InputError
from cohem.market import (
    ConvexCostFn,
    LinearCost,
    PriceSet,
    QuadraticCost,
    SupplyPlan,
    bid_minimizer,
    deviation_cost,
    expand_bids,
    general_cost_aggregator_step,
    generate_day_ahead_bid,
    joint_total_cost,
    psi_value,
    realtime_cost,
    sequential_bid,
)

vec = arrays(np.float64, 6, elements=st.floats(-50, 50, allow_nan=False))
pos = arrays(np.float64, 6, elements=st.floats(0, 10, allow_nan=False))


def test_realtime_cost_examples():
    assert realtime_cost([1, 2], [2, 1], [2, 2], [3, 3]) == pytest.approx(5.0)
    assert realtime_cost([1, 2], [1, 2], [2, 2], [3, 3]) == 0.0
    with pytest.raises(InputError):
        realtime_cost([1, 2], [1, 2, 3], [1, 1], [1, 1])


def test_deviation_cost_examples():
    assert deviation_cost([5, 5], [3, 8]) == pytest.approx(5.0)
    assert deviation_cost([5, 5], [5, 5]) == 0.0
    np.testing.assert_allclose(deviation_cost([5, 5], [[3, 8], [5, 5]]), [5.0, 0.0])


@given(vec, vec)
def test_unit_prices_give_deviation(P, L):
    assert realtime_cost(P, L, np.ones(6), np.ones(6)) == pytest.approx(deviation_cost(P, L), abs=1e-9)


@given(vec, vec, pos, pos)
def test_realtime_cost_nonnegative(P, L, ps, pp):
    assert realtime_cost(P, L, ps, pp) >= 0


@given(vec, vec, vec, pos, pos)
def test_realtime_cost_convex_in_load(P, L1, L2, ps, pp):
    mid = realtime_cost(P, 0.5 * (L1 + L2), ps, pp)
    assert mid <= 0.5 * (realtime_cost(P, L1, ps, pp) + realtime_cost(P, L2, ps, pp)) + 1e-9


def test_price_set_requires_nonnegative_dual_range():
    with pytest.raises(InputError):
        PriceSet([1.0, -2.0], [1.0, 1.0])
    assert np.all(PriceSet.flat(3, -0.5, 1.0).dual_upper == 0.5)


def test_day_ahead_bid_block_means():
    P = generate_day_ahead_bid(np.full(96, 3.0), np.zeros(96)).P
    np.testing.assert_allclose(P, 3.0)
    L = np.zeros(96)
    L[0] = 16.0
    plan = generate_day_ahead_bid(L, np.zeros(96))
    np.testing.assert_allclose(plan.P[:16], 1.0)
    np.testing.assert_allclose(plan.B, np.repeat([1.0, 0, 0, 0, 0, 0], 4))
    U = np.arange(96.0)
    plan = generate_day_ahead_bid(L, U)
    assert plan.B is None and plan.meta["hourly_bids"] == "undefined"
    with pytest.raises(InputError):
        generate_day_ahead_bid(np.zeros(48), np.zeros(48))


def test_bid_minimizer_examples():
    lmp = np.ones(24)
    pi_s = np.full(96, 0.3)
    np.testing.assert_array_equal(bid_minimizer(pi_s, pi_s, lmp), 0.0)
    lam = pi_s.copy()
    lam[:4] += 1.0  # hour 1 pseudo-price sum is 4
    assert bid_minimizer(lam, pi_s, lmp)[0] == pytest.approx(2.0)
    lam[:4] -= 3.0
    assert bid_minimizer(lam, pi_s, lmp)[0] == 0.0
    with pytest.raises(InputError):
        bid_minimizer(lam, pi_s, np.zeros(24))


def _grid_argmin(f, hi, step=1e-4):
    grid = np.arange(0.0, hi + step, step)
    vals = f(grid)
    k = int(np.argmin(vals))
    # refine around the best grid point with a parabola through three points
    if 0 < k < grid.size - 1:
        y0, y1, y2 = vals[k - 1], vals[k], vals[k + 1]
        den = y0 - 2 * y1 + y2
        if den > 0:
            return grid[k] + 0.5 * step * (y0 - y2) / den
    return grid[k]


def test_bid_minimizer_matches_grid_search():
    rng = np.random.default_rng(0)
    for _ in range(20):
        lam = rng.uniform(0, 2, 96)
        pi_s = rng.uniform(0, 1, 96)
        lmp = rng.uniform(0.5, 2, 24)
        B = bid_minimizer(lam, pi_s, lmp)
        S = (lam - pi_s).reshape(24, 4).sum(axis=1)
        for h in range(24):
            ref = _grid_argmin(lambda b: lmp[h] * b**2 - S[h] * b, 5.0)
            assert B[h] == pytest.approx(ref, abs=1e-6)


def test_psi_separability_matches_full_vector_minimization():
    rng = np.random.default_rng(1)
    for _ in range(3):
        lam = rng.uniform(0, 2, 96)
        pi_s = rng.uniform(0, 1, 96)
        lmp = rng.uniform(0.5, 2, 24)

        def objective(B):
            return float(np.sum(lmp * B**2) - np.sum((lam - pi_s) * expand_bids(B)))

        res = minimize(objective, np.ones(24), bounds=[(0, None)] * 24, method="L-BFGS-B", options={"ftol": 1e-14})
        assert psi_value(lam, pi_s, lmp) == pytest.approx(res.fun, abs=1e-6)


def test_joint_total_cost_toy():
    # two hours of two slots each, every slot off by 0.5
    load = np.array([0.5, 1.5, 1.5, 2.5])
    assert joint_total_cost([1.0, 2.0], load, [1.0, 1.0], weight=10, slots_per_hour=2) == pytest.approx(25.0)
    assert joint_total_cost([2.0, 2.0], np.full(8, 2.0), [1e-9, 1e-9]) == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(InputError):
        joint_total_cost([1.0], np.ones(4), [1.0], weight=0)


def test_sequential_bid_matches_grid_search():
    rng = np.random.default_rng(2)
    L = rng.uniform(0, 30, 96)
    lmp = rng.uniform(0.05, 2.0, 24)
    B = sequential_bid(L, lmp, weight=10)
    for h in range(24):
        x = L[4 * h : 4 * h + 4]
        f = lambda b: 10 * np.abs(b[:, None] - x[None, :]).sum(axis=1) + lmp[h] * b**2  # noqa: E731
        ref = _grid_argmin(f, 40.0, 1e-3)
        assert f(np.array([B[h]]))[0] <= f(np.array([ref]))[0] + 1e-9


def test_supply_plan_from_bids():
    plan = SupplyPlan.from_bids([1.0, 2.0], slots_per_hour=2)
    np.testing.assert_array_equal(plan.P, [1, 1, 2, 2])
    with pytest.raises(InputError):
        SupplyPlan.from_bids([-1.0])


def test_general_cost_slacks():
    z, y = general_cost_aggregator_step([0.5, 0.0], [1.0, 2.0], LinearCost(1.0), QuadraticCost(2.0))
    np.testing.assert_allclose(z, [0.0, 0.0])
    np.testing.assert_allclose(y, [0.25, 0.5])
    with pytest.raises(InputError, match="slot 2"):
        general_cost_aggregator_step([0.5, 3.0], [0.0, 0.0], LinearCost(1.0), LinearCost(1.0))
    with pytest.raises(InputError):
        general_cost_aggregator_step([-0.1], [0.0], LinearCost(1.0), LinearCost(1.0))


def test_generic_convex_cost_search():
    quartic = ConvexCostFn(lambda x: 0.25 * x**4, upper=10.0)
    for m in (0.5, 2.0, 8.0):
        assert quartic.minimize_linear(m) == pytest.approx(m ** (1 / 3), abs=1e-6)
    quad = ConvexCostFn(lambda x: 1.5 * x**2, upper=10.0)
    ref = _grid_argmin(lambda x: 1.5 * x**2 - 2.0 * x, 10.0)
    assert quad.minimize_linear(2.0) == pytest.approx(ref, abs=1e-6)
    with pytest.raises(InputError):
        ConvexCostFn(lambda x: np.sin(x), upper=10.0)
