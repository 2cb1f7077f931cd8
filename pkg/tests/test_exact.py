import numpy as np
import pytest
from conftest import random_instance

from cohem._validation import InputError
from cohem.appliance import ApplianceSpec, RequestModel
from cohem.exact import MAX_PRODUCT_STATES, joint_optimal_cost
from cohem.mdp import brute_force_policy, solve_policy


@pytest.mark.parametrize("seed", range(6))
def test_single_appliance_reduces_to_the_scheduling_dp(seed):
    # with P = 0 and pi_s = 0 the imbalance cost is pi_p * load, a linear price
    spec, req, price = random_instance(np.random.default_rng(seed), T_max=8, price_low=0.0)
    T = len(price)
    value = joint_optimal_cost([spec], [req], np.zeros(T), np.zeros(T), np.zeros(T), price)
    assert value == pytest.approx(solve_policy(spec, req, price)[1].initial, abs=1e-9)
    assert value == pytest.approx(brute_force_policy(spec, req, price), abs=1e-9)


def test_linear_costs_separate_across_appliances():
    rng = np.random.default_rng(3)
    a = random_instance(rng, T_max=6, M_max=1, price_low=0.0)
    T = len(a[2])
    spec_b = ApplianceSpec.single([1.0, 0.5], 2)
    req_b = RequestModel(rng.uniform(0, 0.5, T))
    price = a[2]
    joint = joint_optimal_cost([a[0], spec_b], [a[1], req_b], np.zeros(T), np.zeros(T), np.zeros(T), price)
    alone = solve_policy(a[0], a[1], price)[1].initial + solve_policy(spec_b, req_b, price)[1].initial
    assert joint == pytest.approx(alone, abs=1e-9)


def test_matching_supply_costs_nothing():
    spec = ApplianceSpec.single([2.0], 0)
    req = RequestModel([1.0, 0.0, 0.0])
    value, policy = joint_optimal_cost([spec], [req], [0.5, 0.5, 0.5], [2.5, 0.5, 0.5], [1.0] * 3, [1.0] * 3, True)
    assert value == pytest.approx(0.0)
    assert policy


def test_size_guard():
    spec = ApplianceSpec.single([1.0] * 6, 8)
    T = 10
    with pytest.raises(InputError, match=str(MAX_PRODUCT_STATES)):
        joint_optimal_cost([spec] * 4, [RequestModel(np.full(T, 0.1))] * 4, np.zeros(T), np.zeros(T), np.ones(T), np.ones(T))
    with pytest.raises(InputError):
        joint_optimal_cost([], [], np.zeros(T), np.zeros(T), np.ones(T), np.ones(T))
