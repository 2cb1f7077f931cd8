import numpy as np
import pytest
from conftest import random_instance
from hypothesis import given
from hypothesis import strategies as st

from cohem._validation import InputError
from cohem.appliance import ApplianceSpec, RequestModel
from cohem.mdp import expected_load_exact, immediate_policy, solve_policy
from cohem.sim import (
    count_violations,
    estimate_expected_load,
    execute_policy,
    sample_arrivals,
    simulate_loads,
    stream,
)


def test_streams_are_reproducible_and_distinct():
    a = stream(5, 1, 2).random(4)
    np.testing.assert_array_equal(a, stream(5, 1, 2).random(4))
    assert not np.array_equal(a, stream(5, 2, 1).random(4))
    assert not np.array_equal(a, stream(6, 1, 2).random(4))


def test_sample_arrivals_frequencies():
    req = RequestModel([0.0, 0.25, 1.0], [[1.0, 0.0], [0.5, 0.5], [0.2, 0.8]])
    marks = sample_arrivals(req, stream(0), 40000)
    assert marks.shape == (40000, 3)
    assert np.all(marks[:, 0] == 0)
    assert np.mean(marks[:, 1] > 0) == pytest.approx(0.25, abs=0.01)
    assert np.mean(marks[:, 2] == 2) == pytest.approx(0.8, abs=0.01)
    assert sample_arrivals(req, stream(0)).shape == (3,)


def test_hand_simulated_realization():
    # profile [2, 1], deadline 1; price makes slot 2 the cheap start
    spec = ApplianceSpec.single([2.0, 1.0], 1)
    req = RequestModel([1.0, 0.0, 0.0, 0.0, 0.0])
    policy, _ = solve_policy(spec, req, [5.0, 1.0, 1.0, 5.0, 5.0])
    run = execute_policy(policy, spec, [1, 0, 0, 1, 0])
    # waits in slot 1, runs in 2-3, new request in 4 must start by 5 but T - G = 3 forces it now
    np.testing.assert_allclose(run.load, [0.0, 2.0, 1.0, 2.0, 1.0])
    assert run.starts == [2, 4]
    assert run.trace == [(1, 1), (4, 1)]


@given(st.integers(0, 2**31 - 1))
def test_compiled_execution_matches_reference(seed):
    rng = np.random.default_rng(seed)
    spec, req, price = random_instance(rng)
    policy, _ = solve_policy(spec, req, price)
    marks = sample_arrivals(req, rng, 5)
    loads, starts, arrivals, modes = simulate_loads(policy, spec, marks, return_jobs=True)
    for k in range(5):
        ref = execute_policy(policy, spec, marks[k])
        np.testing.assert_array_equal(loads[k], ref.load)
        assert [s + 1 for s in starts[k] if s >= 0] == ref.starts
        assert [(a + 1, int(m)) for a, m in zip(arrivals[k], modes[k]) if a >= 0] == ref.trace


def test_solved_policies_never_violate_deadlines():
    rng = np.random.default_rng(2)
    for _ in range(30):
        spec, req, price = random_instance(rng)
        policy, _ = solve_policy(spec, req, price)
        marks = sample_arrivals(req, rng, 50)
        _, starts, arrivals, modes = simulate_loads(policy, spec, marks, return_jobs=True)
        assert count_violations(starts, arrivals, modes, spec, policy.horizon) == 0


def test_violation_counter_detects_late_starts():
    spec = ApplianceSpec.single([1.0], 1)
    starts = np.array([[3, -1]])
    arrivals = np.array([[0, -1]])
    modes = np.array([[1, 0]])
    assert count_violations(starts, arrivals, modes, spec, 10) == 1


def test_monte_carlo_estimate_converges_to_exact_load():
    spec, req, price = random_instance(np.random.default_rng(4))
    policy, _ = solve_policy(spec, req, price)
    exact = expected_load_exact(spec, req, policy)
    n = 20000
    marks = sample_arrivals(req, stream(1), n)
    loads = simulate_loads(policy, spec, marks)
    se = loads.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(loads.mean(axis=0) - exact) <= 5 * se + 1e-12)


def test_estimate_is_independent_of_appliance_order():
    rng = np.random.default_rng(7)
    items = [random_instance(rng, T_max=8) for _ in range(2)]
    T = min(len(p) for _, _, p in items)
    specs = [s for s, _, _ in items]
    reqs = [RequestModel(r.p[:T], r.gamma[:T]) for _, r, _ in items]
    pols = [immediate_policy(s, T) for s in specs]
    both = estimate_expected_load(pols, specs, reqs, 50, seed=3, key=(1,))
    # each appliance draws from its own keyed stream
    first = estimate_expected_load(pols[:1], specs[:1], reqs[:1], 50, seed=3, key=(1,))
    assert np.all(both >= first - 1e-12)


def test_shape_checks():
    spec = ApplianceSpec.single([1.0], 0)
    policy = immediate_policy(spec, 4)
    with pytest.raises(InputError):
        execute_policy(policy, spec, [0, 1])
    with pytest.raises(InputError):
        simulate_loads(policy, spec, np.zeros((2, 5), dtype=int))
