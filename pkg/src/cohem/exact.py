"""Exhaustive joint scheduling over the product state space of a few appliances.

Used as the optimality reference for the decentralized scheduler on tiny
neighborhoods: with a handful of appliances the product chain is small enough
to solve the real-time imbalance cost exactly, without any dual relaxation.
"""

import itertools

import numpy as np

from ._validation import InputError, check_vector
from .appliance import arrival_state, feasible_actions, reachable_states, step_power, transition

MAX_PRODUCT_STATES = 20000


def _joint_arrivals(reqs, specs, t):
    # joint distribution of next-slot arrival marks, as (marks, prob) pairs
    per = [[(theta, q) for theta, q in enumerate(r.arrival_distribution(t)) if q > 0] for r in reqs]
    for combo in itertools.product(*per):
        yield tuple(c[0] for c in combo), float(np.prod([c[1] for c in combo]))


def joint_optimal_cost(specs, reqs, U, P, pi_s, pi_p, return_policy=False):
    """Minimum expected ``sum_t pi_s (P - L)^+ + pi_p (L - P)^+`` over joint policies.

    ``L(t)`` is the summed appliance power plus ``U(t)``. Every appliance keeps
    its own deadline and horizon rules; the controller sees the full joint
    state. Returns the optimal value, and with ``return_policy`` a dict
    ``(t, joint_state) -> joint_action``.
    """
    if len(specs) != len(reqs) or not specs:
        raise InputError("need one request model per appliance")
    P = check_vector(P, name="P")
    T = P.size
    U = check_vector(U, T, name="U")
    pi_s = check_vector(pi_s, T, name="pi_s")
    pi_p = check_vector(pi_p, T, name="pi_p")
    for r in reqs:
        if r.horizon != T:
            raise InputError(f"request horizon {r.horizon} does not match T={T}")
    per_states = [reachable_states(s) for s in specs]
    n_joint = int(np.prod([len(s) for s in per_states]))
    if n_joint > MAX_PRODUCT_STATES:
        raise InputError(f"product state space has {n_joint} states, limit {MAX_PRODUCT_STATES}")
    joint_states = list(itertools.product(*per_states))

    value = {s: 0.0 for s in joint_states}  # terminal: J_{T+1} = 0
    policy = {}
    for t in range(T, 0, -1):
        arrivals = list(_joint_arrivals(reqs, specs, t + 1))
        new = {}
        for js in joint_states:
            options = [sorted(feasible_actions(s, spec, t, T)) for s, spec in zip(js, specs)]
            best, best_a = np.inf, None
            for ja in itertools.product(*options):
                load = U[t - 1] + sum(step_power(s, a, spec) for s, a, spec in zip(js, ja, specs))
                stage = pi_s[t - 1] * max(P[t - 1] - load, 0.0) + pi_p[t - 1] * max(load - P[t - 1], 0.0)
                cont = 0.0
                for marks, q in arrivals:
                    nxt = tuple(transition(s, a, th, spec) for s, a, th, spec in zip(js, ja, marks, specs))
                    cont += q * value[nxt]
                if stage + cont < best:
                    best, best_a = stage + cont, ja
            new[js] = best
            policy[(t, js)] = best_a
        value = new

    total = 0.0
    for marks, q in _joint_arrivals(reqs, specs, 1):
        total += q * value[tuple(arrival_state(spec, th) for spec, th in zip(specs, marks))]
    return (total, policy) if return_policy else total
