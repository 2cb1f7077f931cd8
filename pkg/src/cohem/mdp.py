"""Finite-horizon dynamic programming for a single deferrable appliance.

``solve_policy`` minimizes the expected cost ``sum_t E[price(t) * D(t)]`` over
scheduling policies that respect each job's delay budget and the end-of-horizon
start rule. The same solver serves the selfish scheduler (retail price) and the
dual subproblem of the coordinated scheduler (pseudo price, possibly negative).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from ._validation import ContractError, InputError, check_vector
from .appliance import (
    WAIT,
    arrival_state,
    check_state,
    feasible_actions,
    reachable_states,
    step_power,
    transition,
)

BRUTE_FORCE_MAX_T = 14


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Decisions for pending jobs, indexed ``actions[t-1, mode, remaining_delay]``.

    Idle and running states are not stored; their actions are forced. Entries
    for exhausted or horizon-bound delay budgets hold the chosen alternate.
    """

    horizon: int
    actions: np.ndarray
    deadlines: tuple

    def __post_init__(self):
        self.actions.setflags(write=False)

    def for_mode(self, m):
        return self.actions[:, m, : self.deadlines[m - 1] + 1]

    @property
    def n_decision_states(self):
        """Pending states per slot where waiting is an option (before the horizon rule binds)."""
        return sum(self.deadlines)

    def __eq__(self, other):
        return (
            isinstance(other, PolicyTable)
            and self.horizon == other.horizon
            and self.deadlines == other.deadlines
            and np.array_equal(self.actions, other.actions)
        )


@dataclass(frozen=True, eq=False)
class CostToGo:
    """Optimal expected cost-to-go; ``initial`` includes requests in slot 1."""

    initial: float
    idle: np.ndarray
    pending: np.ndarray
    running: np.ndarray

    def value(self, t, state):
        """``J_t(state)`` for 1-based ``t`` in ``1..T+1``."""
        i = t - 1
        if state.S == 0:
            return float(self.idle[i])
        if state.R == 0:
            return float(self.pending[i, state.S, state.Q])
        return float(self.running[i, state.S, state.R, state.W])


def _check_inputs(spec, req, price):
    price = check_vector(price, name="price")
    T = price.size
    if req.horizon != T:
        raise InputError(f"request model horizon {req.horizon} does not match price length {T}")
    if req.n_modes != spec.n_modes:
        raise InputError(f"request model has {req.n_modes} modes, appliance has {spec.n_modes}")
    return price, T


def solve_policy(spec, req, price):
    """Optimal policy and cost-to-go for ``spec`` under per-slot ``price``."""
    price, T = _check_inputs(spec, req, price)
    packed = _kernels.pack(spec)
    initial, j_idle, j_pend, j_run, actions = _kernels.backward_pass(
        price,
        req.p,
        np.ascontiguousarray(req.gamma),
        packed.durations,
        packed.deadlines,
        packed.n_alt,
        packed.profiles,
    )
    policy = PolicyTable(T, actions, tuple(m.deadline for m in spec.modes))
    return policy, CostToGo(float(initial), j_idle, j_pend, j_run)


def immediate_policy(spec, T):
    """Start every job on arrival with its first alternate (the unscheduled baseline)."""
    zmax = max(m.deadline for m in spec.modes)
    actions = np.ones((T, spec.n_modes + 1, zmax + 1), dtype=np.int8)
    actions[:, 0, :] = 0
    return PolicyTable(T, actions, tuple(m.deadline for m in spec.modes))


def policy_action(policy, t, state, spec):
    """Action prescribed at 1-based slot ``t`` in ``state``."""
    if not 1 <= t <= policy.horizon:
        raise ContractError(f"slot {t} outside 1..{policy.horizon}")
    check_state(state, spec)
    if state.idle:
        return WAIT
    if state.running:
        return state.R
    action = int(policy.actions[t - 1, state.S, state.Q])
    if action not in feasible_actions(state, spec, t, policy.horizon):
        raise ContractError(f"stored action {action} infeasible at t={t}, state={tuple(state)}")
    return action


def bellman_residual(spec, req, price, cost_to_go):
    """Largest violation of the Bellman equation, rechecked state by state.

    Uses the reference state machine rather than the compiled recursion.
    """
    price, T = _check_inputs(spec, req, price)
    worst = 0.0
    states = reachable_states(spec)
    for t in range(T, 0, -1):
        dist = req.arrival_distribution(t + 1)
        for state in states:
            best = np.inf
            for a in feasible_actions(state, spec, t, T):
                cont = 0.0
                for theta, prob in enumerate(dist):
                    if prob > 0:
                        cont += prob * cost_to_go.value(t + 1, transition(state, a, theta, spec))
                best = min(best, price[t - 1] * step_power(state, a, spec) + cont)
            worst = max(worst, abs(best - cost_to_go.value(t, state)))
    return worst


def brute_force_policy(spec, req, price):
    """Exact optimal expected cost by expectimax over job-level start decisions.

    Requests are dropped while a job waits or runs, so nothing is learned
    between a request and its start: choosing a start slot and alternate at
    request time is as good as deciding slot by slot. The search therefore
    branches on each admitted request and every admissible (start, alternate)
    pair, independently of the state-machine recursion.
    """
    price, T = _check_inputs(spec, req, price)
    if T > BRUTE_FORCE_MAX_T:
        raise InputError(f"brute force limited to T <= {BRUTE_FORCE_MAX_T}, got T={T}")
    size = sum(m.n_alternates * (m.deadline + 1) for m in spec.modes)
    if size > 64:
        raise InputError(f"brute force limited to 64 (alternate, start) choices per request, got {size}")

    def job_cost(profile, start):
        return sum(
            price[start + k - 2] * g for k, g in enumerate(profile.samples, start=1) if start + k - 1 <= T
        )

    @lru_cache(maxsize=None)
    def free_from(a):
        # expected optimal cost when a request may be admitted at slot a
        if a > T:
            return 0.0
        total = (1.0 - req.p[a - 1]) * free_from(a + 1)
        for m, mode in enumerate(spec.modes, start=1):
            prob = req.p[a - 1] * req.gamma[a - 1, m - 1]
            if prob == 0:
                continue
            latest = min(a + mode.deadline, max(T - mode.duration, a))
            best = min(
                job_cost(profile, s) + free_from(s + mode.duration)
                for s in range(a, latest + 1)
                for profile in mode.profiles
            )
            total += prob * best
        return total

    return free_from(1)


def evaluate_policy(spec, req, price, policy):
    """Exact expected cost of following ``policy`` (forward distribution propagation)."""
    price, T = _check_inputs(spec, req, price)
    cost = 0.0
    for t, dist in enumerate(state_distributions(spec, req, policy), start=1):
        for state, prob in dist.items():
            a = policy_action(policy, t, state, spec)
            cost += prob * price[t - 1] * step_power(state, a, spec)
    return cost


def state_distributions(spec, req, policy):
    """Yield the state distribution (dict) at each slot 1..T under ``policy``."""
    T = policy.horizon
    dist = {}
    for theta, prob in enumerate(req.arrival_distribution(1)):
        if prob > 0:
            s = arrival_state(spec, theta)
            dist[s] = dist.get(s, 0.0) + prob
    for t in range(1, T + 1):
        yield dist
        nxt = {}
        arr = req.arrival_distribution(t + 1)
        for state, prob in dist.items():
            a = policy_action(policy, t, state, spec)
            for theta, q in enumerate(arr):
                if q > 0:
                    s = transition(state, a, theta, spec)
                    nxt[s] = nxt.get(s, 0.0) + prob * q
        dist = nxt


def expected_load_exact(spec, req, policy):
    """Exact ``E[D(t)]`` under ``policy``."""
    T = policy.horizon
    out = np.zeros(T)
    for t, dist in enumerate(state_distributions(spec, req, policy), start=1):
        for state, prob in dist.items():
            out[t - 1] += prob * step_power(state, policy_action(policy, t, state, spec), spec)
    return out
