"""Request sampling, real-time policy execution and Monte Carlo load estimates."""

from typing import NamedTuple

import numpy as np

from . import _kernels
from ._validation import InputError
from .appliance import arrival_state, step_power, transition
from .mdp import policy_action

DEFAULT_SAMPLES = 100


def stream(seed, *key):
    """Independent generator for ``key`` (e.g. residence, appliance, iteration)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def sample_arrivals(req, rng, n_samples=None):
    """Per-slot request marks: 0 for no request, else the requested mode.

    Returns shape ``(T,)`` when ``n_samples`` is None, else ``(n_samples, T)``.
    """
    n = 1 if n_samples is None else int(n_samples)
    T = req.horizon
    u_req = rng.random((n, T))
    u_mode = rng.random((n, T))
    requested = u_req < req.p
    cum = np.cumsum(req.gamma, axis=1)[:, :-1]
    mode = 1 + (u_mode[:, :, None] >= cum[None, :, :]).sum(axis=2)
    marks = np.where(requested, mode, 0).astype(np.int64)
    return marks[0] if n_samples is None else marks


class Execution(NamedTuple):
    trace: list  # admitted (slot, mode), 1-based slots
    load: np.ndarray
    starts: list  # start slot per admitted job, 1-based


def execute_policy(policy, spec, marks):
    """Walk the appliance state machine slot by slot under ``policy``.

    ``marks`` has one entry per slot; it is only consulted when the appliance
    is free to accept a request.
    """
    marks = np.asarray(marks)
    T = policy.horizon
    if marks.shape != (T,):
        raise InputError(f"marks must have shape ({T},), got {marks.shape}")
    load = np.zeros(T)
    trace, starts = [], []
    state = arrival_state(spec, int(marks[0]))
    if state.pending:
        trace.append((1, state.S))
    for t in range(1, T + 1):
        action = policy_action(policy, t, state, spec)
        load[t - 1] = step_power(state, action, spec)
        if state.pending and action != 0:
            starts.append(t)
        arrival = int(marks[t]) if t < T else 0
        nxt = transition(state, action, arrival, spec)
        waited = state.pending and action == 0
        if nxt.pending and not waited:
            trace.append((t + 1, nxt.S))
        state = nxt
    return Execution(trace, load, starts)


def simulate_loads(policy, spec, marks, return_jobs=False):
    """Batched execution on marks of shape (n, T); returns loads (n, T)."""
    marks = np.ascontiguousarray(np.atleast_2d(marks), dtype=np.int64)
    if marks.shape[1] != policy.horizon:
        raise InputError(f"marks have {marks.shape[1]} slots, policy horizon is {policy.horizon}")
    packed = _kernels.pack(spec)
    loads, starts, arrivals, modes = _kernels.simulate(
        np.ascontiguousarray(policy.actions), packed.durations, packed.deadlines, packed.profiles, marks
    )
    if return_jobs:
        return loads, starts, arrivals, modes
    return loads


def estimate_expected_load(policies, specs, reqs, n_samples=DEFAULT_SAMPLES, seed=0, key=()):
    """Sample mean over ``n_samples`` realizations of the residence's scheduled load.

    Appliance ``i`` draws its requests from ``stream(seed, *key, i)``, so the
    estimate does not depend on the order in which appliances are processed.
    """
    if n_samples < 1:
        raise InputError("n_samples must be at least 1")
    T = policies[0].horizon
    total = np.zeros(T)
    for i, (policy, spec, req) in enumerate(zip(policies, specs, reqs)):
        marks = sample_arrivals(req, stream(seed, *key, i), n_samples)
        total += simulate_loads(policy, spec, marks).mean(axis=0)
    return total


def count_violations(starts, arrivals, modes, spec, T):
    """Deadline and end-of-horizon violations in batched job records (0-based slots)."""
    deadlines = np.array([0] + [m.deadline for m in spec.modes])
    durations = np.array([0] + [m.duration for m in spec.modes])
    mask = arrivals >= 0
    a = arrivals[mask]
    s = starts[mask]
    d = deadlines[modes[mask]]
    g = durations[modes[mask]]
    unstarted = s < 0
    late = (s > a + d) | (s < a)
    # 1-based rule s <= max(T - G, t_arrival), shifted to 0-based slots
    horizon = s + 1 > np.maximum(T - g, a + 1)
    return int(np.sum(unstarted | late | horizon))


def neighborhood_marks(neighborhood, n_samples, seed=0, purpose=0):
    """Request marks ``[h][i] -> (n_samples, T)`` from ``stream(seed, purpose, h, i)``."""
    return [
        [sample_arrivals(req, stream(seed, purpose, h, i), n_samples) for i, req in enumerate(res.requests)]
        for h, res in enumerate(neighborhood.residences)
    ]


def neighborhood_loads(policies, neighborhood, marks):
    """Per-residence realized loads including uncontrollable load, shape (H, n, T)."""
    out = []
    for pols, res, res_marks in zip(policies, neighborhood.residences, marks):
        load = np.zeros(res_marks[0].shape) if res_marks else None
        for pol, spec, mk in zip(pols, res.specs, res_marks):
            load += simulate_loads(pol, spec, mk)
        if load is None:
            load = np.zeros((1, neighborhood.T))
        out.append(load + res.U)
    return np.stack(out)
