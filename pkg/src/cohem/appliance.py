"""Deferrable appliances and their Markov state machine.

A deferrable appliance runs non-interruptible jobs. Each job belongs to an
operation mode that fixes its duration and its maximum start delay; a mode may
offer several alternate load profiles of the same duration, and the scheduler
picks one when it turns the appliance on.

The appliance state is ``(S, R, W, Q)``:

* ``S`` -- mode of the current job, 0 when idle;
* ``R`` -- chosen profile alternate, 0 while the job has not started;
* ``W`` -- remaining job length; equal to the full duration while pending,
  and ``G - elapsed`` once running;
* ``Q`` -- remaining delay budget of a pending job, 0 once started.

New requests are admitted only from the idle state or from the last working
slot of a job; requests arriving while a job waits or runs are dropped.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import ContractError, InputError

WAIT = 0


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Power draw (kW) of one job, one sample per slot."""

    samples: tuple

    def __post_init__(self):
        samples = tuple(float(s) for s in self.samples)
        if len(samples) < 1:
            raise InputError("a load profile needs at least one sample")
        if any(s < 0 or not np.isfinite(s) for s in samples):
            raise InputError("load profile samples must be finite and nonnegative")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        return isinstance(other, LoadProfile) and self.samples == other.samples

    def __hash__(self):
        return hash(self.samples)

    @property
    def duration(self):
        return len(self.samples)


@dataclass(frozen=True)
class OperationMode:
    """A job type: alternate profiles sharing one duration, plus a deadline."""

    profiles: tuple
    deadline: int

    def __post_init__(self):
        profiles = tuple(
            p if isinstance(p, LoadProfile) else LoadProfile(tuple(p)) for p in self.profiles
        )
        if not profiles:
            raise InputError("an operation mode needs at least one profile")
        if len({p.duration for p in profiles}) != 1:
            raise InputError("alternate profiles of a mode must share one duration")
        if int(self.deadline) != self.deadline or self.deadline < 0:
            raise InputError(f"deadline must be a nonnegative integer, got {self.deadline!r}")
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "deadline", int(self.deadline))

    @property
    def duration(self):
        return self.profiles[0].duration

    @property
    def n_alternates(self):
        return len(self.profiles)


@dataclass(frozen=True)
class ApplianceSpec:
    modes: tuple
    name: str = "appliance"

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise InputError("an appliance needs at least one mode")
        if not all(isinstance(m, OperationMode) for m in modes):
            raise InputError("modes must be OperationMode instances")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def single(cls, profile, deadline, name="appliance"):
        """Single-mode, single-profile appliance."""
        return cls((OperationMode((LoadProfile(tuple(profile)),), deadline),), name)

    @property
    def n_modes(self):
        return len(self.modes)

    @property
    def max_alternates(self):
        return max(m.n_alternates for m in self.modes)

    def mode(self, m):
        """1-based mode lookup."""
        return self.modes[m - 1]


class RequestModel:
    """Per-slot request probability ``p`` and mode-selection matrix ``gamma``."""

    def __init__(self, p, gamma=None):
        p = np.asarray(p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InputError("request probabilities must be a nonempty 1-d vector")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise InputError("request probabilities must lie in [0, 1]")
        if gamma is None:
            gamma = np.ones((p.size, 1))
        gamma = np.asarray(gamma, dtype=float)
        if gamma.ndim == 1:
            gamma = np.tile(gamma, (p.size, 1))
        if gamma.shape[0] != p.size:
            raise InputError(f"gamma has {gamma.shape[0]} rows, expected {p.size}")
        if np.any(gamma < 0) or np.any(gamma > 1):
            raise InputError("mode-selection probabilities must lie in [0, 1]")
        if np.any(np.abs(gamma.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("each row of gamma must sum to 1")
        self.p = p
        self.gamma = gamma
        self.p.setflags(write=False)
        self.gamma.setflags(write=False)

    @property
    def horizon(self):
        return self.p.size

    @property
    def n_modes(self):
        return self.gamma.shape[1]

    def arrival_distribution(self, t):
        """Probabilities of ``theta(t) = 0..M`` for 1-based slot ``t``; zero request beyond the horizon."""
        M = self.n_modes
        out = np.zeros(M + 1)
        if 1 <= t <= self.horizon:
            pt = self.p[t - 1]
            out[0] = 1.0 - pt
            out[1:] = pt * self.gamma[t - 1]
        else:
            out[0] = 1.0
        return out

    def __eq__(self, other):
        return (
            isinstance(other, RequestModel)
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.gamma, other.gamma)
        )

    def __repr__(self):
        return f"RequestModel(T={self.horizon}, M={self.n_modes}, expected_requests={self.p.sum():.3g})"


class ApplianceState(NamedTuple):
    S: int = 0
    R: int = 0
    W: int = 0
    Q: int = 0

    @property
    def idle(self):
        return self.S == 0

    @property
    def pending(self):
        return self.S > 0 and self.R == 0

    @property
    def running(self):
        return self.S > 0 and self.R > 0


IDLE = ApplianceState()


def arrival_state(spec, arrival):
    """State entered when request ``arrival`` (0 = none) is admitted."""
    if arrival == 0:
        return IDLE
    if not 1 <= arrival <= spec.n_modes:
        raise ContractError(f"arrival mode {arrival} outside 0..{spec.n_modes}")
    mode = spec.mode(arrival)
    return ApplianceState(arrival, 0, mode.duration, mode.deadline)


def check_state(state, spec):
    S, R, W, Q = state
    if S == 0:
        if (R, W, Q) != (0, 0, 0):
            raise ContractError(f"idle state must be (0,0,0,0), got {tuple(state)}")
        return
    if not 1 <= S <= spec.n_modes:
        raise ContractError(f"mode {S} outside 1..{spec.n_modes}")
    mode = spec.mode(S)
    if R == 0:
        if W != mode.duration or not 0 <= Q <= mode.deadline:
            raise ContractError(f"inconsistent pending state {tuple(state)}")
    else:
        if R > mode.n_alternates or Q != 0 or not 1 <= W <= mode.duration - 1:
            raise ContractError(f"inconsistent running state {tuple(state)}")


def power_at(profile, elapsed):
    """Power of ``profile`` in its ``elapsed``-th slot (1-based); zero outside the job."""
    samples = profile.samples if isinstance(profile, LoadProfile) else tuple(profile)
    if 1 <= elapsed <= len(samples):
        return samples[elapsed - 1]
    return 0.0


def feasible_actions(state, spec, t, T):
    """Admissible actions at 1-based slot ``t`` of a horizon of ``T`` slots.

    A pending job may wait only while delay budget remains and it is still
    early enough to finish within the horizon (``t < T - G``).
    """
    check_state(state, spec)
    if state.idle:
        return frozenset({WAIT})
    if state.running:
        return frozenset({state.R})
    mode = spec.mode(state.S)
    on = frozenset(range(1, mode.n_alternates + 1))
    if state.Q > 0 and t < T - mode.duration:
        return on | {WAIT}
    return on


def step_power(state, action, spec):
    """Power drawn in the current slot when ``action`` is applied in ``state``."""
    if state.idle or action == WAIT:
        return 0.0
    mode = spec.mode(state.S)
    if state.pending:
        return power_at(mode.profiles[action - 1], 1)
    return power_at(mode.profiles[state.R - 1], mode.duration - state.W + 1)


def transition(state, action, arrival, spec):
    """Next state after ``action``; ``arrival`` is the request mode at the next slot."""
    check_state(state, spec)
    if state.idle:
        if action != WAIT:
            raise ContractError("an idle appliance can only wait")
        return arrival_state(spec, arrival)
    mode = spec.mode(state.S)
    if state.running:
        if action != state.R:
            raise ContractError(f"a running job must continue with alternate {state.R}")
        if state.W == 1:
            return arrival_state(spec, arrival)
        return ApplianceState(state.S, state.R, state.W - 1, 0)
    # pending
    if action == WAIT:
        if state.Q == 0:
            raise ContractError("delay budget exhausted; the job must start")
        return ApplianceState(state.S, 0, state.W, state.Q - 1)
    if not 1 <= action <= mode.n_alternates:
        raise ContractError(f"action {action} outside 0..{mode.n_alternates}")
    if mode.duration == 1:
        return arrival_state(spec, arrival)
    return ApplianceState(state.S, action, mode.duration - 1, 0)


def reachable_states(spec):
    """Every state the machine can occupy, idle first."""
    states = [IDLE]
    for m, mode in enumerate(spec.modes, start=1):
        states.extend(ApplianceState(m, 0, mode.duration, q) for q in range(mode.deadline + 1))
        for r in range(1, mode.n_alternates + 1):
            states.extend(ApplianceState(m, r, w, 0) for w in range(1, mode.duration))
    return states
