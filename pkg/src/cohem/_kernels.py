"""Compiled inner loops: backward induction and batched policy execution.

Appliances are packed into padded arrays (mode index 1..M, alternate index
1..R, slot index 0..T-1) so that both kernels run as plain loops.
"""

from typing import NamedTuple

import numba
import numpy as np

TIE_RTOL = 1e-12


class Packed(NamedTuple):
    durations: np.ndarray  # (M+1,) int64, index 0 unused
    deadlines: np.ndarray  # (M+1,)
    n_alt: np.ndarray  # (M+1,)
    profiles: np.ndarray  # (M+1, Rmax+1, Gmax) float


def pack(spec):
    M = spec.n_modes
    rmax = spec.max_alternates
    gmax = max(m.duration for m in spec.modes)
    durations = np.zeros(M + 1, dtype=np.int64)
    deadlines = np.zeros(M + 1, dtype=np.int64)
    n_alt = np.zeros(M + 1, dtype=np.int64)
    profiles = np.zeros((M + 1, rmax + 1, gmax))
    for m, mode in enumerate(spec.modes, start=1):
        durations[m] = mode.duration
        deadlines[m] = mode.deadline
        n_alt[m] = mode.n_alternates
        for r, prof in enumerate(mode.profiles, start=1):
            profiles[m, r, : mode.duration] = prof.samples
    return Packed(durations, deadlines, n_alt, profiles)


@numba.njit(cache=True)
def _arrival_value(k, T, p, gamma, j_idle, j_pend, deadlines):
    # expected cost-to-go at 0-based slot k for a machine free to accept a request there
    if k >= T:
        return 0.0
    M = deadlines.shape[0] - 1
    acc = 0.0
    for m in range(1, M + 1):
        acc += gamma[k, m - 1] * j_pend[k, m, deadlines[m]]
    return (1.0 - p[k]) * j_idle[k] + p[k] * acc


@numba.njit(cache=True)
def backward_pass(price, p, gamma, durations, deadlines, n_alt, profiles):
    """Finite-horizon DP; returns (initial value, J_idle, J_pend, J_run, actions).

    Value arrays carry one extra slot (index T) for the zero terminal cost.
    ``actions[i, m, q]`` is the decision for a pending mode-``m`` job with
    delay budget ``q`` at 0-based slot ``i``: 0 to wait, ``r`` to start on
    alternate ``r``. Ties go to starting, on the lowest alternate.
    """
    T = price.shape[0]
    M = durations.shape[0] - 1
    rmax = profiles.shape[1] - 1
    gmax = profiles.shape[2]
    zmax = 0
    for m in range(1, M + 1):
        if deadlines[m] > zmax:
            zmax = deadlines[m]
    j_idle = np.zeros(T + 1)
    j_pend = np.zeros((T + 1, M + 1, zmax + 1))
    j_run = np.zeros((T + 1, M + 1, rmax + 1, gmax + 1))
    actions = np.zeros((T, M + 1, zmax + 1), dtype=np.int8)

    for i in range(T - 1, -1, -1):
        t = i + 1
        nxt = _arrival_value(i + 1, T, p, gamma, j_idle, j_pend, deadlines)
        j_idle[i] = nxt
        for m in range(1, M + 1):
            G = durations[m]
            # running states: W = w in 1..G-1 consumes profile sample G - w (0-based)
            for r in range(1, n_alt[m] + 1):
                for w in range(1, G):
                    cont = nxt if w == 1 else j_run[i + 1, m, r, w - 1]
                    j_run[i, m, r, w] = price[i] * profiles[m, r, G - w] + cont
            # starting now: first sample, then either running or (G == 1) free again
            best_on = np.inf
            best_r = 1
            for r in range(1, n_alt[m] + 1):
                cont = nxt if G == 1 else j_run[i + 1, m, r, G - 1]
                val = price[i] * profiles[m, r, 0] + cont
                if r == 1 or val < best_on - TIE_RTOL * (abs(val) + abs(best_on)):
                    best_on = val
                    best_r = r
            can_wait = t < T - G
            for q in range(deadlines[m] + 1):
                if q >= 1 and can_wait:
                    wait = j_pend[i + 1, m, q - 1]
                    if best_on - wait <= TIE_RTOL * (abs(best_on) + abs(wait)):
                        j_pend[i, m, q] = best_on
                        actions[i, m, q] = best_r
                    else:
                        j_pend[i, m, q] = wait
                        actions[i, m, q] = 0
                else:
                    j_pend[i, m, q] = best_on
                    actions[i, m, q] = best_r
    initial = _arrival_value(0, T, p, gamma, j_idle, j_pend, deadlines)
    return initial, j_idle, j_pend, j_run, actions


@numba.njit(cache=True)
def simulate(actions, durations, deadlines, profiles, marks):
    """Execute a policy table on request marks of shape (n, T); returns loads (n, T).

    ``marks[k, i]`` is the requested mode at 0-based slot ``i`` (0 = none).
    Also returns start slots and arrival slots (0-based, -1 padded) per job.
    """
    n, T = marks.shape
    loads = np.zeros((n, T))
    max_jobs = T
    starts = -np.ones((n, max_jobs), dtype=np.int64)
    arrivals = -np.ones((n, max_jobs), dtype=np.int64)
    modes = np.zeros((n, max_jobs), dtype=np.int64)
    for k in range(n):
        S = 0
        R = 0
        W = 0
        Q = 0
        job = -1
        theta = marks[k, 0]
        if theta > 0:
            S = theta
            W = durations[theta]
            Q = deadlines[theta]
            job += 1
            arrivals[k, job] = 0
            modes[k, job] = theta
        for i in range(T):
            free_next = False
            if S == 0:
                free_next = True
            elif R == 0:
                a = actions[i, S, Q]
                if a == 0:
                    Q -= 1
                else:
                    loads[k, i] = profiles[S, a, 0]
                    starts[k, job] = i
                    if durations[S] == 1:
                        free_next = True
                    else:
                        R = a
                        W = durations[S] - 1
                        Q = 0
            else:
                G = durations[S]
                loads[k, i] = profiles[S, R, G - W]
                if W == 1:
                    free_next = True
                else:
                    W -= 1
            if free_next:
                theta = marks[k, i + 1] if i + 1 < T else 0
                if theta > 0:
                    S = theta
                    R = 0
                    W = durations[theta]
                    Q = deadlines[theta]
                    job += 1
                    arrivals[k, job] = i + 1
                    modes[k, job] = theta
                else:
                    S = 0
                    R = 0
                    W = 0
                    Q = 0
    return loads, starts, arrivals, modes
