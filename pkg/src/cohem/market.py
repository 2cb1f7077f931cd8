"""Prices, supply plans, real-time imbalance costs and day-ahead bidding."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import InputError, check_same_length, check_vector

SLOTS_PER_HOUR = 4
BID_BLOCK = 16


@dataclass(eq=False)
class PriceSet:
    """Real-time absorb/buy prices, selfish retail price and hourly LMP."""

    pi_s: np.ndarray
    pi_p: np.ndarray
    pi: np.ndarray = None
    lmp: np.ndarray = None

    def __post_init__(self):
        self.pi_s = check_vector(self.pi_s, name="pi_s")
        self.pi_p = check_vector(self.pi_p, len(self.pi_s), name="pi_p")
        if self.pi is not None:
            self.pi = check_vector(self.pi, len(self.pi_s), name="pi")
        if self.lmp is not None:
            self.lmp = check_vector(self.lmp, name="lmp")
        if np.any(self.pi_s + self.pi_p < 0):
            bad = int(np.argmax(self.pi_s + self.pi_p < 0)) + 1
            raise InputError(f"pi_s + pi_p must be nonnegative (violated at slot {bad})")

    @property
    def dual_upper(self):
        return self.pi_s + self.pi_p

    @classmethod
    def flat(cls, T, pi_s=1.0, pi_p=1.0, **kw):
        return cls(np.full(T, float(pi_s)), np.full(T, float(pi_p)), **kw)


@dataclass(eq=False)
class SupplyPlan:
    """Slot-level supply ``P``; ``B`` holds hourly bids when ``P`` is hour-constant."""

    P: np.ndarray
    B: np.ndarray = None
    slots_per_hour: int = SLOTS_PER_HOUR
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.P = check_vector(self.P, name="P")
        if self.B is not None:
            self.B = check_vector(self.B, name="B", nonnegative=True)

    @classmethod
    def from_bids(cls, B, slots_per_hour=SLOTS_PER_HOUR):
        B = check_vector(B, name="B", nonnegative=True)
        return cls(expand_bids(B, slots_per_hour), B, slots_per_hour)


def expand_bids(B, slots_per_hour=SLOTS_PER_HOUR):
    """``P(t) = B(ceil(t / slots_per_hour))``."""
    return np.repeat(np.asarray(B, dtype=float), slots_per_hour)


def realtime_cost(P, total_load, pi_s, pi_p):
    """Real-time market cost: absorb surplus at ``pi_s``, buy shortfall at ``pi_p``."""
    P = check_vector(P, name="P")
    L = np.asarray(total_load, dtype=float)
    check_same_length(P=P, pi_s=np.asarray(pi_s), pi_p=np.asarray(pi_p), load=L.T)
    surplus = np.maximum(P - L, 0.0)
    shortfall = np.maximum(L - P, 0.0)
    return np.sum(pi_s * surplus + pi_p * shortfall, axis=-1)


def deviation_cost(P, total_load):
    """``sum_t |P(t) - L(t)|``; a batch of loads (n, T) gives one value per row."""
    P = check_vector(P, name="P")
    L = np.asarray(total_load, dtype=float)
    check_same_length(P=P, load=L.T)
    return np.sum(np.abs(P - L), axis=-1)


def generate_day_ahead_bid(expected_unscheduled, U_total, block=BID_BLOCK):
    """Supply from block-averaged expected deferrable load plus uncontrollable load.

    The block mean (16 slots = 4 hours at 15 minutes) emulates ramping limits
    and imperfect knowledge at bid time.
    """
    L = check_vector(expected_unscheduled, name="expected_unscheduled")
    U = check_vector(U_total, len(L), name="U_total")
    if L.size != 96:
        raise InputError(f"day-ahead bids assume T = 96 quarter-hour slots, got T = {L.size}")
    smooth = np.repeat(L.reshape(-1, block).mean(axis=1), block)
    P = smooth + U
    hourly = P.reshape(-1, SLOTS_PER_HOUR)
    if np.allclose(hourly, hourly[:, :1]):
        return SupplyPlan(P, hourly[:, 0].copy())
    return SupplyPlan(P, None, meta={"hourly_bids": "undefined"})


def bid_minimizer(lam, pi_s, lmp, cost=None, slots_per_hour=SLOTS_PER_HOUR):
    """Hourly bids minimizing ``sum_l C_l(B_l) - sum_t (lam(t) - pi_s(t)) B(hour(t))``, ``B >= 0``.

    With the default quadratic cost ``C_l(B) = lmp_l * B**2`` the minimizer is
    ``max(0, S_l / (2 lmp_l))`` where ``S_l`` sums the pseudo price over hour
    ``l``. A ``ConvexCostFn`` (one per hour, or shared) switches to a bounded
    scalar search.
    """
    lam = check_vector(lam, name="lambda")
    pi_s = check_vector(pi_s, len(lam), name="pi_s")
    lmp = check_vector(lmp, name="lmp")
    if lam.size != lmp.size * slots_per_hour:
        raise InputError(f"{lam.size} slots do not match {lmp.size} hours x {slots_per_hour}")
    slope = (lam - pi_s).reshape(-1, slots_per_hour).sum(axis=1)
    if cost is None:
        if np.any(lmp <= 0):
            raise InputError("quadratic bid cost needs strictly positive LMP")
        return np.maximum(0.0, slope / (2.0 * lmp))
    costs = cost if isinstance(cost, (list, tuple)) else [cost] * lmp.size
    return np.array([c.minimize_linear(s) for c, s in zip(costs, slope)])


def psi_value(lam, pi_s, lmp, B=None, slots_per_hour=SLOTS_PER_HOUR):
    """Procurement part of the joint dual function at ``lam``."""
    if B is None:
        B = bid_minimizer(lam, pi_s, lmp, slots_per_hour=slots_per_hour)
    P = expand_bids(B, slots_per_hour)
    return float(np.sum(lmp * B**2) - np.sum((np.asarray(lam) - pi_s) * P))


def joint_total_cost(B, total_load, lmp, weight=10.0, slots_per_hour=SLOTS_PER_HOUR):
    """Weighted imbalance plus quadratic procurement: ``w sum|P - L| + sum lmp B^2``.

    ``total_load`` may be a single profile or a batch of realizations; the
    imbalance term is then averaged over the batch.
    """
    if weight <= 0:
        raise InputError("weight must be positive")
    B = check_vector(B, name="B")
    lmp = check_vector(lmp, len(B), name="lmp")
    P = expand_bids(B, slots_per_hour)
    dev = np.mean(deviation_cost(P, total_load))
    return float(weight * dev + np.sum(lmp * B**2))


def sequential_bid(expected_load, lmp, weight=10.0, slots_per_hour=SLOTS_PER_HOUR):
    """Bid minimizing ``w sum|B(hour(t)) - L(t)| + sum lmp B^2`` for a fixed load forecast.

    Each hour is a 1-d convex piecewise-quadratic problem; its minimizer is a
    breakpoint or the stationary point of one quadratic piece.
    """
    L = check_vector(expected_load, name="expected_load").reshape(-1, slots_per_hour)
    lmp = check_vector(lmp, L.shape[0], name="lmp")
    bids = np.empty(L.shape[0])
    for h, (x, c) in enumerate(zip(L, lmp)):

        def f(b):
            return weight * np.abs(b - x).sum() + c * b * b

        candidates = [0.0, *np.maximum(x, 0.0)]
        for k in range(len(x) + 1):
            # k breakpoints below b: derivative w*(2k - n) + 2 c b = 0
            if c > 0:
                candidates.append(max(0.0, -weight * (2 * k - len(x)) / (2 * c)))
        bids[h] = min(candidates, key=f)
    return bids


class ConvexCostFn:
    """Convex nondecreasing scalar cost with a search bound for generic minimization."""

    def __init__(self, fn, upper=1e4, max_multiplier=np.inf, check=True, rng=None):
        self.fn = fn
        self.upper = float(upper)
        self.max_multiplier = float(max_multiplier)
        if check:
            self._check_convex(np.random.default_rng(0) if rng is None else rng)

    def __call__(self, x):
        return self.fn(x)

    def _check_convex(self, rng, trials=64):
        a = rng.uniform(0, self.upper, trials)
        b = rng.uniform(0, self.upper, trials)
        lhs = np.array([self(0.5 * (x + y)) for x, y in zip(a, b)])
        rhs = 0.5 * (np.array([self(x) for x in a]) + np.array([self(y) for y in b]))
        scale = 1e-9 * (1 + np.abs(rhs))
        if np.any(lhs > rhs + scale):
            raise InputError("cost function failed the midpoint convexity check")

    def minimize_linear(self, multiplier, tol=1e-8):
        """``argmin_{x >= 0} C(x) - multiplier * x``."""
        if multiplier <= 0:
            return 0.0
        if multiplier > self.max_multiplier:
            raise InputError(
                f"multiplier {multiplier:g} exceeds the cost's asymptotic slope {self.max_multiplier:g}; "
                "subproblem unbounded below"
            )
        res = minimize_scalar(
            lambda x: self(x) - multiplier * x,
            bounds=(0.0, self.upper),
            method="bounded",
            options={"xatol": tol},
        )
        return float(res.x)


class LinearCost(ConvexCostFn):
    def __init__(self, coef):
        if coef < 0:
            raise InputError("linear cost coefficient must be nonnegative")
        self.coef = float(coef)
        super().__init__(lambda x: self.coef * x, max_multiplier=self.coef, check=False)

    def minimize_linear(self, multiplier, tol=1e-8):
        if multiplier > self.coef:
            return super().minimize_linear(multiplier, tol)
        return 0.0


class QuadraticCost(ConvexCostFn):
    def __init__(self, coef):
        if coef <= 0:
            raise InputError("quadratic cost coefficient must be positive")
        self.coef = float(coef)
        super().__init__(lambda x: self.coef * x * x, check=False)

    def minimize_linear(self, multiplier, tol=1e-8):
        return max(0.0, multiplier / (2.0 * self.coef))


def general_cost_aggregator_step(lam, rho, buy_costs, absorb_costs):
    """Slack minimizers for general convex real-time costs.

    ``z(t)`` (load above supply) prices against the buy-side cost with
    multiplier ``lam``; ``y(t)`` (supply above load) against the absorb-side
    cost with multiplier ``rho``.
    """
    lam = check_vector(lam, name="lambda")
    rho = check_vector(rho, len(lam), name="rho")
    if np.any(lam < 0) or np.any(rho < 0):
        raise InputError("multipliers must be nonnegative")
    z = np.empty_like(lam)
    y = np.empty_like(rho)
    for t in range(lam.size):
        cb = buy_costs[t] if isinstance(buy_costs, (list, tuple)) else buy_costs
        ca = absorb_costs[t] if isinstance(absorb_costs, (list, tuple)) else absorb_costs
        try:
            z[t] = cb.minimize_linear(lam[t])
            y[t] = ca.minimize_linear(rho[t])
        except InputError as exc:
            raise InputError(f"slot {t + 1}: {exc}") from None
    return z, y
