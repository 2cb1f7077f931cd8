"""Decentralized coordination of household schedulers by consensus-subgradient dual ascent.

Each residence keeps its own copy of the per-slot multiplier ``lam``. An outer
iteration is bulk-synchronous:

1. every cooperative residence solves its appliance MDPs under the pseudo
   price ``lam_h - pi_s``;
2. it estimates its expected scheduled load by Monte Carlo;
3. it takes a local subgradient step using only its own load, its
   uncontrollable load and the broadcast supply share ``P / H``;
4. neighbors average the stepped copies ``psi`` times with a doubly
   stochastic mixing matrix, and each copy is projected onto
   ``[0, pi_s + pi_p]``.

After the iteration budget, the time-average of the per-iteration policies is
rounded and used for real-time scheduling.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import InputError, check_vector
from .market import bid_minimizer, expand_bids, psi_value, realtime_cost
from .mdp import PolicyTable, solve_policy
from .sim import estimate_expected_load, neighborhood_loads, neighborhood_marks

TRAIN_STREAM = 1
EVAL_STREAM = 2


def default_step(n):
    return 5.0 / (n + 5.0)


# -- communication graph and mixing -------------------------------------------


@dataclass(frozen=True)
class CommGraph:
    n_nodes: int
    edges: frozenset

    def __post_init__(self):
        clean = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise InputError(f"self-loop at node {a}")
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise InputError(f"edge ({a}, {b}) outside 0..{self.n_nodes - 1}")
            clean.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def complete(cls, n):
        return cls(n, frozenset((a, b) for a in range(n) for b in range(a + 1, n)))

    @classmethod
    def ring(cls, n):
        if n < 3:
            return cls.complete(n)
        return cls(n, frozenset((a, (a + 1) % n) for a in range(n)))

    @classmethod
    def path(cls, n):
        return cls(n, frozenset((a, a + 1) for a in range(n - 1)))

    @classmethod
    def star(cls, n):
        return cls(n, frozenset((0, b) for b in range(1, n)))

    def neighbors(self, h):
        return sorted({b for a, b in self.edges if a == h} | {a for a, b in self.edges if b == h})

    @property
    def degrees(self):
        deg = np.zeros(self.n_nodes, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    @property
    def n_directed_edges(self):
        return 2 * len(self.edges)

    def is_connected(self):
        if self.n_nodes == 0:
            return False
        seen, frontier = {0}, [0]
        adj = {h: [] for h in range(self.n_nodes)}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        while frontier:
            h = frontier.pop()
            for j in adj[h]:
                if j not in seen:
                    seen.add(j)
                    frontier.append(j)
        return len(seen) == self.n_nodes

    def subgraph(self, nodes):
        """Induced subgraph, relabelled ``0..len(nodes)-1`` in the given order."""
        index = {h: k for k, h in enumerate(nodes)}
        return CommGraph(
            len(nodes), frozenset((index[a], index[b]) for a, b in self.edges if a in index and b in index)
        )


def _metropolis(graph):
    deg = graph.degrees
    W = np.zeros((graph.n_nodes, graph.n_nodes))
    for a, b in graph.edges:
        W[a, b] = W[b, a] = 1.0 / (1.0 + max(deg[a], deg[b]))
    W[np.diag_indices_from(W)] = 1.0 - W.sum(axis=1)
    return W


def metropolis_weights(graph):
    """Symmetric doubly stochastic mixing matrix with Metropolis-Hastings weights."""
    if not graph.is_connected():
        raise InputError("mixing requires a connected communication graph")
    return _metropolis(graph)


def second_eigenvalue(W):
    """Largest |eigenvalue| of symmetric ``W`` on the complement of the consensus direction."""
    eig = np.sort(np.abs(np.linalg.eigvalsh(W)))[::-1]
    return float(eig[1]) if eig.size > 1 else 0.0


def local_subgradient(lam, expected_load, U, P, H, step):
    """Stepped copy ``nu = lam + step * (E[D] + U - P / H)``."""
    lam = check_vector(lam, name="lambda")
    T = lam.size
    expected_load = check_vector(expected_load, T, name="expected_load")
    U = check_vector(U, T, name="U")
    P = check_vector(P, T, name="P")
    if step < 0:
        raise InputError("step size must be nonnegative")
    return lam + step * (expected_load + U - P / H)


def mix(nu, W, psi):
    """Apply ``psi`` averaging sub-steps to the stacked copies ``nu`` (H, T)."""
    if psi < 1:
        raise InputError("psi must be at least 1")
    x = np.asarray(nu, dtype=float)
    for _ in range(int(psi)):
        x = W @ x
    return x


def project(x, upper):
    return np.clip(x, 0.0, upper)


def consensus_round(nu, W, psi, upper):
    """Mix the stepped copies and project each onto ``[0, upper(t)]``."""
    return project(mix(nu, W, psi), upper)


def centralized_update(lam, aggregate_load, P_hat, step, upper):
    """Projected dual subgradient step with full knowledge of the aggregate load."""
    return project(np.asarray(lam) + step * (np.asarray(aggregate_load) - P_hat), upper)


# -- running-average policy ---------------------------------------------------


class ActionTally:
    """Counts of each action per pending decision entry over iterations."""

    def __init__(self, like):
        T, M1, Z1 = like.actions.shape
        self.horizon = like.horizon
        self.deadlines = like.deadlines
        self.counts = np.zeros((T, M1, Z1, 1 + _max_action(like)), dtype=np.int64)
        self.n = 0

    def add(self, policy):
        a = policy.actions.astype(np.int64)
        if a.max() >= self.counts.shape[-1]:
            grown = np.zeros(self.counts.shape[:-1] + (a.max() + 1,), dtype=np.int64)
            grown[..., : self.counts.shape[-1]] = self.counts
            self.counts = grown
        np.put_along_axis(
            self.counts, a[..., None], np.take_along_axis(self.counts, a[..., None], -1) + 1, -1
        )
        self.n += 1

    def rounded(self):
        return running_average_policy(self.counts, self.n, self.deadlines)


def _max_action(policy):
    return int(policy.actions.max()) if policy.actions.size else 1


def running_average_policy(counts, n, deadlines):
    """Round the time-averaged policy to a feasible one.

    ``counts[..., a]`` is how many of the ``n`` iterates chose action ``a``.
    The entry starts the job when at least half of the iterates did (ties
    start), using the most frequent alternate; otherwise it waits. Entries
    where waiting was never allowed are started by every iterate, so rounding
    keeps them feasible.
    """
    if n < 1:
        raise InputError("need at least one iterate")
    counts = np.asarray(counts)
    wait = counts[..., 0]
    on = n - wait
    best_alt = 1 + np.argmax(counts[..., 1:], axis=-1)
    actions = np.where(2 * on >= n, best_alt, 0).astype(np.int8)
    actions[:, 0, :] = 0
    return PolicyTable(actions.shape[0], actions, tuple(deadlines))


# -- diagnostics ---------------------------------------------------------------


@dataclass
class RunDiagnostics:
    """Per-iteration traces of the dual ascent plus invariant checks."""

    psi: int
    directed_edges: int
    iterations: list = field(default_factory=list)
    dual_value: list = field(default_factory=list)
    primal_value: list = field(default_factory=list)
    primal_se: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    disagreement: list = field(default_factory=list)
    messages: list = field(default_factory=list)
    # worst case over all iterations
    bound_violation: float = 0.0
    mean_shift: float = 0.0
    decay_excess: float = -np.inf
    lambda_history: list = None
    bid_history: list = None

    @property
    def consensus_rounds_per_link(self):
        return self.messages[-1] // self.directed_edges if self.directed_edges and self.messages else 0

    def rows(self):
        for k, n in enumerate(self.iterations):
            yield {
                "iteration": n,
                "dual": self.dual_value[k],
                "primal": self.primal_value[k],
                "primal_se": self.primal_se[k],
                "gap": self.gap[k],
                "disagreement": self.disagreement[k],
                "messages": self.messages[k],
            }


def dual_objective_estimate(lam_bar, phi_values):
    """Empirical dual value: the residences' subproblem minima at the averaged multiplier."""
    return float(np.sum(phi_values))


def phi_value(residence, lam, pi_s, share):
    """Residence subproblem minimum ``min E[sum_t (lam - pi_s)(D + U - share)]``."""
    pseudo = np.asarray(lam) - pi_s
    inner = sum(solve_policy(spec, req, pseudo)[1].initial for spec, req in zip(residence.specs, residence.requests))
    return float(inner + np.sum(pseudo * (residence.U - share)))


def primal_cost_estimate(policies, neighborhood, n_eval_samples=100, seed=0, P=None, prices=None, marks=None):
    """Monte Carlo mean and standard error of the real-time cost under ``policies``."""
    P = neighborhood.supply.P if P is None else P
    prices = neighborhood.prices if prices is None else prices
    if marks is None:
        marks = neighborhood_marks(neighborhood, n_eval_samples, seed, EVAL_STREAM)
    total = neighborhood_loads(policies, neighborhood, marks).sum(axis=0)
    costs = realtime_cost(P, total, prices.pi_s, prices.pi_p)
    se = float(np.std(costs, ddof=1) / np.sqrt(costs.size)) if costs.size > 1 else 0.0
    return float(np.mean(costs)), se


# -- the outer loop ------------------------------------------------------------


@dataclass
class CoHEMParams:
    iterations: int = 200
    psi: int = 15
    n_samples: int = 100
    seed: int = 0
    step: object = default_step
    eval_every: int = 10
    n_eval_samples: int = 100
    record_lambda: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.psi < 1 or self.n_samples < 1 or self.eval_every < 1:
            raise InputError("iterations, psi, n_samples and eval_every must be positive")


@dataclass
class CoHEMResult:
    policies: list
    diagnostics: RunDiagnostics
    lam: np.ndarray
    cooperative: list
    bid: np.ndarray = None


@dataclass
class JointProcurement:
    """Aggregator-side bid subproblem for joint procurement and scheduling."""

    lmp: np.ndarray
    aggregator: int = 0
    slots_per_hour: int = 4


def selfish_policies(neighborhood, price=None):
    price = neighborhood.prices.pi if price is None else price
    return [[solve_policy(s, r, price)[0] for s, r in zip(res.specs, res.requests)] for res in neighborhood.residences]


def run_algorithm1(neighborhood, params=None, defectors=(), joint=None, mode="consensus", prices=None):
    """Run the decentralized dual ascent and return rounded running-average policies.

    ``defectors`` keep their selfish policies and never touch the multipliers.
    With ``joint``, the supply is the aggregator's bid, re-optimized each
    iteration from its local multiplier copy. ``mode="centralized"`` replaces
    consensus by the exact projected subgradient step (divided by ``H`` so the
    two coincide under exact averaging).
    """
    params = CoHEMParams() if params is None else params
    nb = neighborhood
    prices = nb.prices if prices is None else prices
    T, H = nb.T, nb.H
    upper = prices.dual_upper
    if np.any(upper < 0):
        raise InputError("pi_s + pi_p must be nonnegative at every slot")
    defectors = sorted(set(int(d) for d in defectors))
    coop = [h for h in range(H) if h not in defectors]
    selfish = selfish_policies(nb) if defectors else None

    graph = nb.graph.subgraph(coop)
    diag = RunDiagnostics(params.psi, graph.n_directed_edges)
    if not coop:
        # nobody cooperates: no multipliers to update
        return CoHEMResult(selfish, diag, np.zeros((0, T)), coop)
    W = _metropolis(graph)
    sigma = second_eigenvalue(W)
    if params.record_lambda:
        diag.lambda_history = []
    if joint is not None:
        diag.bid_history = []
        if joint.aggregator not in coop:
            raise InputError(f"aggregator node {joint.aggregator} must be cooperative")
        agg_index = coop.index(joint.aggregator)

    lam = np.tile(upper / 2.0, (len(coop), 1))
    tallies = [[None] * len(nb.residences[h].specs) for h in coop]
    bid_sum = None
    eval_marks = neighborhood_marks(nb, params.n_eval_samples, params.seed, EVAL_STREAM)
    messages = 0

    def current_policies():
        out = []
        for h in range(H):
            if h in defectors:
                out.append(selfish[h])
            else:
                out.append([t.rounded() for t in tallies[coop.index(h)]])
        return out

    for n in range(params.iterations):
        c = params.step(n)
        if joint is not None:
            B = bid_minimizer(lam[agg_index], prices.pi_s, joint.lmp, slots_per_hour=joint.slots_per_hour)
            P = expand_bids(B, joint.slots_per_hour)
            bid_sum = B if bid_sum is None else bid_sum + B
            diag.bid_history.append(B)
        else:
            P = nb.supply.P
        nu = np.empty_like(lam)
        loads = np.empty_like(lam)
        for k, h in enumerate(coop):
            res = nb.residences[h]
            pseudo = lam[k] - prices.pi_s
            policies = [solve_policy(s, r, pseudo)[0] for s, r in zip(res.specs, res.requests)]
            for i, pol in enumerate(policies):
                if tallies[k][i] is None:
                    tallies[k][i] = ActionTally(pol)
                tallies[k][i].add(pol)
            loads[k] = estimate_expected_load(
                policies, res.specs, res.requests, params.n_samples, params.seed, key=(TRAIN_STREAM, h, n)
            )
            nu[k] = local_subgradient(lam[k], loads[k], res.U, P, H, c)

        if mode == "centralized":
            agg = loads.sum(axis=0) + sum(nb.residences[h].U for h in coop)
            new = centralized_update(lam[0], agg, P * len(coop) / H, c / len(coop), upper)
            lam = np.tile(new, (len(coop), 1))
        else:
            mixed = mix(nu, W, params.psi)
            lam = project(mixed, upper)
            messages += params.psi * graph.n_directed_edges
            _check_invariants(diag, nu, mixed, lam, upper, sigma, params.psi)
        if params.record_lambda:
            diag.lambda_history.append(lam.copy())

        last = n == params.iterations - 1
        if (n + 1) % params.eval_every == 0 or last:
            lam_bar = lam.mean(axis=0)
            if joint is not None:
                B_bar = bid_sum / (n + 1)
                P_eval = expand_bids(B_bar, joint.slots_per_hour)
                phis = [phi_value(r, lam_bar, prices.pi_s, 0.0) for r in nb.residences]
                dual = dual_objective_estimate(lam_bar, phis) + psi_value(
                    lam_bar, prices.pi_s, joint.lmp, slots_per_hour=joint.slots_per_hour
                )
                primal, se = primal_cost_estimate(current_policies(), nb, P=P_eval, prices=prices, marks=eval_marks)
                primal += float(np.sum(joint.lmp * B_bar**2))
            else:
                phis = [phi_value(r, lam_bar, prices.pi_s, nb.supply.P / H) for r in nb.residences]
                dual = dual_objective_estimate(lam_bar, phis)
                primal, se = primal_cost_estimate(current_policies(), nb, prices=prices, marks=eval_marks)
            diag.iterations.append(n + 1)
            diag.dual_value.append(dual)
            diag.primal_value.append(primal)
            diag.primal_se.append(se)
            diag.gap.append((primal - dual) / abs(dual) if dual != 0 else np.inf)
            diag.disagreement.append(float(np.max(np.ptp(lam, axis=0))) if len(coop) else 0.0)
            diag.messages.append(messages)

    bid = bid_sum / params.iterations if joint is not None else None
    return CoHEMResult(current_policies(), diag, lam, coop, bid)


def _check_invariants(diag, nu, mixed, lam, upper, sigma, psi):
    diag.bound_violation = max(diag.bound_violation, float(max(-lam.min(), (lam - upper).max(), 0.0)))
    diag.mean_shift = max(diag.mean_shift, float(np.max(np.abs(mixed.mean(axis=0) - nu.mean(axis=0)))))
    before = np.linalg.norm(nu - nu.mean(axis=0), axis=0)
    after = np.linalg.norm(mixed - mixed.mean(axis=0), axis=0)
    excess = after - (sigma**psi * before + 1e-12 * (1.0 + before))
    diag.decay_excess = max(diag.decay_excess, float(excess.max()))


def run_general_cost(neighborhood, buy_cost, absorb_cost, params=None, aggregator=0):
    """Dual ascent for general convex real-time costs via slack variables.

    Residences see the pseudo price ``lam - rho``; the aggregator node solves
    the two slack subproblems from its local copies and broadcasts ``z`` and
    ``y``. Multipliers are projected onto ``[0, asymptotic slope]`` of their
    cost. Returns the rounded policies and the final multipliers.
    """
    from .market import general_cost_aggregator_step

    params = CoHEMParams() if params is None else params
    nb = neighborhood
    T, H = nb.T, nb.H
    W = metropolis_weights(nb.graph)
    P = nb.supply.P
    lam_hi = np.full(T, buy_cost.max_multiplier)
    rho_hi = np.full(T, absorb_cost.max_multiplier)
    start_l = np.where(np.isfinite(lam_hi), lam_hi / 2, 1.0)
    start_r = np.where(np.isfinite(rho_hi), rho_hi / 2, 1.0)
    lam = np.tile(start_l, (H, 1))
    rho = np.tile(start_r, (H, 1))
    tallies = [[None] * len(r.specs) for r in nb.residences]
    for n in range(params.iterations):
        c = params.step(n)
        z, y = general_cost_aggregator_step(lam[aggregator], rho[aggregator], buy_cost, absorb_cost)
        nu_l = np.empty_like(lam)
        nu_r = np.empty_like(rho)
        for h, res in enumerate(nb.residences):
            pseudo = lam[h] - rho[h]
            policies = [solve_policy(s, r, pseudo)[0] for s, r in zip(res.specs, res.requests)]
            for i, pol in enumerate(policies):
                if tallies[h][i] is None:
                    tallies[h][i] = ActionTally(pol)
                tallies[h][i].add(pol)
            load = estimate_expected_load(
                policies, res.specs, res.requests, params.n_samples, params.seed, key=(TRAIN_STREAM, h, n)
            )
            excess = load + res.U - P / H
            nu_l[h] = lam[h] + c * (excess - z / H)
            nu_r[h] = rho[h] + c * (-excess - y / H)
        lam = project(mix(nu_l, W, params.psi), lam_hi)
        rho = project(mix(nu_r, W, params.psi), rho_hi)
    policies = [[t.rounded() for t in row] for row in tallies]
    return policies, lam, rho
