"""Study designs: unscheduled, selfish and coordinated scheduling, robustness, joint procurement.

Every runner returns an ``Outcome`` holding result rows
``(run_id, iteration, metric, value)`` and named per-slot series. Summary
metrics use iteration 0; convergence traces use the iteration number.
All randomness flows from the seed, so identical inputs give identical rows.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import InputError
from .coordinator import (
    EVAL_STREAM,
    CoHEMParams,
    JointProcurement,
    run_algorithm1,
    selfish_policies,
)
from .market import PriceSet, SupplyPlan, deviation_cost, expand_bids, realtime_cost, sequential_bid
from .mdp import immediate_policy
from .scenario import Neighborhood, Residence
from .sim import neighborhood_loads, neighborhood_marks

DEFAULT_EVAL_SAMPLES = 100


@dataclass
class Outcome:
    rows: list = field(default_factory=list)
    profiles: dict = field(default_factory=dict)

    def add(self, run_id, metric, value, iteration=0):
        self.rows.append((run_id, int(iteration), metric, float(value)))

    def metric(self, run_id, metric):
        for r, _, m, v in self.rows:
            if r == run_id and m == metric:
                return v
        raise KeyError((run_id, metric))

    def extend(self, other):
        self.rows.extend(other.rows)
        self.profiles.update(other.profiles)


def unscheduled_policies(nb):
    return [[immediate_policy(s, nb.T) for s in res.specs] for res in nb.residences]


def evaluate(policies, nb, marks, P=None, pi_s=None, pi_p=None):
    """Realized-load statistics of ``policies`` on fixed request marks."""
    P = nb.supply.P if P is None else P
    per_res = neighborhood_loads(policies, nb, marks)  # (H, n, T)
    total = per_res.sum(axis=0)
    dev = deviation_cost(P, total)
    out = {
        "deviation": float(dev.mean()),
        "deviation_se": float(dev.std(ddof=1) / np.sqrt(dev.size)) if dev.size > 1 else 0.0,
        "mean_load": total.mean(axis=0),
        "residence_load": per_res.mean(axis=1),
    }
    if pi_s is not None:
        out["realtime_cost"] = float(realtime_cost(P, total, pi_s, pi_p).mean())
    return out


def _bills(nb, residence_load):
    if nb.prices.pi is None:
        return None
    return residence_load @ nb.prices.pi


def _emit(out, run_id, nb, stats):
    out.add(run_id, "H", nb.H)
    out.add(run_id, "deviation", stats["deviation"])
    out.add(run_id, "deviation_se", stats["deviation_se"])
    out.add(run_id, "deviation_per_residence", stats["deviation"] / nb.H)
    if "realtime_cost" in stats:
        out.add(run_id, "realtime_cost", stats["realtime_cost"])
    bills = _bills(nb, stats["residence_load"])
    if bills is not None:
        for h, b in enumerate(bills):
            out.add(run_id, f"bill_{h}", b)
    out.profiles[run_id] = stats["mean_load"]


def eval_marks(nb, n_eval, seed):
    return neighborhood_marks(nb, n_eval, seed, EVAL_STREAM)


def run_hem(nb, n_eval=DEFAULT_EVAL_SAMPLES, seed=0):
    """Each residence's own HEM under the retail price, reported per residence."""
    out = Outcome()
    marks = eval_marks(nb, n_eval, seed)
    stats = evaluate(selfish_policies(nb), nb, marks)
    for h in range(nb.H):
        out.add("hem", f"load_{h}", stats["residence_load"][h].sum())
    _emit(out, "hem", nb, stats)
    out.profiles["supply"] = nb.supply.P
    return out


def run_selfish(nb, n_eval=DEFAULT_EVAL_SAMPLES, seed=0):
    out = Outcome()
    marks = eval_marks(nb, n_eval, seed)
    _emit(out, "selfish", nb, evaluate(selfish_policies(nb), nb, marks))
    _emit(out, "unscheduled", nb, evaluate(unscheduled_policies(nb), nb, marks))
    out.profiles["supply"] = nb.supply.P
    return out


def pick_defectors(H, count, seed):
    if not 0 <= count <= H:
        raise InputError(f"defector count {count} outside 0..{H}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(4, int(count))))
    return sorted(int(h) for h in rng.choice(H, size=count, replace=False))


def _diagnostic_rows(out, run_id, diag):
    for row in diag.rows():
        n = row["iteration"]
        out.add(run_id, "dual", row["dual"], n)
        out.add(run_id, "primal", row["primal"], n)
        out.add(run_id, "gap", row["gap"], n)
        out.add(run_id, "disagreement", row["disagreement"], n)
        out.add(run_id, "messages", row["messages"], n)
    out.add(run_id, "consensus_rounds_per_link", diag.consensus_rounds_per_link)
    _invariant_rows(out, run_id, diag)


def _invariant_rows(out, run_id, diag):
    out.add(run_id, "bound_violation", diag.bound_violation)
    out.add(run_id, "mean_shift", diag.mean_shift)
    out.add(run_id, "decay_excess", diag.decay_excess if np.isfinite(diag.decay_excess) else 0.0)


def run_cohem(nb, params=None, defectors=(), n_eval=DEFAULT_EVAL_SAMPLES, run_id="cohem", baselines=True):
    """Coordinated scheduling end to end, evaluated with the baselines on shared realizations."""
    params = CoHEMParams() if params is None else params
    result = run_algorithm1(nb, params, defectors=defectors)
    marks = eval_marks(nb, n_eval, params.seed + 1)
    out = Outcome()
    _emit(out, run_id, nb, evaluate(result.policies, nb, marks, pi_s=nb.prices.pi_s, pi_p=nb.prices.pi_p))
    out.add(run_id, "defectors", len(defectors))
    _diagnostic_rows(out, run_id, result.diagnostics)
    if baselines:
        _emit(out, "unscheduled", nb, evaluate(unscheduled_policies(nb), nb, marks))
        _emit(out, "selfish", nb, evaluate(selfish_policies(nb), nb, marks))
    out.profiles["supply"] = nb.supply.P
    return out, result


def robustness_sweep(nb, fractions=(0.0, 0.25, 0.5, 0.75, 1.0), params=None, seeds=(0, 1, 2), n_eval=DEFAULT_EVAL_SAMPLES):
    """Deviation cost against the share of residences that keep their selfish policy."""
    params = CoHEMParams() if params is None else params
    out = Outcome()
    unsched = []
    for seed in seeds:
        p = CoHEMParams(**{**params.__dict__, "seed": seed})
        marks = eval_marks(nb, n_eval, seed + 1)
        unsched.append(evaluate(unscheduled_policies(nb), nb, marks)["deviation"])
        for f in fractions:
            if not 0 <= f <= 1:
                raise InputError(f"defector fraction {f} outside [0, 1]")
            count = int(round(f * nb.H))
            result = run_algorithm1(nb, p, defectors=pick_defectors(nb.H, count, seed))
            dev = evaluate(result.policies, nb, marks)["deviation"]
            out.add(f"sweep-{f:g}-s{seed}", "deviation", dev)
            out.add(f"sweep-{f:g}-s{seed}", "defectors", count)
            _invariant_rows(out, f"sweep-{f:g}-s{seed}", result.diagnostics)
    for f in fractions:
        vals = [out.metric(f"sweep-{f:g}-s{s}", "deviation") for s in seeds]
        out.add(f"sweep-{f:g}", "deviation", np.mean(vals))
        out.add(f"sweep-{f:g}", "defector_fraction", f)
    out.add("unscheduled", "deviation", np.mean(unsched))
    return out


def without_uncontrollable(nb):
    residences = [Residence(r.specs, r.requests, np.zeros(nb.T), r.cooperative) for r in nb.residences]
    return Neighborhood(residences, nb.graph, nb.prices, nb.supply, nb.config)


def run_joint(nb, params=None, weight=10.0, lmp=None, n_eval=DEFAULT_EVAL_SAMPLES, aggregator=0):
    """Joint bid-and-schedule design against bid-then-schedule.

    Both designs neglect uncontrollable load and price imbalance at ``weight``
    in both directions, so the real-time cost is ``weight * sum |P - L|``;
    the bid cost is ``sum lmp * B**2``.
    """
    params = CoHEMParams() if params is None else params
    if weight <= 0:
        raise InputError("weight must be positive")
    lmp = nb.prices.lmp if lmp is None else np.asarray(lmp, dtype=float)
    if lmp is None or lmp.size * 4 != nb.T:
        raise InputError("joint procurement needs 24 hourly LMP values and T = 96")
    base = without_uncontrollable(nb)
    prices = PriceSet.flat(nb.T, weight, weight, pi=nb.prices.pi, lmp=lmp)
    marks = eval_marks(nb, n_eval, params.seed + 1)
    out = Outcome()

    # sequential: bid against the unscheduled expectation, then coordinate
    expected = evaluate(unscheduled_policies(base), base, eval_marks(nb, 50, params.seed + 2))["mean_load"]
    B_seq = sequential_bid(expected, lmp, weight)
    seq_nb = Neighborhood(base.residences, base.graph, prices, SupplyPlan.from_bids(B_seq), base.config)
    seq = run_algorithm1(seq_nb, params)
    _joint_rows(out, "sequential", seq_nb, seq, B_seq, lmp, weight, marks)

    joint = run_algorithm1(seq_nb, params, joint=JointProcurement(lmp, aggregator), prices=prices)
    joint_nb = Neighborhood(base.residences, base.graph, prices, SupplyPlan.from_bids(joint.bid), base.config)
    _joint_rows(out, "joint", joint_nb, joint, joint.bid, lmp, weight, marks)
    return out


def _joint_rows(out, run_id, nb, result, B, lmp, weight, marks):
    stats = evaluate(result.policies, nb, marks)
    procurement = float(np.sum(lmp * B**2))
    out.add(run_id, "procurement_cost", procurement)
    out.add(run_id, "weighted_deviation", weight * stats["deviation"])
    out.add(run_id, "total_cost", procurement + weight * stats["deviation"])
    for hour, b in enumerate(B):
        out.add(run_id, f"bid_{hour + 1}", b)
    _diagnostic_rows(out, run_id, result.diagnostics)
    out.profiles[run_id] = stats["mean_load"]
    out.profiles[f"{run_id}_supply"] = expand_bids(B)


# -- reporting -------------------------------------------------------------------


def report(rows):
    """Plain-text summary tables from result rows (possibly from several files)."""
    if not rows:
        return ""
    summary = {}
    traces = {}
    for run_id, it, metric, value in rows:
        if it == 0:
            summary.setdefault(run_id, {})[metric] = value
        else:
            traces.setdefault(run_id, {}).setdefault(it, {})[metric] = value
    lines = []
    dev_runs = [(r, m) for r, m in summary.items() if "deviation" in m]
    if dev_runs:
        lines.append("run_id\tH\tdeviation\tdeviation_per_residence")
        for r, m in dev_runs:
            H = m.get("H", float("nan"))
            per = m.get("deviation_per_residence", m["deviation"] / H if H == H else float("nan"))
            lines.append(f"{r}\t{H:g}\t{m['deviation']:.3f}\t{per:.3f}")
    cost_runs = [(r, m) for r, m in summary.items() if "total_cost" in m]
    if cost_runs:
        lines.append("")
        lines.append("run_id\tprocurement_cost\tweighted_deviation\ttotal_cost")
        for r, m in cost_runs:
            lines.append(f"{r}\t{m['procurement_cost']:.3f}\t{m['weighted_deviation']:.3f}\t{m['total_cost']:.3f}")
    for r, its in traces.items():
        lines.append("")
        lines.append(f"trace {r}")
        lines.append("iteration\tprimal\tdual\tgap\tdisagreement\tmessages")
        for it in sorted(its):
            m = its[it]
            lines.append(
                f"{it}\t{m.get('primal', float('nan')):.3f}\t{m.get('dual', float('nan')):.3f}\t"
                f"{m.get('gap', float('nan')):.4f}\t{m.get('disagreement', float('nan')):.4g}\t{m.get('messages', 0):g}"
            )
    return "\n".join(lines) + "\n"
