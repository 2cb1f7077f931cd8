"""Scheduler estimators with a scikit-learn style interface.

``fit(neighborhood)`` computes scheduling policies, ``predict(marks)`` maps
request realizations to aggregate load profiles, ``transform(neighborhood)``
returns the mean aggregate load on fresh realizations and ``score`` is the
negative mean deviation from supply (higher is better).
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import InputError
from .coordinator import CoHEMParams, JointProcurement, run_algorithm1, selfish_policies
from .experiments import eval_marks, unscheduled_policies
from .market import PriceSet, SupplyPlan, deviation_cost
from .scenario import Neighborhood
from .sim import neighborhood_loads


def check_neighborhood(nb):
    if not isinstance(nb, Neighborhood):
        raise InputError(f"expected a Neighborhood, got {type(nb).__name__}")
    return nb


def check_marks(marks, nb):
    """Request marks as ``[h][i] -> (n, T)`` int arrays matching ``nb``."""
    if len(marks) != nb.H:
        raise InputError(f"marks cover {len(marks)} residences, neighborhood has {nb.H}")
    out = []
    n = None
    for h, (res, row) in enumerate(zip(nb.residences, marks)):
        if len(row) != len(res.specs):
            raise InputError(f"residence {h}: marks for {len(row)} appliances, expected {len(res.specs)}")
        arrs = []
        for i, (spec, m) in enumerate(zip(res.specs, row)):
            m = np.atleast_2d(np.asarray(m, dtype=np.int64))
            if m.shape[1] != nb.T or (n is not None and m.shape[0] != n):
                raise InputError(f"residence {h} appliance {i}: marks shape {m.shape} inconsistent")
            if m.min() < 0 or m.max() > spec.n_modes:
                raise InputError(f"residence {h} appliance {i}: marks outside 0..{spec.n_modes}")
            n = m.shape[0]
            arrs.append(m)
        out.append(arrs)
    return out


class _Scheduler(BaseEstimator):
    n_eval_samples = 100
    eval_seed = 0

    def _policies(self, nb):
        raise NotImplementedError

    def fit(self, X, y=None):
        nb = check_neighborhood(X)
        self.policies_ = self._policies(nb)
        self.neighborhood_ = nb
        return self

    def predict(self, marks):
        check_is_fitted(self, "policies_")
        nb = self.neighborhood_
        return neighborhood_loads(self.policies_, nb, check_marks(marks, nb)).sum(axis=0)

    def transform(self, X):
        check_is_fitted(self, "policies_")
        nb = check_neighborhood(X)
        return self.predict(eval_marks(nb, self.n_eval_samples, self.eval_seed)).mean(axis=0)

    def score(self, X, y=None):
        check_is_fitted(self, "policies_")
        nb = check_neighborhood(X)
        loads = self.predict(eval_marks(nb, self.n_eval_samples, self.eval_seed))
        return -float(deviation_cost(self._supply(nb), loads).mean())

    def _supply(self, nb):
        return nb.supply.P


class UnscheduledBaseline(_Scheduler):
    """Every job starts on arrival."""

    def __init__(self, n_eval_samples=100, eval_seed=0):
        self.n_eval_samples = n_eval_samples
        self.eval_seed = eval_seed

    def _policies(self, nb):
        return unscheduled_policies(nb)


class SelfishHEM(_Scheduler):
    """Each residence minimizes its own expected bill under the retail price."""

    def __init__(self, n_eval_samples=100, eval_seed=0):
        self.n_eval_samples = n_eval_samples
        self.eval_seed = eval_seed

    def _policies(self, nb):
        if nb.prices.pi is None:
            raise InputError("selfish scheduling needs a retail price")
        return selfish_policies(nb)


class CoHEMScheduler(_Scheduler):
    """Decentralized coordinated scheduling; ``defectors`` stay selfish."""

    def __init__(self, iterations=200, psi=15, n_samples=100, seed=0, eval_every=10, defectors=(), n_eval_samples=100, eval_seed=1):
        self.iterations = iterations
        self.psi = psi
        self.n_samples = n_samples
        self.seed = seed
        self.eval_every = eval_every
        self.defectors = defectors
        self.n_eval_samples = n_eval_samples
        self.eval_seed = eval_seed

    def _params(self):
        return CoHEMParams(self.iterations, self.psi, self.n_samples, self.seed, eval_every=self.eval_every)

    def _policies(self, nb):
        result = run_algorithm1(nb, self._params(), defectors=self.defectors)
        self.diagnostics_ = result.diagnostics
        self.lambda_ = result.lam
        return result.policies


class JointProcurementScheduler(CoHEMScheduler):
    """Coordinated scheduling with the hourly bid chosen by an aggregator node."""

    def __init__(self, iterations=200, psi=15, n_samples=100, seed=0, eval_every=10, weight=10.0, aggregator=0, n_eval_samples=100, eval_seed=1):
        super().__init__(iterations, psi, n_samples, seed, eval_every, (), n_eval_samples, eval_seed)
        self.weight = weight
        self.aggregator = aggregator

    def _policies(self, nb):
        if nb.prices.lmp is None:
            raise InputError("joint procurement needs hourly LMP values")
        prices = PriceSet.flat(nb.T, self.weight, self.weight, pi=nb.prices.pi, lmp=nb.prices.lmp)
        result = run_algorithm1(nb, self._params(), joint=JointProcurement(nb.prices.lmp, self.aggregator), prices=prices)
        self.diagnostics_ = result.diagnostics
        self.lambda_ = result.lam
        self.bid_ = result.bid
        self.supply_ = SupplyPlan.from_bids(result.bid)
        return result.policies

    def _supply(self, nb):
        return self.supply_.P
