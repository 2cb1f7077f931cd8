import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cohem.appliance import ApplianceSpec, RequestModel
from cohem.coordinator import CommGraph
from cohem.market import PriceSet, SupplyPlan
from cohem.scenario import Neighborhood, Residence

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def small_neighborhood(H=3, T=12, seed=0, graph=None, pi=1.0):
    """A few residences with one or two short appliances each."""
    rng = np.random.default_rng(seed)
    residences = []
    for _ in range(H):
        specs, reqs = [], []
        for _ in range(rng.integers(1, 3)):
            G = int(rng.integers(1, 4))
            specs.append(ApplianceSpec.single(rng.uniform(0.5, 2.0, G).round(2), int(rng.integers(0, 4))))
            reqs.append(RequestModel(rng.uniform(0.0, 0.3, T)))
        residences.append(Residence(specs, reqs, rng.uniform(0.1, 0.5, T)))
    P = rng.uniform(1.0, 3.0, T) * H / 2
    graph = CommGraph.ring(H) if graph is None else graph
    prices = PriceSet.flat(T, 1.0, 1.0, pi=np.full(T, pi) / P * P.mean())
    return Neighborhood(residences, graph, prices, SupplyPlan(P))


@pytest.fixture
def tiny_nb():
    return small_neighborhood()


def random_instance(rng, T_max=12, M_max=2, zeta_max=3, alt_max=2, price_low=-1.0):
    """Random appliance, request model and price for DP cross-checks."""
    from cohem.appliance import OperationMode

    T = int(rng.integers(2, T_max + 1))
    M = int(rng.integers(1, M_max + 1))
    modes = []
    for _ in range(M):
        G = int(rng.integers(1, 4))
        n_alt = int(rng.integers(1, alt_max + 1))
        profiles = tuple(tuple(rng.uniform(0, 3, G).round(3)) for _ in range(n_alt))
        modes.append(OperationMode(profiles, int(rng.integers(0, zeta_max + 1))))
    spec = ApplianceSpec(tuple(modes))
    gamma = rng.dirichlet(np.ones(M), size=T)
    req = RequestModel(rng.uniform(0, 1, T), gamma)
    price = rng.uniform(price_low, 2.0, T)
    return spec, req, price
