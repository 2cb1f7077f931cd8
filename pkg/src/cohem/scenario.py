"""Synthetic neighborhoods and the scenario / results file formats.

Scenario files are JSON documents tagged with ``"schema": SCENARIO_SCHEMA``.
Results files are tab-separated with a ``# schema:`` comment line and the
columns ``run_id, iteration, metric, value``; per-slot load files use
``slot`` followed by one column per series.
"""

import json
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from ._validation import InputError, ScenarioParseError, check_vector
from .appliance import ApplianceSpec, LoadProfile, OperationMode, RequestModel
from .coordinator import CommGraph
from .market import PriceSet, SupplyPlan, generate_day_ahead_bid
from .mdp import immediate_policy
from .sim import estimate_expected_load

SCENARIO_SCHEMA = "cohem-scenario/1"
RESULTS_SCHEMA = "cohem-results/1"
RESULTS_COLUMNS = ("run_id", "iteration", "metric", "value")

SLOTS_PER_DAY = 96

# class templates: profile(s), deadline range (slots), request windows in hours
WASHER = [2.0, 0.3, 2.5]
DRYER = [3.0, 2.8, 2.2, 1.4]
DISHWASHER = [1.8, 0.2, 0.2, 1.8]
PHEV_KW = 3.0
APPLIANCE_CLASSES = ("washer", "dryer", "dishwasher", "phev")

# relative usage per hour of day (0..23)
WASHER_HOURLY = (
    0.1, 0.05, 0.05, 0.05, 0.05, 0.1, 0.3, 0.6, 0.9, 1.0, 1.0, 0.9,
    0.8, 0.7, 0.7, 0.7, 0.8, 0.9, 1.0, 1.0, 0.9, 0.7, 0.4, 0.2,
)  # fmt: skip
DRYER_HOURLY = (
    0.1, 0.05, 0.05, 0.05, 0.05, 0.05, 0.1, 0.3, 0.6, 0.9, 1.0, 1.0,
    0.9, 0.8, 0.7, 0.7, 0.7, 0.8, 0.9, 1.0, 1.0, 0.9, 0.6, 0.3,
)  # fmt: skip
DISHWASHER_HOURLY = (
    0.2, 0.1, 0.05, 0.05, 0.05, 0.05, 0.1, 0.4, 0.7, 0.6, 0.4, 0.4,
    0.6, 0.9, 0.8, 0.5, 0.4, 0.5, 0.7, 1.0, 1.0, 0.9, 0.7, 0.4,
)  # fmt: skip

# hourly day-ahead price shape ($/kWh): cheap overnight, afternoon peak
DEFAULT_LMP = (
    0.030, 0.028, 0.026, 0.025, 0.026, 0.030, 0.038, 0.045,
    0.048, 0.050, 0.052, 0.055, 0.058, 0.062, 0.066, 0.070,
    0.072, 0.070, 0.064, 0.056, 0.048, 0.042, 0.036, 0.032,
)  # fmt: skip


@dataclass
class ScenarioConfig:
    H: int = 20
    T: int = SLOTS_PER_DAY
    preset: str = "standard"  # standard | custom
    graph: str = "random_geometric"  # complete | ring | random_geometric
    mean_degree: float = 4.0
    pi_s: float = 1.0
    pi_p: float = 1.0
    lmp: tuple = DEFAULT_LMP
    lmp_scale: float = 1.0
    washer_deadline: tuple = (1, 8)
    dishwasher_deadline: tuple = (1, 8)
    dryer_deadline: tuple = (1, 12)
    phev_deadline: tuple = (1, 12)
    phev_duration: tuple = (4, 24)
    phev_p: float = 0.8
    # uncontrollable load: activity curve (kW at peak weight 1) plus switching events
    u_base: float = 0.3
    u_morning: float = 0.8
    u_evening: float = 1.4
    u_events: float = 10.0
    u_event_kw: tuple = (0.5, 2.0)
    u_event_slots: tuple = (1, 4)
    bid_samples: int = 50
    appliances: tuple = APPLIANCE_CLASSES
    # PHEV request windows as [start hour, end hour) on a 24 h clock, no wrapping
    phev_windows: tuple = ((8, 12), (17, 24), (0, 2))
    # other appliances: mean starts per day spread by hourly usage factors
    washer_starts: float = 0.6
    dryer_starts: float = 0.45
    dishwasher_starts: float = 0.75
    washer_hourly: tuple = WASHER_HOURLY
    dryer_hourly: tuple = DRYER_HOURLY
    dishwasher_hourly: tuple = DISHWASHER_HOURLY

    def __post_init__(self):
        if self.H < 1 or self.T < 1:
            raise InputError("H and T must be at least 1")
        for name in ("washer_deadline", "dishwasher_deadline", "dryer_deadline", "phev_deadline", "phev_duration"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise InputError(f"{name} range [{lo}, {hi}] is empty or negative")
            setattr(self, name, (int(lo), int(hi)))
        if self.phev_duration[0] < 1:
            raise InputError("phev_duration must be at least 1 slot")
        self.appliances = tuple(str(a) for a in self.appliances)
        unknown = set(self.appliances) - set(APPLIANCE_CLASSES)
        if not self.appliances or unknown:
            raise InputError(f"appliances must be a nonempty subset of {APPLIANCE_CLASSES}, got {self.appliances}")
        if self.preset not in ("standard", "custom"):
            raise InputError(f"unknown preset {self.preset!r}")
        if self.preset == "standard":
            if sorted(self.appliances) != sorted(APPLIANCE_CLASSES):
                raise InputError("standard preset uses all four appliance classes")
            for name, span in (
                ("washer_deadline", 8),
                ("dishwasher_deadline", 8),
                ("dryer_deadline", 12),
                ("phev_deadline", 12),
            ):
                lo, hi = getattr(self, name)
                if lo < 1 or hi > span:
                    raise InputError(f"standard preset requires {name} within [1, {span}]")
            if self.phev_duration[0] < 4 or self.phev_duration[1] > 24:
                raise InputError("standard preset requires phev_duration within [4, 24]")
        if self.graph not in ("complete", "ring", "random_geometric"):
            raise InputError(f"unknown graph family {self.graph!r}")
        if self.u_base < 0 or self.u_events < 0 or min(self.u_event_kw) < 0 or self.u_event_slots[0] < 1:
            raise InputError("uncontrollable-load parameters must be nonnegative with events of at least one slot")
        self.u_event_kw = tuple(float(x) for x in self.u_event_kw)
        self.u_event_slots = tuple(int(x) for x in self.u_event_slots)
        for name in ("washer_hourly", "dryer_hourly", "dishwasher_hourly"):
            w = tuple(float(x) for x in getattr(self, name))
            if len(w) != 24 or min(w) < 0 or sum(w) <= 0:
                raise InputError(f"{name} must be 24 nonnegative hourly factors with a positive sum")
            setattr(self, name, w)
        if min(self.washer_starts, self.dryer_starts, self.dishwasher_starts) < 0:
            raise InputError("daily starts must be nonnegative")
        if not 0 <= self.phev_p <= 1:
            raise InputError("request probabilities must lie in [0, 1]")
        if len(self.lmp) != 24 or min(self.lmp) <= 0 or self.lmp_scale <= 0:
            raise InputError("lmp must be 24 positive hourly values")
        self.lmp = tuple(float(x) for x in self.lmp)
        for name in ("phev_windows",):
            wins = tuple(tuple(int(x) for x in w) for w in getattr(self, name))
            if not wins or any(not 0 <= a < b <= 24 for a, b in wins):
                raise InputError(f"{name} must be nonempty [start, end) hour pairs within 0..24")
            setattr(self, name, wins)


@dataclass(eq=False)
class Residence:
    specs: list
    requests: list
    U: np.ndarray
    cooperative: bool = True

    def __post_init__(self):
        self.U = check_vector(self.U, name="U")
        if len(self.specs) != len(self.requests):
            raise InputError("need one request model per appliance")

    def __eq__(self, other):
        return (
            isinstance(other, Residence)
            and self.specs == other.specs
            and self.requests == other.requests
            and np.array_equal(self.U, other.U)
            and self.cooperative == other.cooperative
        )


@dataclass(eq=False)
class Neighborhood:
    residences: list
    graph: CommGraph
    prices: PriceSet
    supply: SupplyPlan
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.residences:
            raise InputError("a neighborhood needs at least one residence")
        T = self.T
        for h, res in enumerate(self.residences):
            if res.U.size != T or any(r.horizon != T for r in res.requests):
                raise InputError(f"residence {h} horizon differs from T={T}")
        if self.graph.n_nodes != self.H:
            raise InputError(f"graph has {self.graph.n_nodes} nodes, neighborhood has {self.H} residences")
        if self.prices.pi_s.size != T or self.supply.P.size != T:
            raise InputError("prices and supply must cover the horizon")

    @property
    def H(self):
        return len(self.residences)

    @property
    def T(self):
        return self.residences[0].U.size

    @property
    def U_total(self):
        return np.sum([r.U for r in self.residences], axis=0)

    def with_supply(self, supply, prices=None):
        return Neighborhood(self.residences, self.graph, prices or self.prices, supply, self.config)

    def __eq__(self, other):
        return (
            isinstance(other, Neighborhood)
            and self.residences == other.residences
            and self.graph == other.graph
            and _prices_equal(self.prices, other.prices)
            and _supply_equal(self.supply, other.supply)
            and self.config == other.config
        )


def _opt_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def _prices_equal(a, b):
    return all(_opt_equal(getattr(a, k), getattr(b, k)) for k in ("pi_s", "pi_p", "pi", "lmp"))


def _supply_equal(a, b):
    return (
        np.array_equal(a.P, b.P)
        and _opt_equal(a.B, b.B)
        and a.slots_per_hour == b.slots_per_hour
        and a.meta == b.meta
    )


def selfish_price(P):
    """Retail price inversely proportional to supply, ``1 / P``."""
    P = check_vector(P, name="P")
    if np.any(P <= 0):
        raise InputError(f"supply must be positive for the selfish price (slot {int(np.argmax(P <= 0)) + 1})")
    return 1.0 / P


# -- synthesis -------------------------------------------------------------------


def _window_slots(windows, T):
    per_hour = T / 24.0
    return [(int(round(a * per_hour)), int(round(b * per_hour))) for a, b in windows]


def _hourly_requests(rng, starts, hourly, T):
    """Per-slot request probabilities: daily starts (scaled per home) spread by hourly factors."""
    w = np.asarray(hourly)[(np.arange(T) * 24) // T]
    p = starts * rng.uniform(0.5, 1.5) * w / w.sum()
    return RequestModel(np.minimum(p, 1.0))


def _window_requests(rng, windows, prob, T):
    """One request slot drawn uniformly from each window, each firing with ``prob``."""
    p = np.zeros(T)
    for lo, hi in _window_slots(windows, T):
        if hi > lo:
            p[rng.integers(lo, hi)] = prob
    return RequestModel(p)


def activity_curve(cfg):
    """Daily double-peak activity weight per slot (morning and evening)."""
    t = (np.arange(cfg.T) + 0.5) * 24.0 / cfg.T
    return (
        0.2
        + cfg.u_morning * np.exp(-0.5 * ((t - 7.5) / 1.5) ** 2)
        + cfg.u_evening * np.exp(-0.5 * ((t - 19.0) / 2.0) ** 2)
    )


def uncontrollable_load(cfg, rng):
    """Smooth base load plus randomly timed switching events of other appliances.

    Event start times follow the activity curve, so the aggregate is rugged at
    slot level but keeps the daily double peak.
    """
    act = activity_curve(cfg)
    U = cfg.u_base * rng.uniform(0.7, 1.3) * act
    k = rng.poisson(cfg.u_events)
    starts = rng.choice(cfg.T, size=k, p=act / act.sum())
    for s in starts:
        d = rng.integers(cfg.u_event_slots[0], cfg.u_event_slots[1] + 1)
        U[s : s + d] += rng.uniform(*cfg.u_event_kw)
    return U


def _draw(rng, span):
    return int(rng.integers(span[0], span[1] + 1))


def synthesize_appliance(kind, cfg, rng):
    if kind == "washer":
        spec = ApplianceSpec.single(WASHER, _draw(rng, cfg.washer_deadline), kind)
        return spec, _hourly_requests(rng, cfg.washer_starts, cfg.washer_hourly, cfg.T)
    if kind == "dryer":
        spec = ApplianceSpec.single(DRYER, _draw(rng, cfg.dryer_deadline), kind)
        return spec, _hourly_requests(rng, cfg.dryer_starts, cfg.dryer_hourly, cfg.T)
    if kind == "dishwasher":
        spec = ApplianceSpec.single(DISHWASHER, _draw(rng, cfg.dishwasher_deadline), kind)
        return spec, _hourly_requests(rng, cfg.dishwasher_starts, cfg.dishwasher_hourly, cfg.T)
    # the PHEV draws three request slots, one from each window
    duration = _draw(rng, cfg.phev_duration)
    spec = ApplianceSpec.single([PHEV_KW] * duration, _draw(rng, cfg.phev_deadline), kind)
    return spec, _window_requests(rng, cfg.phev_windows, cfg.phev_p, cfg.T)


def synthesize_residence(cfg, rng):
    pairs = [synthesize_appliance(kind, cfg, rng) for kind in cfg.appliances]
    return Residence([p[0] for p in pairs], [p[1] for p in pairs], uncontrollable_load(cfg, rng))


def build_graph(cfg, rng):
    H = cfg.H
    if cfg.graph == "complete" or H <= 2:
        return CommGraph.complete(H)
    if cfg.graph == "ring":
        return CommGraph.ring(H)
    pos = {h: tuple(rng.random(2)) for h in range(H)}
    # radius hitting the target mean degree exactly on these positions
    xy = np.array([pos[h] for h in range(H)])
    dist = np.sort(np.linalg.norm(xy[:, None] - xy[None, :], axis=-1)[np.triu_indices(H, 1)])
    n_edges = int(round(cfg.mean_degree * H / 2))
    radius = dist[min(max(n_edges, 1), dist.size) - 1] * (1 + 1e-12)
    g = nx.random_geometric_graph(H, radius, pos=pos)
    # bridge components through their closest pair of nodes
    comps = [sorted(c) for c in nx.connected_components(g)]
    while len(comps) > 1:
        base, rest = comps[0], [h for c in comps[1:] for h in c]
        a, b = min(
            ((a, b) for a in base for b in rest),
            key=lambda e: (np.hypot(pos[e[0]][0] - pos[e[1]][0], pos[e[0]][1] - pos[e[1]][1]), e),
        )
        g.add_edge(a, b)
        comps = [sorted(c) for c in nx.connected_components(g)]
    return CommGraph(H, frozenset(tuple(sorted(e)) for e in g.edges))


def synthesize(config=None, seed=0):
    """Deterministic neighborhood for ``(config, seed)``.

    Supply is the day-ahead bid built from ``bid_samples`` Monte Carlo
    realizations of unscheduled (start-on-arrival) load, block-averaged, plus
    the total uncontrollable load. The selfish retail price is ``1 / P``.
    """
    cfg = ScenarioConfig() if config is None else config
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,)))
    residences = [synthesize_residence(cfg, rng) for _ in range(cfg.H)]
    graph = build_graph(cfg, rng)

    expected = np.zeros(cfg.T)
    for h, res in enumerate(residences):
        pols = [immediate_policy(s, cfg.T) for s in res.specs]
        expected += estimate_expected_load(pols, res.specs, res.requests, cfg.bid_samples, seed, key=(3, h))
    U_total = np.sum([r.U for r in residences], axis=0)
    if cfg.T == SLOTS_PER_DAY:
        supply = generate_day_ahead_bid(expected, U_total)
    else:
        # same six ramping blocks per day when T allows, else one block
        block = cfg.T // 6 if cfg.T % 6 == 0 else cfg.T
        smooth = np.repeat(expected.reshape(-1, block).mean(axis=1), block)
        supply = SupplyPlan(smooth + U_total, meta={"hourly_bids": "undefined"})
    prices = PriceSet.flat(
        cfg.T, cfg.pi_s, cfg.pi_p, pi=selfish_price(supply.P), lmp=np.array(cfg.lmp) * cfg.lmp_scale
    )
    echo = _config_echo(cfg)
    echo["seed"] = int(seed)
    return Neighborhood(residences, graph, prices, supply, echo)


def _config_echo(cfg):
    return json.loads(json.dumps(asdict(cfg)))


# -- scenario files ------------------------------------------------------------


def _vec(x):
    return None if x is None else [float(v) for v in x]


def scenario_to_dict(nb):
    residences = []
    for res in nb.residences:
        apps = []
        for spec, req in zip(res.specs, res.requests):
            entry = {
                "name": spec.name,
                "modes": [{"deadline": m.deadline, "profiles": [list(p.samples) for p in m.profiles]} for m in spec.modes],
                "p": _vec(req.p),
            }
            if req.n_modes > 1:
                entry["gamma"] = [_vec(row) for row in req.gamma]
            apps.append(entry)
        residences.append({"cooperative": bool(res.cooperative), "U": _vec(res.U), "appliances": apps})
    return {
        "schema": SCENARIO_SCHEMA,
        "config": nb.config,
        "T": nb.T,
        "residences": residences,
        "prices": {k: _vec(getattr(nb.prices, k)) for k in ("pi_s", "pi_p", "pi", "lmp")},
        "supply": {
            "P": _vec(nb.supply.P),
            "B": _vec(nb.supply.B),
            "slots_per_hour": nb.supply.slots_per_hour,
            "meta": nb.supply.meta,
        },
        "graph": {"n_nodes": nb.graph.n_nodes, "edges": sorted([list(e) for e in nb.graph.edges])},
    }


def save_scenario(nb, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(nb), fh, indent=1)
        fh.write("\n")


def _get(obj, key, where):
    if not isinstance(obj, dict):
        raise ScenarioParseError(f"{where}: expected an object")
    if key not in obj:
        raise ScenarioParseError(f"{where}: missing required field '{key}'")
    return obj[key]


def scenario_from_dict(doc):
    version = _get(doc, "schema", "document")
    if version != SCENARIO_SCHEMA:
        raise ScenarioParseError(f"unsupported scenario schema version {version!r} (expected {SCENARIO_SCHEMA!r})")
    try:
        residences = []
        for h, rd in enumerate(_get(doc, "residences", "document")):
            where = f"residences[{h}]"
            specs, reqs = [], []
            for i, ad in enumerate(_get(rd, "appliances", where)):
                aw = f"{where}.appliances[{i}]"
                modes = tuple(
                    OperationMode(
                        tuple(LoadProfile(tuple(p)) for p in _get(md, "profiles", f"{aw}.modes[{k}]")),
                        _get(md, "deadline", f"{aw}.modes[{k}]"),
                    )
                    for k, md in enumerate(_get(ad, "modes", aw))
                )
                specs.append(ApplianceSpec(modes, ad.get("name", "appliance")))
                reqs.append(RequestModel(_get(ad, "p", aw), ad.get("gamma")))
            residences.append(Residence(specs, reqs, np.array(_get(rd, "U", where), dtype=float), bool(rd.get("cooperative", True))))
        pd = _get(doc, "prices", "document")
        opt = lambda v: None if v is None else np.array(v, dtype=float)  # noqa: E731
        prices = PriceSet(
            np.array(_get(pd, "pi_s", "prices"), dtype=float),
            np.array(_get(pd, "pi_p", "prices"), dtype=float),
            opt(pd.get("pi")),
            opt(pd.get("lmp")),
        )
        sd = _get(doc, "supply", "document")
        supply = SupplyPlan(
            np.array(_get(sd, "P", "supply"), dtype=float), opt(sd.get("B")), int(sd.get("slots_per_hour", 4)), sd.get("meta", {})
        )
        gd = _get(doc, "graph", "document")
        graph = CommGraph(int(_get(gd, "n_nodes", "graph")), frozenset(tuple(e) for e in _get(gd, "edges", "graph")))
        return Neighborhood(residences, graph, prices, supply, doc.get("config", {}))
    except ScenarioParseError:
        raise
    except (InputError, TypeError, ValueError) as exc:
        raise ScenarioParseError(f"invalid scenario content: {exc}") from None


def load_scenario(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


# -- results files -------------------------------------------------------------


def format_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_results(path, rows):
    """Write ``(run_id, iteration, metric, value)`` rows; returns the row count."""
    n = 0
    with open(path, "w") as fh:
        fh.write(f"# schema: {RESULTS_SCHEMA}\n")
        fh.write("\t".join(RESULTS_COLUMNS) + "\n")
        for run_id, iteration, metric, value in rows:
            fh.write(f"{run_id}\t{iteration}\t{metric}\t{format_value(value)}\n")
            n += 1
    return n


def read_results(path):
    rows = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != f"# schema: {RESULTS_SCHEMA}":
        found = lines[0].strip() if lines else "<empty file>"
        raise ScenarioParseError(f"{path}: line 1: expected '# schema: {RESULTS_SCHEMA}', found {found!r}")
    if len(lines) < 2 or tuple(lines[1].split("\t")) != RESULTS_COLUMNS:
        raise ScenarioParseError(f"{path}: line 2: header must be {' '.join(RESULTS_COLUMNS)}")
    for k, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ScenarioParseError(f"{path}: line {k}: expected 4 fields, found {len(parts)}")
        try:
            rows.append((parts[0], int(parts[1]), parts[2], float(parts[3])))
        except ValueError as exc:
            raise ScenarioParseError(f"{path}: line {k}: {exc}") from None
    return rows


def write_profiles(path, series):
    """Per-slot table: ``slot`` then one column per named series."""
    names = list(series)
    T = len(next(iter(series.values()))) if names else 0
    with open(path, "w") as fh:
        fh.write("\t".join(["slot", *names]) + "\n")
        for t in range(T):
            fh.write("\t".join([str(t + 1), *(format_value(series[n][t]) for n in names)]) + "\n")
