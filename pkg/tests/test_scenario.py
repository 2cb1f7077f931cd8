import json

import numpy as np
import pytest

from cohem._validation import InputError, ScenarioParseError
from cohem.scenario import (
    PHEV_KW,
    ScenarioConfig,
    activity_curve,
    load_scenario,
    read_results,
    save_scenario,
    scenario_to_dict,
    selfish_price,
    synthesize,
    synthesize_appliance,
    write_results,
)


def test_one_residence_has_the_four_appliance_classes():
    nb = synthesize(ScenarioConfig(H=1), seed=0)
    res = nb.residences[0]
    assert [s.name for s in res.specs] == ["washer", "dryer", "dishwasher", "phev"]
    phev = res.specs[3].modes[0].profiles[0].samples
    assert set(phev) == {PHEV_KW}
    # uncontrollable load varies within the hour, so no hourly bid vector exists
    assert nb.T == 96 and nb.supply.B is None
    np.testing.assert_allclose(nb.prices.pi, 1.0 / nb.supply.P)


def test_synthesis_is_deterministic():
    cfg = ScenarioConfig(H=4)
    assert synthesize(cfg, 3) == synthesize(cfg, 3)
    assert synthesize(cfg, 3) != synthesize(cfg, 4)


def test_round_trip(tmp_path):
    nb = synthesize(ScenarioConfig(H=3), seed=1)
    path = tmp_path / "s.json"
    save_scenario(nb, path)
    assert load_scenario(path) == nb
    # writing the loaded copy gives the same bytes
    save_scenario(load_scenario(path), tmp_path / "t.json")
    assert path.read_bytes() == (tmp_path / "t.json").read_bytes()


def test_parse_errors_name_the_problem(tmp_path):
    doc = scenario_to_dict(synthesize(ScenarioConfig(H=1, T=24, preset="custom"), seed=0))
    bad = dict(doc)
    del bad["supply"]
    path = tmp_path / "a.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ScenarioParseError, match="supply"):
        load_scenario(path)
    bad = dict(doc, schema="cohem-scenario/9")
    path.write_text(json.dumps(bad))
    with pytest.raises(ScenarioParseError, match="cohem-scenario/9"):
        load_scenario(path)
    path.write_text('{"schema": "cohem-scenario/1",\n "T": }')
    with pytest.raises(ScenarioParseError, match="line 2"):
        load_scenario(path)
    doc["residences"][0]["appliances"][0].pop("p")
    path.write_text(json.dumps(doc))
    with pytest.raises(ScenarioParseError, match=r"residences\[0\].appliances\[0\]"):
        load_scenario(path)


def test_synthesized_appliances_respect_standard_ranges():
    cfg = ScenarioConfig()
    rng = np.random.default_rng(0)
    spans = {"washer": (1, 8), "dishwasher": (1, 8), "dryer": (1, 12), "phev": (1, 12)}
    kinds = list(spans)
    for k in range(10_000):
        kind = kinds[k % 4]
        spec, req = synthesize_appliance(kind, cfg, rng)
        lo, hi = spans[kind]
        assert lo <= spec.modes[0].deadline <= hi
        assert np.all((0 <= req.p) & (req.p <= 1))
        np.testing.assert_allclose(req.gamma.sum(axis=1), 1.0)
        if kind == "phev":
            assert 4 <= spec.modes[0].duration <= 24
            # one request slot in each of the three windows
            hours = np.flatnonzero(req.p) // 4
            assert len(hours) == 3
            assert 8 <= hours[0] + 24 * (hours[0] < 8) or hours[0] < 2
            np.testing.assert_allclose(req.p[req.p > 0], 0.8)


def test_selfish_price():
    np.testing.assert_allclose(selfish_price([2.0, 4.0]), [0.5, 0.25])
    with pytest.raises(InputError, match="slot 2"):
        selfish_price([1.0, 0.0])


@pytest.mark.parametrize(
    "kw",
    [
        dict(H=0),
        dict(washer_deadline=(3, 2)),
        dict(washer_deadline=(1, 9)),
        dict(phev_duration=(2, 24)),
        dict(appliances=("washer",)),
        dict(appliances=("toaster",), preset="custom"),
        dict(graph="torus"),
        dict(preset="other"),
        dict(lmp=(1.0,) * 23),
        dict(phev_p=1.5),
        dict(washer_hourly=(1.0,) * 23),
    ],
)
def test_config_errors(kw):
    with pytest.raises(InputError):
        ScenarioConfig(**kw)


def test_custom_preset_allows_wider_ranges():
    cfg = ScenarioConfig(preset="custom", washer_deadline=(0, 20), appliances=("washer",), T=24, H=2)
    nb = synthesize(cfg, 0)
    assert len(nb.residences[0].specs) == 1


@pytest.mark.parametrize("seed", range(5))
def test_geometric_graph_is_connected_with_target_degree(seed):
    nb = synthesize(ScenarioConfig(H=20, T=24, preset="custom", bid_samples=2), seed)
    assert nb.graph.is_connected()
    assert 4.0 <= nb.graph.degrees.mean() <= 4.6


def test_activity_curve_has_two_peaks():
    act = activity_curve(ScenarioConfig())
    hours = np.arange(96) / 4
    assert 6 <= hours[np.argmax(act[:48])] <= 9
    assert 17 <= hours[48 + np.argmax(act[48:])] <= 21


def test_results_round_trip(tmp_path):
    rows = [("cohem", 0, "deviation", 1.0 / 3.0), ("cohem", 10, "messages", 12)]
    path = tmp_path / "r.tsv"
    assert write_results(path, rows) == 2
    back = read_results(path)
    assert back[0] == ("cohem", 0, "deviation", 1.0 / 3.0)
    assert back[1] == ("cohem", 10, "messages", 12.0)


@pytest.mark.parametrize(
    "text, where",
    [
        ("", "line 1"),
        ("# schema: cohem-results/2\n", "line 1"),
        ("# schema: cohem-results/1\nrun\tmetric\n", "line 2"),
        ("# schema: cohem-results/1\nrun_id\titeration\tmetric\tvalue\nx\t0\tm\n", "line 3"),
        ("# schema: cohem-results/1\nrun_id\titeration\tmetric\tvalue\nx\t0\tm\tabc\n", "line 3"),
    ],
)
def test_results_parse_errors(tmp_path, text, where):
    path = tmp_path / "r.tsv"
    path.write_text(text)
    with pytest.raises(ScenarioParseError, match=where):
        read_results(path)
