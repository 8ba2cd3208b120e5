import json

import pytest

from conftest import single_link
from infoprop.config import settings
from infoprop.exceptions import ScenarioError
from infoprop.loaders.scenario_loader import load_scenario, parse_scenario, save_scenario


def test_minimal_scenario(minimal):
    assert minimal.name == "minimal"
    assert [link.id for link in minimal.links] == ["l1"]
    assert minimal.bin_edges() == pytest.approx([i / 12 for i in range(7)])
    assert minimal.demand_at("od1", 0.3) == 1500.0
    assert minimal.route_shares_at("od1", 0.0) == {"r1": 1.0}


def test_corridor_scenario(corridor):
    assert len(corridor.ods) == 4
    assert len(corridor.links) == 9
    assert corridor.link_fd("m1").max_flow == pytest.approx(5 * 2000.0)


def test_missing_link_is_named():
    data = single_link([(0.0, 900.0)])
    data["routes"][0]["links"] = ["l1", "ghost"]

    with pytest.raises(ScenarioError, match="r1.*ghost"):
        parse_scenario(data, "inline")


def test_od_endpoints_must_be_centroids():
    data = single_link([(0.0, 900.0)])
    data["nodes"][1]["centroid"] = False

    with pytest.raises(ScenarioError, match="not a centroid"):
        parse_scenario(data)


def test_step_must_respect_the_shortest_link():
    # 1 km at 60 km/h allows at most 1/120 h
    with pytest.raises(ScenarioError, match="largest admissible step"):
        parse_scenario(single_link([(0.0, 900.0)], dt=0.01))
    assert parse_scenario(single_link([(0.0, 900.0)]), dt=0.008).dt == 0.008


def test_priority_columns_name_real_links():
    data = single_link([(0.0, 900.0)])
    data["nodes"][1]["priorities"] = {"l9": {"@sink": 1.0}}

    with pytest.raises(ScenarioError, match="l9"):
        parse_scenario(data)


def test_bad_json_reports_the_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"name": "x",\n  "horizon": }')

    with pytest.raises(ScenarioError, match=r"broken.json:2:"):
        load_scenario(path)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "nope.json")


def test_save_and_reload(tmp_path, corridor):
    path = save_scenario(corridor, tmp_path / "out" / "corridor.json")

    assert load_scenario(path) == corridor
    assert json.loads(path.read_text())["name"] == "corridor"


def test_bin_width_defaults_to_the_configured_one(build, monkeypatch):
    monkeypatch.setattr(settings, "bin_minutes", 10.0)

    scenario = build(single_link([(0.0, 900.0)]))
    explicit = build(single_link([(0.0, 900.0)], bin_minutes=15.0))

    assert scenario.bin_edges() == pytest.approx([0.0, 1 / 6, 2 / 6, 0.5])
    assert explicit.bin_minutes == 15.0
