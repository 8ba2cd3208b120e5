from pathlib import Path

import pytest

from infoprop.loaders.scenario_loader import load_scenario, parse_scenario
from infoprop.models.fundamental_diagram import FundamentalDiagram

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"


@pytest.fixture
def fd():
    """Triangular diagram used across the worked examples"""
    return FundamentalDiagram.triangular(1800.0, 30.0, 120.0)


@pytest.fixture
def minimal_path():
    return SCENARIO_DIR / "minimal.json"


@pytest.fixture
def corridor_path():
    return SCENARIO_DIR / "corridor.json"


@pytest.fixture
def minimal(minimal_path):
    return load_scenario(minimal_path)


@pytest.fixture(scope="session")
def corridor():
    return load_scenario(SCENARIO_DIR / "corridor.json")


def single_link(
    demand: list[tuple[float, float]],
    *,
    length: float = 1.0,
    horizon: float = 0.5,
    exit_capacity: float | None = None,
    dt: float | None = None,
    **extra,
) -> dict:
    """Scenario document for one link between two centroids"""
    link = {"id": "l1", "from_node": "o", "to_node": "d", "length": length, "fd_class": "road"}
    if exit_capacity is not None:
        link["exit_capacity"] = exit_capacity
    data = {
        "name": "single",
        "horizon": horizon,
        "dt": dt,
        "link_classes": {
            "road": {"max_flow": 1800.0, "critical_density": 30.0, "jam_density": 120.0}
        },
        "links": [link],
        "nodes": [{"id": "o", "centroid": True}, {"id": "d", "centroid": True}],
        "ods": [{"id": "od1", "origin": "o", "destination": "d"}],
        "routes": [{"id": "r1", "od": "od1", "links": ["l1"]}],
        "demands": [{"od": "od1", "series": [list(p) for p in demand]}],
        "sensors": [
            {"id": "s_in", "link": "l1", "end": "upstream"},
            {"id": "s_out", "link": "l1", "end": "downstream"},
        ],
    }
    data.update(extra)
    return data


def two_links(demand: list[tuple[float, float]], *, horizon: float = 0.5, **extra) -> dict:
    """Two 1 km links in series through an ordinary node"""
    data = single_link(demand, horizon=horizon)
    data["name"] = "series"
    data["links"] = [
        {"id": "l1", "from_node": "o", "to_node": "m", "length": 1.0, "fd_class": "road"},
        {"id": "l2", "from_node": "m", "to_node": "d", "length": 1.0, "fd_class": "road"},
    ]
    data["nodes"].append({"id": "m"})
    data["routes"] = [{"id": "r1", "od": "od1", "links": ["l1", "l2"]}]
    data["sensors"] = [{"id": "s_out", "link": "l2", "end": "downstream"}]
    data.update(extra)
    return data


@pytest.fixture
def build():
    """Validate a scenario document built in a test"""
    return lambda data: parse_scenario(data, data.get("name", "test"))
