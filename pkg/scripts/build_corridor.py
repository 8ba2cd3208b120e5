import logging
import sys
from pathlib import Path

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from infoprop.loaders.scenario_loader import parse_scenario, save_scenario

logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

FREEWAY = {"shape": "triangular", "max_flow": 2000.0, "critical_density": 25.0, "jam_density": 150.0}
RAMP = {"shape": "triangular", "max_flow": 1800.0, "critical_density": 30.0, "jam_density": 150.0}


def corridor(sections: int = 2, lanes: int = 5, horizon: float = 3.0, peak: float = 6000.0) -> dict:
    """Mainline with one on-ramp merge and one off-ramp diverge per section"""
    links, nodes, ods, routes, demands, sensors = [], [], [], [], [], []
    nodes.append({"id": "a", "centroid": True})
    mainline = []
    previous = "a"
    for s in range(1, sections + 1):
        merge, diverge = f"m_on{s}", f"d_off{s}"
        nodes += [{"id": merge}, {"id": diverge}, {"id": f"o{s}", "centroid": True},
                  {"id": f"x{s}", "centroid": True}]
        links += [
            {"id": f"up{s}", "from_node": previous, "to_node": merge, "length": 2.0,
             "lanes": lanes, "fd_class": "freeway"},
            {"id": f"weave{s}", "from_node": merge, "to_node": diverge, "length": 1.5,
             "lanes": lanes, "fd_class": "freeway"},
            {"id": f"on{s}", "from_node": f"o{s}", "to_node": merge, "length": 0.5,
             "lanes": 1, "fd_class": "ramp"},
            {"id": f"off{s}", "from_node": diverge, "to_node": f"x{s}", "length": 0.5,
             "lanes": 1, "fd_class": "ramp"},
        ]
        nodes[-4]["priorities"] = {f"up{s}": {f"weave{s}": 0.8}, f"on{s}": {f"weave{s}": 0.2}}
        mainline += [f"up{s}", f"weave{s}"]
        ods.append({"id": f"o{s}_x{s}", "origin": f"o{s}", "destination": f"x{s}"})
        routes.append({"id": f"o{s}_x{s}_main", "od": f"o{s}_x{s}",
                       "links": [f"on{s}", f"weave{s}", f"off{s}"]})
        demands.append({"od": f"o{s}_x{s}", "series": [[0.0, 500.0], [horizon / 6, 1200.0],
                                                       [horizon / 2, 700.0]]})
        sensors.append({"id": f"s_weave{s}", "link": f"weave{s}", "end": "downstream"})
        previous = diverge
    nodes.append({"id": "b", "centroid": True})
    links.append({"id": "tail", "from_node": previous, "to_node": "b", "length": 2.0,
                  "lanes": lanes, "fd_class": "freeway"})
    ods.append({"id": "a_b", "origin": "a", "destination": "b"})
    routes.append({"id": "a_b_main", "od": "a_b", "links": mainline + ["tail"]})
    demands.append({"od": "a_b", "series": [[0.0, 0.6 * peak], [horizon / 6, peak],
                                            [horizon / 2, 0.75 * peak]]})
    sensors.append({"id": "s_tail", "link": "tail", "end": "downstream"})
    return {
        "name": f"corridor-{sections}",
        "horizon": horizon,
        "link_classes": {"freeway": FREEWAY, "ramp": RAMP},
        "links": links,
        "nodes": nodes,
        "ods": ods,
        "routes": routes,
        "demands": demands,
        "sensors": sensors,
    }


def main(sections: str = "2", out: str = "scenarios/generated"):
    """Validate and save a synthetic corridor"""
    data = corridor(int(sections))
    scenario = parse_scenario(data, data["name"])
    path = save_scenario(scenario, Path(out) / f"{scenario.name}.json")
    logging.info(f"Wrote {path} ({len(scenario.links)} links)")


if __name__ == "__main__":
    main(*sys.argv[1:3])
