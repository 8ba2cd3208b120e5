import logging
import sys
from pathlib import Path

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from infoprop.engine.simulator import run
from infoprop.engine.zones import ExecutionMode, SimulationClock
from infoprop.loaders.output_writer import write_output
from infoprop.loaders.scenario_loader import load_scenario

logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"


def main(name: str = "corridor", mode: str = "sequential"):
    """Run a shipped scenario and write its outputs under runs/"""
    scenario = load_scenario(SCENARIO_DIR / f"{name}.json")
    clock = SimulationClock(scenario.t0, scenario.horizon, scenario.dt, ExecutionMode(mode))
    output = run(scenario, clock)
    write_output(output, Path("runs") / f"{name}-{mode}")
    logging.info(f"Conservation error: {output.summary.max_conservation_error:.3e} veh")


if __name__ == "__main__":
    main(*sys.argv[1:3])
