"""Writers for simulation outputs: the full JSON document plus plotting tables."""

import json
import logging
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from infoprop.exceptions import ScenarioError
from infoprop.models.output import SimulationOutput
from infoprop.processors.sensors import EXPORT_DECIMALS

logger = logging.getLogger(__name__)

OUTPUT_FILE = "output.json"


class OutputWriter:
    """Writes every artefact of a run into one directory"""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    def write(self, output: SimulationOutput) -> dict[str, Path]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        written = {
            "output": self._write_text(OUTPUT_FILE, output.model_dump_json(indent=2)),
            "events": self._write_text(
                "events.log", "".join(f"{line}\n" for line in output.events)
            ),
            "sensors": self._write_table("sensors.csv", self.sensor_table(output)),
            "travel_times": self._write_table("travel_times.csv", self.travel_time_table(output)),
            "summary": self._write_text(
                "summary.json", json.dumps(output.summary.model_dump(), indent=2, sort_keys=True)
            ),
        }
        logger.info(f"Wrote {len(written)} files to {self.out_dir}")
        return written

    def _write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def _write_table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format=f"%.{EXPORT_DECIMALS}f")
        return path

    @staticmethod
    def sensor_table(output: SimulationOutput) -> pd.DataFrame:
        starts = output.bin_edges[:-1]
        frame = pd.DataFrame({"bin_start": starts, "bin_end": output.bin_edges[1:]})
        for sensor in sorted(output.sensor_counts):
            frame[sensor] = [round(c, EXPORT_DECIMALS) for c in output.sensor_counts[sensor]]
        return frame

    @staticmethod
    def travel_time_table(output: SimulationOutput) -> pd.DataFrame:
        starts = output.bin_edges[:-1]
        frame = pd.DataFrame({"bin_start": starts, "bin_end": output.bin_edges[1:]})
        for od in sorted(output.od_travel_times):
            frame[od] = pd.array(output.od_travel_times[od], dtype="Float64")
        return frame


def write_output(output: SimulationOutput, out_dir: str | Path) -> dict[str, Path]:
    return OutputWriter(out_dir).write(output)


def load_output(path: str | Path) -> SimulationOutput:
    """Read an output document, given either the file or the run directory"""
    path = Path(path)
    if path.is_dir():
        path = path / OUTPUT_FILE
    try:
        return SimulationOutput.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ScenarioError(f"{path}: cannot read output ({e.strerror})") from e
    except ValidationError as e:
        raise ScenarioError(f"{path}: not a simulation output: {e.errors()[0]['msg']}") from e
