import json

import pandas as pd
import pytest

from infoprop.engine.simulator import run
from infoprop.exceptions import ScenarioError
from infoprop.loaders.output_writer import OutputWriter, load_output, write_output


@pytest.fixture
def output(minimal):
    return run(minimal)


def test_writes_every_artefact(tmp_path, output):
    written = write_output(output, tmp_path / "run")

    assert set(written) == {"output", "events", "sensors", "travel_times", "summary"}
    assert all(path.exists() for path in written.values())
    assert written["events"].read_text().splitlines() == output.events
    assert json.loads(written["summary"].read_text())["mode"] == "sequential"


def test_tables(output):
    sensors = OutputWriter.sensor_table(output)
    times = OutputWriter.travel_time_table(output)

    assert list(sensors.columns) == ["bin_start", "bin_end", "s_in", "s_out"]
    assert len(sensors) == len(output.bin_edges) - 1
    assert list(times.columns) == ["bin_start", "bin_end", "od1"]


def test_reload_from_directory(tmp_path, output):
    write_output(output, tmp_path)

    assert load_output(tmp_path) == output
    assert pd.read_csv(tmp_path / "sensors.csv")["s_in"].iloc[0] == pytest.approx(
        round(output.sensor_counts["s_in"][0], 3)
    )


def test_reload_rejects_foreign_files(tmp_path):
    (tmp_path / "output.json").write_text(json.dumps({"hello": 1}))

    with pytest.raises(ScenarioError):
        load_output(tmp_path)
    with pytest.raises(ScenarioError):
        load_output(tmp_path / "missing")
