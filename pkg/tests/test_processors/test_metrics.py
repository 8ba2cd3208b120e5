import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoprop.exceptions import DomainError, UndefinedFitError
from infoprop.models.output import RunSummary, SimulationOutput
from infoprop.processors.metrics import (
    STATISTICS,
    PairedSeries,
    metrics_table,
    rmse,
    rmspe,
    statistics,
    theil,
)

REF = [10.0, 20.0, 30.0]
SIM = [12.0, 18.0, 33.0]


def make_output(counts: dict, times: dict) -> SimulationOutput:
    summary = RunSummary(
        mode="sequential",
        horizon=1.0,
        events=0,
        packages=0,
        node_updates=0,
        vehicles_entered=0.0,
        vehicles_exited=0.0,
        vehicles_on_network=0.0,
        max_conservation_error=0.0,
    )
    return SimulationOutput(
        scenario="t",
        bin_edges=[0.0, 0.5, 1.0],
        events=[],
        sensor_counts=counts,
        od_travel_times=times,
        boundary_history={},
        summary=summary,
    )


def test_worked_examples():
    s = PairedSeries.of(REF, SIM)

    assert rmse(s) == pytest.approx(math.sqrt(17 / 3))
    assert rmspe(s) == pytest.approx(math.sqrt(0.02))


def test_theil_extremes():
    assert theil(PairedSeries.of(REF, REF)).U == 0.0
    assert theil(PairedSeries.of(REF, REF)).U_M is None
    assert theil(PairedSeries.of([2.0, 0.0], [0.0, 0.0])).U == pytest.approx(1.0)
    with pytest.raises(UndefinedFitError):
        theil(PairedSeries.of([0.0, 0.0], [0.0, 0.0]))


def test_rmspe_rejects_zero_reference():
    with pytest.raises(DomainError):
        rmspe(PairedSeries.of([0.0, 1.0], [1.0, 1.0]))
    # the table reports it as missing instead
    assert statistics(PairedSeries.of([0.0, 1.0], [1.0, 1.0]))["RMSPE"] is None


def test_series_must_match():
    with pytest.raises(DomainError):
        PairedSeries.of([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        PairedSeries.of([], [])


def test_symmetry_and_scaling():
    s, flipped = PairedSeries.of(REF, SIM), PairedSeries.of(SIM, REF)
    scaled = PairedSeries.of(np.array(REF) * 3, np.array(SIM) * 3)

    assert rmse(s) == pytest.approx(rmse(flipped))
    assert theil(s).U == pytest.approx(theil(flipped).U)
    assert rmspe(s) != pytest.approx(rmspe(flipped))
    assert rmse(scaled) == pytest.approx(3 * rmse(s))
    assert theil(scaled).U == pytest.approx(theil(s).U)


series = st.lists(st.floats(min_value=0.1, max_value=1e4), min_size=2, max_size=40)


@settings(max_examples=200, deadline=None)
@given(series, st.data())
def test_theil_decomposition_sums_to_one(ref, data):
    values = st.floats(min_value=0.1, max_value=1e4)
    sim = data.draw(st.lists(values, min_size=len(ref), max_size=len(ref)))
    t = theil(PairedSeries.of(ref, sim))

    assert 0.0 <= t.U <= 1.0 + 1e-12
    if t.U_M is not None and t.U > 1e-2:
        assert t.U_M + t.U_S + t.U_C == pytest.approx(1.0, abs=1e-9)


def test_metrics_table_skips_undefined_times():
    reference = make_output({"s1": [100.0, 120.0]}, {"od": [0.1, None]})
    simulated = make_output({"s1": [110.0, 120.0]}, {"od": [0.12, 0.2]})

    table = metrics_table(reference, simulated)

    assert list(table.index) == STATISTICS
    assert table.at["RMSE", "counts"] == pytest.approx(math.sqrt(50.0))
    assert table.at["RMSE", "times"] == pytest.approx(0.02)
    assert list(metrics_table(reference, simulated, "counts").columns) == ["counts"]


def test_metrics_table_needs_matching_sensors():
    reference = make_output({"s1": [1.0, 1.0]}, {})
    simulated = make_output({"s2": [1.0, 1.0]}, {})

    with pytest.raises(DomainError):
        metrics_table(reference, simulated, "counts")
