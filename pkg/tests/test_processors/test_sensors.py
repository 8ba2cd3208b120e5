import pytest

from infoprop.engine.curves import CumulativeCurve
from infoprop.processors.sensors import record_sensor, rounded

EDGES = [i / 12 for i in range(7)]


def test_constant_flow_fills_every_bin():
    curve = CumulativeCurve.start(0.0, 1800.0)

    assert record_sensor(curve, EDGES) == pytest.approx([150.0] * 6)


def test_zero_flow():
    curve = CumulativeCurve.start(0.0)

    assert record_sensor(curve, EDGES) == pytest.approx([0.0] * 6)


def test_step_at_bin_midpoint_counts_half_a_bin():
    curve = CumulativeCurve.start(0.0)
    curve.set_slope(1 / 24, 1800.0)
    curve.close(0.5)

    counts = record_sensor(curve, EDGES)
    assert counts[0] == pytest.approx(75.0)
    assert counts[1:] == pytest.approx([150.0] * 5)


def test_export_rounding():
    assert rounded([1.23456, 2.0]) == [1.235, 2.0]
