import itertools
import logging

import numpy as np
import pytest

from infoprop.engine import node_engine
from infoprop.engine.node_engine import (
    SINK,
    SOURCE,
    NodeFlowSnapshot,
    aggregate_flows,
    allocate_flows,
    build_topology,
    downstream_route_state,
    route_image,
    turn_proportions,
    unconstrained_downstream_flows,
)
from infoprop.exceptions import ConfigurationError
from oracles import allocate_reference


def merge_topology(w_a: float = 0.5):
    return build_topology(
        "n",
        ["a", "b"],
        ["c"],
        [("a", "c"), ("b", "c")],
        priorities={"a": {"c": w_a}, "b": {"c": 1.0 - w_a}},
    )


def diverge_topology():
    return build_topology("n", ["a"], ["b", "c"], [("a", "b"), ("a", "c")])


def grid_topology(w_ac: float, w_ad: float):
    return build_topology(
        "n",
        ["a", "b"],
        ["c", "d"],
        [("a", "c"), ("a", "d"), ("b", "c"), ("b", "d")],
        priorities={"a": {"c": w_ac, "d": w_ad}, "b": {"c": 1.0 - w_ac, "d": 1.0 - w_ad}},
    )


def test_route_image_is_suffix_shift():
    assert route_image(("a", "b", "c")) == ("b", "c")
    assert route_image(("c",)) == (SINK,)


def test_topology_matrices_for_diverge():
    topo = diverge_topology()

    assert topo.upstream_routes == (("a", "b"), ("a", "c"))
    assert topo.downstream_routes == (("b",), ("c",))
    assert np.array_equal(topo.A_IR, [[1.0, 1.0]])
    assert np.array_equal(topo.T, np.eye(2))
    assert np.array_equal(topo.A_JS, np.eye(2))
    assert np.allclose(topo.W.sum(axis=0), 1.0)


def test_origin_and_destination_add_virtual_links():
    origin = build_topology("o", [], ["l1"], [("l1", "l2")], origin=True)
    destination = build_topology("d", ["l2"], [], [("l1", "l2")], destination=True)

    assert origin.upstream_links == (SOURCE,)
    assert origin.upstream_routes == ((SOURCE, "l1", "l2"),)
    assert origin.downstream_routes == (("l1", "l2"),)
    assert destination.downstream_links == (SINK,)
    assert destination.downstream_routes == ((SINK,),)


def test_default_priorities_follow_capacity_weights():
    topo = build_topology(
        "n", ["a", "b"], ["c"], [("a", "c"), ("b", "c")], capacity_weights={"a": 3.0, "b": 1.0}
    )

    assert topo.W[:, 0] == pytest.approx([0.75, 0.25])


def test_missing_priority_for_a_turn_is_rejected():
    with pytest.raises(ConfigurationError):
        build_topology(
            "n", ["a", "b"], ["c"], [("a", "c"), ("b", "c")], priorities={"a": {"c": 1.0}}
        )


def test_snapshot_dimensions_are_checked():
    topo = merge_topology()
    snap = NodeFlowSnapshot(np.array([1.0]), np.array([1.0, 1.0]), np.array([900.0]))

    with pytest.raises(ConfigurationError):
        snap.validate(topo)


def test_unconstrained_downstream_flows():
    """Test identity, diverge and zero-flow cases"""
    identity = build_topology("n", ["a"], ["b"], [("a", "b")])
    assert unconstrained_downstream_flows(identity, [1000.0], [1.0]) == pytest.approx([1000.0])

    topo = diverge_topology()
    flows = unconstrained_downstream_flows(topo, [1000.0], [0.3, 0.7])
    assert flows == pytest.approx([300.0, 700.0])
    assert unconstrained_downstream_flows(topo, [0.0], [0.3, 0.7]) == pytest.approx([0.0, 0.0])


def test_merge_redistributes_unused_capacity():
    topo = merge_topology()
    snap = NodeFlowSnapshot(np.array([300.0, 600.0]), np.array([1.0, 1.0]), np.array([900.0]))

    F = allocate_flows(topo, snap)

    assert F == pytest.approx(np.array([[300.0], [600.0]]))
    F_I, F_J = aggregate_flows(F)
    assert F_I == pytest.approx([300.0, 600.0])
    assert F_J == pytest.approx([900.0])


def test_merge_over_capacity_splits_by_priority():
    topo = merge_topology(0.25)
    snap = NodeFlowSnapshot(np.array([1000.0, 1000.0]), np.array([1.0, 1.0]), np.array([800.0]))

    F = allocate_flows(topo, snap)

    assert F[:, 0] == pytest.approx([200.0, 600.0])


def test_allocation_warns_when_passes_run_out(monkeypatch, caplog):
    """Capacity left over by a served feeder needs a second pass"""
    monkeypatch.setattr(node_engine, "MAX_ALLOCATION_PASSES", 1)
    topo = merge_topology()
    snap = NodeFlowSnapshot(np.array([300.0, 600.0]), np.array([1.0, 1.0]), np.array([900.0]))

    with caplog.at_level(logging.WARNING, logger="infoprop.engine.node_engine"):
        F = allocate_flows(topo, snap)

    assert F[:, 0] == pytest.approx([300.0, 450.0])
    assert "after 1 passes" in caplog.text


def test_blocked_turn_blocks_the_whole_feeder():
    topo = diverge_topology()
    snap = NodeFlowSnapshot(np.array([1000.0]), np.array([0.5, 0.5]), np.array([0.0, 5000.0]))

    assert np.all(allocate_flows(topo, snap) == 0.0)


def test_ample_capacity_serves_all_demand():
    topo = diverge_topology()
    snap = NodeFlowSnapshot(np.array([1000.0]), np.array([0.3, 0.7]), np.array([5000.0, 5000.0]))

    assert allocate_flows(topo, snap) == pytest.approx(np.array([[300.0, 700.0]]))


def test_downstream_route_state_merges_routes():
    topo = merge_topology()

    F_S, P_S = downstream_route_state(topo, np.array([300.0, 600.0]), np.array([1.0, 1.0]))

    assert F_S == pytest.approx([900.0])
    assert P_S == pytest.approx([1.0])


def test_downstream_route_state_on_diverge():
    topo = diverge_topology()

    F_S, P_S = downstream_route_state(topo, np.array([1000.0]), np.array([0.3, 0.7]))

    assert F_S == pytest.approx([300.0, 700.0])
    assert P_S == pytest.approx([1.0, 1.0])


def test_downstream_route_state_keeps_previous_without_flow():
    topo = build_topology("n", ["a", "b"], ["c"], [("a", "c", "x"), ("b", "c", "y")])
    previous = np.array([0.4, 0.6])

    _, P_S = downstream_route_state(topo, np.array([0.0, 0.0]), np.array([1.0, 1.0]), previous)

    assert P_S == pytest.approx(previous)


GRID = [0.0, 250.0, 500.0, 1000.0, 2000.0]
WEIGHTS = [0.1, 0.3, 0.5, 0.7, 0.9]


def test_allocation_matches_reference_on_grid():
    """Exhaustive two-by-two grid against the scalar reference"""
    P_R = np.array([0.4, 0.6, 0.7, 0.3])
    for w_ac, w_ad in itertools.product(WEIGHTS, WEIGHTS):
        topo = grid_topology(w_ac, w_ad)
        shares = turn_proportions(topo, P_R)
        for d_a, d_b, c_c, c_d in itertools.product(GRID, GRID, GRID, GRID):
            D = np.array([d_a, d_b])
            C = np.array([c_c, c_d])
            F = allocate_flows(topo, NodeFlowSnapshot(D, P_R, C))
            expected = allocate_reference(D.tolist(), shares.tolist(), C.tolist(), topo.W.tolist())
            assert np.allclose(F, expected, atol=1e-9)

            F_I, F_J = aggregate_flows(F)
            # capacities respected
            assert np.all(F_J <= C + 1e-9)
            # turn proportions kept
            for i in range(2):
                if F_I[i] > 1e-9:
                    assert np.allclose(F[i] / F_I[i], shares[i], atol=1e-9)
            # every feeder is served or stopped by a full downstream link
            residual_cap = C - F_J
            for i in range(2):
                if F_I[i] < D[i] - 1e-9:
                    used = shares[i] > 0
                    assert np.any(residual_cap[used] <= 1e-6)
