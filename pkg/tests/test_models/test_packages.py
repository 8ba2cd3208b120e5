import numpy as np
import pytest

from infoprop.exceptions import DomainError, InvariantViolation
from infoprop.models.fundamental_diagram import FlowRegime, FundamentalDiagram
from infoprop.models.packages import (
    BottleneckPayload,
    InformationPackage,
    PackageKind,
    RoutePayload,
    ShockwavePayload,
    classify_bottleneck,
    interact,
    package_id,
    resolve_colocated,
    routing_ip_speed,
    shockwave_speed,
)

FD = FundamentalDiagram.triangular(1800.0, 30.0, 120.0)


def shock(id_, up, down, position=0.0, t=0.0):
    up, down = FlowRegime(*up), FlowRegime(*down)
    return InformationPackage(
        id=id_,
        kind=PackageKind.SHOCKWAVE,
        link="l1",
        position=position,
        created_at=t,
        speed=shockwave_speed(up, down),
        payload=ShockwavePayload(up, down),
    )


def test_shockwave_speed():
    """Test Rankine-Hugoniot speeds of queue tail and discharge waves"""
    capacity, jam = FlowRegime(30.0, 1800.0), FlowRegime(120.0, 0.0)

    assert shockwave_speed(capacity, jam) == pytest.approx(-20.0)
    assert shockwave_speed(jam, capacity) == pytest.approx(-20.0)
    assert shockwave_speed(FlowRegime(10.0, 600.0), FlowRegime(90.0, 600.0)) == 0.0
    with pytest.raises(DomainError):
        shockwave_speed(capacity, capacity)


def test_routing_ip_speed():
    assert routing_ip_speed(FlowRegime(0.0, 0.0), FD) == pytest.approx(60.0)
    assert routing_ip_speed(FlowRegime(60.0, 1200.0), FD) == pytest.approx(20.0)
    assert routing_ip_speed(FlowRegime(120.0, 0.0), FD) == pytest.approx(0.0)


def test_route_payload_validation():
    assert RoutePayload.equal_split([("a",), ("b",), ("a",)]).as_dict() == {
        ("a",): 0.5,
        ("b",): 0.5,
    }
    with pytest.raises(DomainError):
        RoutePayload.from_mapping({("a",): 0.7, ("b",): 0.7})
    assert RoutePayload.from_mapping({("a",): 1.0}).differs_from(
        RoutePayload.from_mapping({("b",): 1.0})
    )


def test_classify_bottleneck_full_capacity_is_inactive():
    payload = BottleneckPayload("b1", free_speed=30.0, capacity=1800.0, route=("l1",))

    for k in (0.0, 15.0, 30.0, 90.0):
        assert not classify_bottleneck(payload, FD.regime(k), FD).active


def test_classify_bottleneck_total_blockage():
    """A stopped zero-capacity bottleneck splits traffic into jam and empty road"""
    payload = BottleneckPayload("b1", free_speed=0.0, capacity=0.0, route=("l1",))

    split = classify_bottleneck(payload, FD.regime(60.0), FD)

    assert split.active
    assert split.upstream_state.density == pytest.approx(120.0)
    assert split.downstream_state.density == pytest.approx(0.0)
    assert not classify_bottleneck(payload, FD.regime(0.0), FD).active


def test_classify_bottleneck_slow_vehicle():
    payload = BottleneckPayload("b1", free_speed=20.0, capacity=600.0, route=("l1",))

    split = classify_bottleneck(payload, FD.regime(20.0), FD)

    assert split.active
    assert split.speed == pytest.approx(20.0)
    assert split.upstream_state.density == pytest.approx(45.0)
    assert split.upstream_state.flow == pytest.approx(1500.0)
    assert split.downstream_state.density == pytest.approx(15.0)
    assert split.downstream_state.flow == pytest.approx(900.0)
    assert split.upstream_state.constrained


def test_interact_distinct_outer_regimes_creates_one_shock():
    """A fast contact wave overtaking a standing shock merges into one new shock"""
    ip1 = shock("a", (20.0, 1200.0), (10.0, 600.0))
    ip2 = shock("b", (10.0, 600.0), (90.0, 600.0), position=1.0)

    result = interact(ip1, ip2, FD)

    assert len(result) == 1
    new = result[0]
    assert new.kind == PackageKind.SHOCKWAVE
    assert new.speed == pytest.approx(-600.0 / 70.0)
    assert new.created_at == pytest.approx(1.0 / 60.0)
    assert new.position == pytest.approx(1.0)
    assert new.payload.upstream_regime.density == pytest.approx(20.0)
    assert new.payload.downstream_regime.density == pytest.approx(90.0)


def test_interact_route_front_takes_post_shock_speed():
    routes = RoutePayload.from_mapping({("l1", "l2"): 0.4, ("l1", "l3"): 0.6})
    front = InformationPackage(
        id="front",
        kind=PackageKind.ROUTE_FRONT,
        link="l1",
        position=0.0,
        created_at=0.0,
        speed=60.0,
        payload=routes,
    )
    standing = shock("s", (10.0, 600.0), (90.0, 600.0), position=1.0)

    result = interact(front, standing, FD)

    assert [ip.kind for ip in result] == [PackageKind.SHOCKWAVE, PackageKind.ROUTE_FRONT]
    assert result[0] is standing
    assert result[1].speed == pytest.approx(600.0 / 90.0)
    assert result[1].payload == routes


def test_route_fronts_never_meet_mid_link():
    a = InformationPackage("f1", PackageKind.ROUTE_FRONT, "l1", 0.0, 0.0, 60.0, RoutePayload(()))
    b = InformationPackage("f2", PackageKind.ROUTE_FRONT, "l1", 0.5, 0.0, 20.0, RoutePayload(()))

    with pytest.raises(InvariantViolation):
        interact(a, b, FD)


def test_resolve_colocated_identical_outer_regimes_terminates_all():
    """Three shocks meeting between equal outer states leave no wave behind"""
    a, b, c = (15.0, 900.0), (60.0, 1200.0), (90.0, 600.0)
    members = [shock("s1", a, b), shock("s2", b, c), shock("s3", c, a)]

    result = resolve_colocated(
        FD, "l1", FlowRegime(*a), FlowRegime(*a), members, 0.1, 0.5, lambda n: f"new#{n}"
    )

    assert result.packages == []
    assert result.created == []
    assert len(result.terminated) == 3
    assert [r.density for r in result.regions] == [15.0]


def test_resolve_colocated_queue_discharge_fan():
    """A jam meeting an empty road releases through the capacity state"""
    result = resolve_colocated(
        FD,
        "l1",
        FlowRegime(120.0, 0.0),
        FlowRegime(0.0, 0.0),
        [],
        0.0,
        0.5,
        lambda n: f"fan#{n}",
    )

    assert [ip.speed for ip in result.packages] == pytest.approx([-20.0, 60.0])
    assert [r.density for r in result.regions] == pytest.approx([120.0, 30.0, 0.0])
    assert [ip.id for ip in result.created] == ["fan#0", "fan#1"]


def test_package_ids_do_not_depend_on_the_float_type():
    assert package_id("l1", np.float64(0.225), np.float64(1.5), 0) == "l1@0.225000000@1.500000000#0"
    assert package_id("l1", 0.225, 1.5, 2) == "l1@0.225000000@1.500000000#2"
