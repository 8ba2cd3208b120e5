"""Information packages: moving markers that carry state changes along a link.

Three kinds exist. Flow shockwaves separate two flow regimes, route fronts
carry new route proportions at vehicle speed, and moving bottlenecks carry a
capacity-limited disturbance that may split the stream around it. Packages are
immutable; every interaction produces new values.
"""

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

from infoprop.exceptions import DomainError, InvariantViolation
from infoprop.models.fundamental_diagram import (
    DENSITY_TOLERANCE,
    FLOW_TOLERANCE,
    FlowRegime,
    FundamentalDiagram,
)

logger = logging.getLogger(__name__)

SPEED_TOLERANCE = 1e-9
PROPORTION_TOLERANCE = 1e-9

# Remaining link path of a route, starting with the link that carries it
RouteKey = tuple[str, ...]


class PackageKind(str, Enum):
    SHOCKWAVE = "shockwave"
    ROUTE_FRONT = "route_front"
    BOTTLENECK = "bottleneck"


KIND_RANK = {PackageKind.SHOCKWAVE: 0, PackageKind.ROUTE_FRONT: 1, PackageKind.BOTTLENECK: 2}


@dataclass(frozen=True, slots=True)
class ShockwavePayload:
    upstream_regime: FlowRegime
    downstream_regime: FlowRegime

    def __post_init__(self):
        if self.upstream_regime.same_as(self.downstream_regime):
            raise DomainError("A shockwave needs two distinct flow regimes")


@dataclass(frozen=True, slots=True)
class RoutePayload:
    """Route proportions carried by a route front, keyed by remaining path"""

    route_proportions: tuple[tuple[RouteKey, float], ...]

    def __post_init__(self):
        total = 0.0
        for route, share in self.route_proportions:
            if share < -PROPORTION_TOLERANCE or share > 1 + PROPORTION_TOLERANCE:
                raise DomainError(f"Route share {share} for {route} outside [0, 1]")
            total += share
        if self.route_proportions and abs(total - 1.0) > PROPORTION_TOLERANCE:
            raise DomainError(f"Route shares sum to {total}, expected 1")

    @classmethod
    def from_mapping(cls, shares: Mapping[RouteKey, float]) -> "RoutePayload":
        return cls(tuple(sorted((tuple(k), float(v)) for k, v in shares.items())))

    @classmethod
    def equal_split(cls, routes: Sequence[RouteKey]) -> "RoutePayload":
        unique = sorted(set(routes))
        if not unique:
            return cls(())
        return cls(tuple((r, 1.0 / len(unique)) for r in unique))

    def as_dict(self) -> dict[RouteKey, float]:
        return dict(self.route_proportions)

    def differs_from(self, other: "RoutePayload", tol: float = PROPORTION_TOLERANCE) -> bool:
        mine, theirs = self.as_dict(), other.as_dict()
        return any(
            abs(mine.get(r, 0.0) - theirs.get(r, 0.0)) > tol for r in mine.keys() | theirs.keys()
        )


@dataclass(frozen=True, slots=True)
class BottleneckPayload:
    bottleneck_id: str
    free_speed: float
    capacity: float
    route: tuple[str, ...]
    active: bool = False
    upstream_regime: FlowRegime | None = None
    downstream_regime: FlowRegime | None = None

    def __post_init__(self):
        if self.free_speed < 0:
            raise DomainError(f"Bottleneck {self.bottleneck_id} free speed must be >= 0")
        if self.capacity < 0:
            raise DomainError(f"Bottleneck {self.bottleneck_id} capacity must be >= 0")

    def deactivated(self) -> "BottleneckPayload":
        return replace(self, active=False, upstream_regime=None, downstream_regime=None)


Payload = Union[ShockwavePayload, RoutePayload, BottleneckPayload]


@dataclass(frozen=True, slots=True)
class InformationPackage:
    """A package anchored at (created_at, position) moving at constant speed"""

    id: str
    kind: PackageKind
    link: str
    position: float
    created_at: float
    speed: float
    payload: Payload

    def position_at(self, t: float) -> float:
        return self.position + self.speed * (t - self.created_at)

    @property
    def is_separator(self) -> bool:
        if self.kind == PackageKind.SHOCKWAVE:
            return True
        return self.kind == PackageKind.BOTTLENECK and self.payload.active

    def describe(self) -> str:
        if self.kind == PackageKind.SHOCKWAVE or (
            self.kind == PackageKind.BOTTLENECK and self.payload.active
        ):
            up, down = _payload_regimes(self.payload)
            return (
                f"{self.kind.value}:{self.id}:v={self.speed:.9f}:"
                f"up=({up.density:.9f},{up.flow:.9f}):down=({down.density:.9f},{down.flow:.9f})"
            )
        return f"{self.kind.value}:{self.id}:v={self.speed:.9f}"


def package_id(link: str, time: float, position: float, n: int) -> str:
    """Id of the n-th package spawned on link at (time, position)"""
    return f"{link}@{float(time):.9f}@{float(position):.9f}#{n}"


def _payload_regimes(payload: Payload) -> tuple[FlowRegime, FlowRegime]:
    return payload.upstream_regime, payload.downstream_regime


def shockwave_speed(a: FlowRegime, b: FlowRegime) -> float:
    """Rankine-Hugoniot speed of the wave with a spatially upstream of b"""
    if a.same_as(b):
        raise DomainError(f"Degenerate wave between densities {a.density} and {b.density}")
    return (b.flow - a.flow) / (b.density - a.density)


def routing_ip_speed(regime: FlowRegime, fd: FundamentalDiagram) -> float:
    return fd.speed_at(regime.density)


@dataclass(frozen=True, slots=True)
class BottleneckClassification:
    active: bool
    upstream_state: FlowRegime
    downstream_state: FlowRegime
    speed: float


def classify_bottleneck(
    payload: BottleneckPayload, ambient: FlowRegime, fd: FundamentalDiagram
) -> BottleneckClassification:
    """Decide whether the bottleneck interrupts the ambient stream.

    The line q = capacity + u*k with u = min(free_speed, ambient speed) cuts the
    FD at A (downstream, free side) and B (upstream, congested side). The
    bottleneck is active when the ambient state lies strictly above that line.
    """
    speed = min(payload.free_speed, fd.speed_at(ambient.density))
    inactive = BottleneckClassification(False, ambient, ambient, speed)
    excess = ambient.flow - payload.capacity - speed * ambient.density
    if excess <= FLOW_TOLERANCE:
        return inactive
    roots = fd.line_roots(payload.capacity, speed)
    below = [r for r in roots if r < ambient.density - DENSITY_TOLERANCE]
    above = [r for r in roots if r > ambient.density + DENSITY_TOLERANCE]
    if not below or not above:
        return inactive
    a, b = max(below), min(above)
    return BottleneckClassification(
        True,
        FlowRegime(b, fd.flow_at(b), constrained=True),
        FlowRegime(a, fd.flow_at(a), constrained=True),
        speed,
    )


def wave_speeds(states: Sequence[FlowRegime]) -> list[float]:
    return [shockwave_speed(a, b) for a, b in zip(states, states[1:], strict=False)]


def fan_wedge(
    states: Sequence[FlowRegime], speeds: Sequence[float], speed_of: Callable[[FlowRegime], float]
) -> int:
    """First wedge whose marker speed does not outrun the next wave"""
    for k, state in enumerate(states[:-1]):
        if speed_of(state) <= speeds[k] + SPEED_TOLERANCE:
            return k
    return len(states) - 1


@dataclass
class ColocatedResolution:
    packages: list[InformationPackage]
    regions: list[FlowRegime]
    terminated: list[InformationPackage] = field(default_factory=list)
    created: list[InformationPackage] = field(default_factory=list)
    exited: list[InformationPackage] = field(default_factory=list)


def resolve_colocated(
    fd: FundamentalDiagram,
    link: str,
    upstream: FlowRegime,
    downstream: FlowRegime,
    members: Sequence[InformationPackage],
    time: float,
    position: float,
    make_id: Callable[[int], str],
    *,
    at_upstream_end: bool = False,
    at_downstream_end: bool = False,
) -> ColocatedResolution:
    """Resolve every package meeting at one point.

    Shocks in the block terminate and the outermost regimes are joined by the
    exact wave fan. An active bottleneck splits that fan around its capacity
    line; route fronts and inactive bottlenecks are re-placed in the wedge
    whose vehicle speed keeps them between the neighbouring waves. At a link
    end, waves leaving the link are dropped and fronts or bottlenecks moving
    out through it are reported as exited.
    """
    shocks_in = [m for m in members if m.kind == PackageKind.SHOCKWAVE]
    fronts = [m for m in members if m.kind == PackageKind.ROUTE_FRONT]
    bottlenecks = sorted(
        (m for m in members if m.kind == PackageKind.BOTTLENECK),
        key=lambda ip: ip.payload.bottleneck_id,
    )
    separators_in = [m for m in members if m.is_separator]

    if len(fronts) > 1:
        if not at_upstream_end:
            raise InvariantViolation(
                f"Route fronts {[f.id for f in fronts]} met on link {link} at t={time}"
            )
        # the most recent front at the entrance supersedes older ones
        newest = max(enumerate(fronts), key=lambda p: (p[1].created_at, p[0]))[1]
        fronts = [newest]

    states = fd.riemann_fan(upstream, downstream)
    speeds = wave_speeds(states)
    kinds: list[PackageKind] = [PackageKind.SHOCKWAVE] * len(speeds)

    primary = bottlenecks[0] if bottlenecks else None
    passive_bottlenecks = list(bottlenecks[1:])
    if passive_bottlenecks:
        logger.warning(
            f"Bottlenecks {[b.payload.bottleneck_id for b in bottlenecks]} co-located on "
            f"{link} at t={time}; only {primary.payload.bottleneck_id} may constrain flow"
        )

    primary_payload = None
    if primary is not None:
        bp = primary.payload
        wedge = fan_wedge(states, speeds, lambda s: min(bp.free_speed, fd.speed_at(s.density)))
        split = classify_bottleneck(bp, states[wedge], fd)
        activated = False
        if split.active:
            behind = fd.riemann_fan(upstream, split.upstream_state)
            ahead = fd.riemann_fan(split.downstream_state, downstream)
            behind_speeds, ahead_speeds = wave_speeds(behind), wave_speeds(ahead)
            if all(s <= split.speed + SPEED_TOLERANCE for s in behind_speeds) and all(
                s >= split.speed - SPEED_TOLERANCE for s in ahead_speeds
            ):
                states = behind + ahead
                speeds = behind_speeds + [split.speed] + ahead_speeds
                kinds = (
                    [PackageKind.SHOCKWAVE] * len(behind_speeds)
                    + [PackageKind.BOTTLENECK]
                    + [PackageKind.SHOCKWAVE] * len(ahead_speeds)
                )
                primary_payload = replace(
                    bp,
                    active=True,
                    upstream_regime=split.upstream_state,
                    downstream_regime=split.downstream_state,
                )
                activated = True
        if not activated:
            passive_bottlenecks.insert(0, primary)

    resolution = ColocatedResolution(packages=[], regions=[])

    if at_upstream_end:
        while kinds and kinds[0] == PackageKind.SHOCKWAVE and speeds[0] <= SPEED_TOLERANCE:
            states, speeds, kinds = states[1:], speeds[1:], kinds[1:]
    if at_downstream_end:
        while kinds and (
            (kinds[-1] == PackageKind.SHOCKWAVE and speeds[-1] >= -SPEED_TOLERANCE)
            or (kinds[-1] == PackageKind.BOTTLENECK and speeds[-1] > SPEED_TOLERANCE)
        ):
            if kinds[-1] == PackageKind.BOTTLENECK:
                resolution.exited.append(
                    replace(
                        primary,
                        position=position,
                        created_at=time,
                        speed=speeds[-1],
                        payload=primary_payload.deactivated(),
                    )
                )
            states, speeds, kinds = states[:-1], speeds[:-1], kinds[:-1]

    # Separators in their final order
    reuse = (
        len(separators_in) == 1
        and not bottlenecks
        and kinds == [PackageKind.SHOCKWAVE]
        and separators_in[0].payload.upstream_regime.same_as(states[0])
        and separators_in[0].payload.downstream_regime.same_as(states[1])
    )
    separators_out: list[InformationPackage] = []
    ordinal = 0
    for i, kind in enumerate(kinds):
        if kind == PackageKind.BOTTLENECK:
            separators_out.append(
                replace(
                    primary,
                    position=position,
                    created_at=time,
                    speed=speeds[i],
                    payload=primary_payload,
                )
            )
        elif reuse:
            separators_out.append(separators_in[0])
        else:
            separators_out.append(
                InformationPackage(
                    id=make_id(ordinal),
                    kind=PackageKind.SHOCKWAVE,
                    link=link,
                    position=position,
                    created_at=time,
                    speed=speeds[i],
                    payload=ShockwavePayload(states[i], states[i + 1]),
                )
            )
            ordinal += 1

    # Markers that ride with the stream
    wedges: list[list[InformationPackage]] = [[] for _ in states]
    for marker in fronts + passive_bottlenecks:
        if marker.kind == PackageKind.ROUTE_FRONT:
            speed_of = lambda s: fd.speed_at(s.density)  # noqa: E731
            payload = marker.payload
        else:
            vb = marker.payload.free_speed
            speed_of = lambda s, vb=vb: min(vb, fd.speed_at(s.density))  # noqa: E731
            payload = marker.payload.deactivated()
        k = fan_wedge(states, speeds, speed_of)
        moved = replace(
            marker, position=position, created_at=time, speed=speed_of(states[k]), payload=payload
        )
        if at_downstream_end and k == len(states) - 1 and moved.speed > SPEED_TOLERANCE:
            resolution.exited.append(moved)
        else:
            wedges[k].append(moved)

    for k, riders in enumerate(wedges):
        riders.sort(key=lambda ip: (ip.speed, KIND_RANK[ip.kind], ip.id))
        resolution.packages.extend(riders)
        if k < len(separators_out):
            resolution.packages.append(separators_out[k])
    resolution.regions = list(states)

    kept = {id(ip) for ip in separators_out}
    resolution.terminated = [ip for ip in separators_in if id(ip) not in kept]
    previous = {id(ip) for ip in separators_in}
    resolution.created = [ip for ip in separators_out if id(ip) not in previous]
    return resolution


def interact(
    ip1: InformationPackage,
    ip2: InformationPackage,
    fd: FundamentalDiagram,
    make_id: Callable[[int], str] | None = None,
) -> list[InformationPackage]:
    """Pairwise interaction of two packages meeting on the same link.

    ip1 must be the spatially upstream package. Returns the packages that exist
    after the meeting point, upstream first.
    """
    if ip1.kind == PackageKind.ROUTE_FRONT and ip2.kind == PackageKind.ROUTE_FRONT:
        raise InvariantViolation(f"Route fronts {ip1.id} and {ip2.id} cannot intersect")
    separators = [ip for ip in (ip1, ip2) if ip.is_separator]
    if not separators:
        return [ip1, ip2]

    if abs(ip1.speed - ip2.speed) <= SPEED_TOLERANCE:
        time = max(ip1.created_at, ip2.created_at)
    else:
        time = (
            ip2.position - ip1.position + ip1.created_at * ip1.speed - ip2.created_at * ip2.speed
        ) / (ip1.speed - ip2.speed)
    position = ip1.position_at(time)
    if make_id is None:
        make_id = lambda n: package_id(ip1.link, time, position, n)  # noqa: E731

    upstream = separators[0].payload.upstream_regime
    downstream = separators[-1].payload.downstream_regime
    result = resolve_colocated(
        fd, ip1.link, upstream, downstream, [ip1, ip2], time, position, make_id
    )
    return result.packages
