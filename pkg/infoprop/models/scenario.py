"""Scenario schema: network, routes, demands, incidents, scripted events and sensors.

Units throughout are km, h, veh/h and veh/km. Link classes describe a single
lane; a link's diagram is its class scaled by its lane count.
"""

import logging
import math
from bisect import bisect_right
from typing import Annotated, Literal, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from infoprop.config import settings
from infoprop.engine.events import LinkEnd
from infoprop.exceptions import ConfigurationError
from infoprop.models.fundamental_diagram import FDShape, FundamentalDiagram

logger = logging.getLogger(__name__)

SHARE_TOLERANCE = 1e-6
SOURCE_KEY = "@source"
SINK_KEY = "@sink"


class FDSpec(BaseModel):
    """Per-lane fundamental diagram of a link class"""

    shape: FDShape = FDShape.TRIANGULAR
    max_flow: float | None = Field(default=None, gt=0, description="veh/h/lane")
    critical_density: float | None = Field(default=None, gt=0, description="veh/km/lane")
    jam_density: float | None = Field(default=None, gt=0, description="veh/km/lane")
    breakpoints: list[tuple[float, float]] | None = None

    @model_validator(mode="after")
    def check_shape(self) -> "FDSpec":
        if self.shape == FDShape.TRIANGULAR:
            if None in (self.max_flow, self.critical_density, self.jam_density):
                raise ValueError("triangular FD needs max_flow, critical_density and jam_density")
        elif not self.breakpoints:
            raise ValueError("piecewise_linear FD needs breakpoints")
        try:
            self.build()
        except ConfigurationError as e:
            raise ValueError(str(e)) from e
        return self

    def build(self) -> FundamentalDiagram:
        if self.shape == FDShape.TRIANGULAR:
            return FundamentalDiagram.triangular(
                self.max_flow, self.critical_density, self.jam_density
            )
        return FundamentalDiagram.piecewise_linear([tuple(p) for p in self.breakpoints])


class LinkSpec(BaseModel):
    id: str
    from_node: str
    to_node: str
    length: float = Field(..., gt=0, description="km")
    lanes: int = Field(default=1, ge=1)
    fd_class: str
    exit_capacity: float | None = Field(default=None, ge=0, description="veh/h, whole link")
    initial_density: float = Field(default=0.0, ge=0, description="veh/km/lane")


class NodeSpec(BaseModel):
    id: str
    centroid: bool = False
    priorities: dict[str, dict[str, float]] | None = None

    @field_validator("priorities")
    @classmethod
    def positive_weights(cls, v):
        if v is None:
            return v
        for up, row in v.items():
            for down, w in row.items():
                if w <= 0:
                    raise ValueError(f"priority {up} -> {down} must be positive, got {w}")
        return v


class ODSpec(BaseModel):
    id: str
    origin: str
    destination: str


class RouteSpec(BaseModel):
    id: str
    od: str
    links: list[str] = Field(..., min_length=1)


def _check_times(times: list[float]) -> None:
    if any(b <= a for a, b in zip(times, times[1:], strict=False)):
        raise ValueError("series times must be strictly increasing")


class DemandSpec(BaseModel):
    """Piecewise-constant OD demand; each entry holds from its time until the next"""

    od: str
    series: list[tuple[float, float]] = Field(..., min_length=1)

    @field_validator("series")
    @classmethod
    def check_series(cls, v):
        _check_times([t for t, _ in v])
        for t, q in v:
            if q < 0:
                raise ValueError(f"negative demand {q} at t={t}")
        return v


class RouteProportionSpec(BaseModel):
    od: str
    series: list[tuple[float, dict[str, float]]] = Field(..., min_length=1)

    @field_validator("series")
    @classmethod
    def check_series(cls, v):
        _check_times([t for t, _ in v])
        for t, shares in v:
            if any(s < 0 for s in shares.values()):
                raise ValueError(f"negative route share at t={t}")
            if abs(sum(shares.values()) - 1.0) > SHARE_TOLERANCE:
                raise ValueError(f"route shares at t={t} sum to {sum(shares.values())}")
        return v


class IncidentSpec(BaseModel):
    link: str
    start: float
    duration: float = Field(..., gt=0)
    blocked_lanes: int = Field(..., ge=0)


class BottleneckSpec(BaseModel):
    """A moving bottleneck released onto the first link of a route"""

    id: str
    route: str
    release_time: float
    position: float = Field(default=0.0, ge=0, description="km from the start of the route")
    free_speed: float = Field(..., gt=0, description="km/h")
    capacity: float = Field(..., ge=0, description="veh/h passing the bottleneck")


class PriorityChangeEvent(BaseModel):
    kind: Literal["priority_change"] = "priority_change"
    time: float
    node: str
    priorities: dict[str, dict[str, float]]


class ExitCapacityChangeEvent(BaseModel):
    kind: Literal["exit_capacity_change"] = "exit_capacity_change"
    time: float
    link: str
    capacity: float | None = Field(default=None, ge=0)


class BottleneckChangeEvent(BaseModel):
    kind: Literal["bottleneck_change"] = "bottleneck_change"
    time: float
    bottleneck: str
    free_speed: float | None = Field(default=None, gt=0)
    capacity: float | None = Field(default=None, ge=0)


ScriptedEvent = Annotated[
    Union[PriorityChangeEvent, ExitCapacityChangeEvent, BottleneckChangeEvent],
    Field(discriminator="kind"),
]


class SensorSpec(BaseModel):
    id: str
    link: str
    end: LinkEnd = LinkEnd.DOWNSTREAM


def max_step(links: list[tuple[float, float]]) -> float:
    """Largest distributed step: min over links of length / (2 * free speed)"""
    return min((length / (2 * vf) for length, vf in links), default=math.inf)


class Scenario(BaseModel):
    """A complete, cross-referenced simulation scenario"""

    name: str = "scenario"
    t0: float = 0.0
    horizon: float = Field(..., description="h, end of the run")
    dt: float | None = Field(default=None, gt=0, description="h, distributed step")
    bin_minutes: float = Field(default_factory=lambda: settings.bin_minutes, gt=0)

    link_classes: dict[str, FDSpec]
    links: list[LinkSpec] = Field(..., min_length=1)
    nodes: list[NodeSpec] = Field(..., min_length=2)
    ods: list[ODSpec] = Field(default_factory=list)
    routes: list[RouteSpec] = Field(default_factory=list)
    demands: list[DemandSpec] = Field(default_factory=list)
    route_proportions: list[RouteProportionSpec] = Field(default_factory=list)
    incidents: list[IncidentSpec] = Field(default_factory=list)
    bottlenecks: list[BottleneckSpec] = Field(default_factory=list)
    events: list[ScriptedEvent] = Field(default_factory=list)
    sensors: list[SensorSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def cross_reference(self) -> "Scenario":
        if self.horizon <= self.t0:
            raise ValueError(f"horizon {self.horizon} must exceed t0 {self.t0}")
        for label, items in (
            ("link", self.links),
            ("node", self.nodes),
            ("od", self.ods),
            ("route", self.routes),
            ("bottleneck", self.bottlenecks),
            ("sensor", self.sensors),
        ):
            seen: set[str] = set()
            for item in items:
                if item.id in seen:
                    raise ValueError(f"duplicate {label} id {item.id!r}")
                seen.add(item.id)

        nodes = self.node_map()
        links = self.link_map()
        for link in self.links:
            for end in (link.from_node, link.to_node):
                if end not in nodes:
                    raise ValueError(f"link {link.id!r} references missing node {end!r}")
            if link.from_node == link.to_node:
                raise ValueError(f"link {link.id!r} starts and ends at node {link.from_node!r}")
            if link.fd_class not in self.link_classes:
                raise ValueError(f"link {link.id!r} references missing fd_class {link.fd_class!r}")
            fd = self.link_classes[link.fd_class].build()
            if link.initial_density > fd.jam_density:
                raise ValueError(f"link {link.id!r} initial_density above jam density")

        ods = self.od_map()
        for od in self.ods:
            for end in (od.origin, od.destination):
                if end not in nodes:
                    raise ValueError(f"od {od.id!r} references missing node {end!r}")
                if not nodes[end].centroid:
                    raise ValueError(f"od {od.id!r} endpoint {end!r} is not a centroid")
            if od.origin == od.destination:
                raise ValueError(f"od {od.id!r} has identical origin and destination")

        for route in self.routes:
            if route.od not in ods:
                raise ValueError(f"route {route.id!r} references missing od {route.od!r}")
            for link_id in route.links:
                if link_id not in links:
                    raise ValueError(f"route {route.id!r} references missing link {link_id!r}")
            if len(set(route.links)) != len(route.links):
                raise ValueError(f"route {route.id!r} visits a link twice")
            for a, b in zip(route.links, route.links[1:], strict=False):
                if links[a].to_node != links[b].from_node:
                    raise ValueError(f"route {route.id!r}: link {b!r} does not follow {a!r}")
            od = ods[route.od]
            if links[route.links[0]].from_node != od.origin:
                raise ValueError(f"route {route.id!r} does not start at origin {od.origin!r}")
            if links[route.links[-1]].to_node != od.destination:
                raise ValueError(
                    f"route {route.id!r} does not end at destination {od.destination!r}"
                )

        routes = self.route_map()
        for demand in self.demands:
            if demand.od not in ods:
                raise ValueError(f"demand references missing od {demand.od!r}")
            if not self.routes_of(demand.od) and any(q > 0 for _, q in demand.series):
                raise ValueError(f"demand for od {demand.od!r} has no route")
        for props in self.route_proportions:
            if props.od not in ods:
                raise ValueError(f"route_proportions reference missing od {props.od!r}")
            for t, shares in props.series:
                for route_id in shares:
                    if route_id not in routes or routes[route_id].od != props.od:
                        raise ValueError(
                            f"route_proportions for od {props.od!r} at t={t} "
                            f"reference foreign route {route_id!r}"
                        )

        for incident in self.incidents:
            if incident.link not in links:
                raise ValueError(f"incident references missing link {incident.link!r}")
            if incident.blocked_lanes > links[incident.link].lanes:
                raise ValueError(
                    f"incident on {incident.link!r} blocks {incident.blocked_lanes} lanes "
                    f"of {links[incident.link].lanes}"
                )

        for bn in self.bottlenecks:
            if bn.route not in routes:
                raise ValueError(f"bottleneck {bn.id!r} references missing route {bn.route!r}")
            first = links[routes[bn.route].links[0]]
            if bn.position > first.length:
                raise ValueError(f"bottleneck {bn.id!r} position beyond link {first.id!r}")
            slowest = min(self.link_fd(link_id).free_speed for link_id in routes[bn.route].links)
            if bn.free_speed > slowest:
                raise ValueError(
                    f"bottleneck {bn.id!r} free_speed {bn.free_speed} "
                    f"exceeds link free speed {slowest}"
                )

        bottleneck_ids = {bn.id for bn in self.bottlenecks}
        for event in self.events:
            if isinstance(event, PriorityChangeEvent) and event.node not in nodes:
                raise ValueError(f"priority_change references missing node {event.node!r}")
            if isinstance(event, ExitCapacityChangeEvent) and event.link not in links:
                raise ValueError(f"exit_capacity_change references missing link {event.link!r}")
            if isinstance(event, BottleneckChangeEvent) and event.bottleneck not in bottleneck_ids:
                raise ValueError(
                    f"bottleneck_change references missing bottleneck {event.bottleneck!r}"
                )

        for sensor in self.sensors:
            if sensor.link not in links:
                raise ValueError(f"sensor {sensor.id!r} references missing link {sensor.link!r}")

        for node in self.nodes:
            if node.priorities:
                self._check_priorities(node.id, node.priorities)
        for event in self.events:
            if isinstance(event, PriorityChangeEvent):
                self._check_priorities(event.node, event.priorities)

        if self.dt is not None and self.dt > self.max_step() + 1e-12:
            raise ValueError(
                f"dt={self.dt} h exceeds the largest admissible step {self.max_step()} h"
            )
        return self

    def _check_priorities(self, node_id: str, priorities: dict[str, dict[str, float]]) -> None:
        ups = {link.id for link in self.links if link.to_node == node_id} | {SOURCE_KEY}
        downs = {link.id for link in self.links if link.from_node == node_id} | {SINK_KEY}
        for up, row in priorities.items():
            if up not in ups:
                raise ValueError(f"node {node_id!r} priorities name {up!r}, not an upstream link")
            for down in row:
                if down not in downs:
                    raise ValueError(
                        f"node {node_id!r} priorities name {down!r}, not a downstream link"
                    )

    # ------------------------------------------------------------- lookups

    def link_map(self) -> dict[str, LinkSpec]:
        return {link.id: link for link in self.links}

    def node_map(self) -> dict[str, NodeSpec]:
        return {node.id: node for node in self.nodes}

    def od_map(self) -> dict[str, ODSpec]:
        return {od.id: od for od in self.ods}

    def route_map(self) -> dict[str, RouteSpec]:
        return {route.id: route for route in self.routes}

    def routes_of(self, od_id: str) -> list[RouteSpec]:
        return [route for route in self.routes if route.od == od_id]

    def link_fd(self, link_id: str) -> FundamentalDiagram:
        link = self.link_map()[link_id]
        return self.link_classes[link.fd_class].build().scaled(link.lanes)

    def route_paths(self) -> list[tuple[str, ...]]:
        return sorted({tuple(route.links) for route in self.routes})

    def max_step(self) -> float:
        return max_step(
            [(link.length, self.link_fd(link.id).max_wave_speed) for link in self.links]
        )

    def bin_width(self) -> float:
        return self.bin_minutes / 60.0

    def bin_edges(self) -> list[float]:
        """Reporting bins tiling [t0, horizon]; the last bin may be shorter"""
        width = self.bin_width()
        n = math.ceil((self.horizon - self.t0) / width - 1e-9)
        edges = [self.t0 + i * width for i in range(n)]
        edges.append(self.horizon)
        return edges

    def demand_at(self, od_id: str, t: float) -> float:
        for demand in self.demands:
            if demand.od == od_id:
                times = [s[0] for s in demand.series]
                i = bisect_right(times, t)
                return demand.series[i - 1][1] if i else 0.0
        return 0.0

    def route_shares_at(self, od_id: str, t: float) -> dict[str, float]:
        """Route shares for an OD at t; an equal split when none are given yet"""
        for props in self.route_proportions:
            if props.od == od_id:
                times = [s[0] for s in props.series]
                i = bisect_right(times, t)
                if i:
                    shares = props.series[i - 1][1]
                    return {r.id: shares.get(r.id, 0.0) for r in self.routes_of(od_id)}
        routes = self.routes_of(od_id)
        return {r.id: 1.0 / len(routes) for r in routes}

    def demand_breakpoints(self, od_id: str) -> list[float]:
        times = {t for d in self.demands if d.od == od_id for t, _ in d.series}
        times |= {t for p in self.route_proportions if p.od == od_id for t, _ in p.series}
        return sorted(times)
