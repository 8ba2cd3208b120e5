"""Per-link state: packages, flow regions, cumulative curves and event scheduling."""

import logging
from collections.abc import Iterable
from dataclasses import replace

from infoprop.engine.curves import CumulativeCurve
from infoprop.engine.events import EventKind, EventLog, EventQueue, LinkEnd, ScheduledEvent
from infoprop.engine.history import WaveHistory
from infoprop.exceptions import InvariantViolation
from infoprop.models.fundamental_diagram import (
    DENSITY_TOLERANCE,
    FLOW_TOLERANCE,
    FlowRegime,
    FundamentalDiagram,
)
from infoprop.models.packages import (
    SPEED_TOLERANCE,
    BottleneckPayload,
    ColocatedResolution,
    InformationPackage,
    PackageKind,
    RoutePayload,
    package_id,
    resolve_colocated,
)
from infoprop.utils.monitoring import packages_created

logger = logging.getLogger(__name__)

POSITION_TOLERANCE = 1e-9
TIME_TOLERANCE = 1e-12


def regimes_differ(a: FlowRegime, b: FlowRegime) -> bool:
    return not a.same_as(b) or abs(a.flow - b.flow) > FLOW_TOLERANCE


def intersection_event(
    ip1: InformationPackage, ip2: InformationPackage, length: float
) -> tuple[float, float] | None:
    """Meeting time and place of two packages on a link, if they meet on it"""
    s1, s2 = ip1.speed, ip2.speed
    if abs(s1 - s2) <= TIME_TOLERANCE:
        return None
    t1, t2 = ip1.created_at, ip2.created_at
    tau = (ip2.position - ip1.position + t1 * s1 - t2 * s2) / (s1 - s2)
    if tau < max(t1, t2) - TIME_TOLERANCE:
        return None
    x = ip1.position + (tau - t1) * s1
    if x < -POSITION_TOLERANCE or x > length + POSITION_TOLERANCE:
        return None
    return max(tau, max(t1, t2)), min(max(x, 0.0), length)


def inflow_regime(fd: FundamentalDiagram, current: FlowRegime, q: float) -> FlowRegime:
    """Upstream-end state of a link receiving q"""
    if fd.is_congested(current.density) and q >= current.flow - FLOW_TOLERANCE:
        return current
    k = fd.free_density(min(q, fd.max_flow))
    if abs(k - current.density) <= DENSITY_TOLERANCE:
        return current
    return FlowRegime(k, fd.flow_at(k))


def outflow_regime(fd: FundamentalDiagram, current: FlowRegime, q: float) -> FlowRegime:
    """Downstream-end state of a link discharging q"""
    if not fd.is_congested(current.density) and q >= current.flow - FLOW_TOLERANCE:
        return current
    if q >= fd.max_flow - FLOW_TOLERANCE:
        target = fd.capacity_regime()
    else:
        k = fd.congested_density(max(q, 0.0))
        target = FlowRegime(k, fd.flow_at(k))
    if abs(target.density - current.density) <= DENSITY_TOLERANCE:
        return current
    return target


class LinkState:
    """Packages and piecewise-constant regions on one link, or on one zone of it.

    A whole link owns both ends. During a distributed step the link is cut
    into zone segments; each segment keeps the link's coordinates and owns
    only the ends that lie inside it.
    """

    def __init__(
        self,
        link_id: str,
        length: float,
        fd: FundamentalDiagram,
        *,
        regions: list[FlowRegime],
        entry_routes: RoutePayload,
        exit_routes: RoutePayload,
        history: WaveHistory,
        cum_in: CumulativeCurve | None,
        cum_out: CumulativeCurve | None,
        ips: Iterable[InformationPackage] = (),
        has_upstream_end: bool = True,
        has_downstream_end: bool = True,
    ):
        self.link_id = link_id
        self.length = length
        self.fd = fd
        self.ips: list[InformationPackage] = list(ips)
        self.regions = list(regions)
        self.entry_routes = entry_routes
        self.exit_routes = exit_routes
        self.history = history
        self.cum_in = cum_in
        self.cum_out = cum_out
        self.has_upstream_end = has_upstream_end
        self.has_downstream_end = has_downstream_end

        self.queue: EventQueue | None = None
        self.log: EventLog | None = None
        self.notices: set[LinkEnd] = set()
        self.handoffs: list[InformationPackage] = []
        self._spawn_time: float | None = None
        self._spawn_counts: dict[str, int] = {}

    @classmethod
    def empty(
        cls,
        link_id: str,
        length: float,
        fd: FundamentalDiagram,
        t0: float,
        initial: FlowRegime | None = None,
        routes: RoutePayload | None = None,
    ) -> "LinkState":
        initial = initial or FlowRegime(0.0, 0.0)
        routes = routes or RoutePayload(())
        history = WaveHistory(link_id, length, fd)
        history.record_boundary(LinkEnd.UPSTREAM.value, t0, initial)
        history.record_boundary(LinkEnd.DOWNSTREAM.value, t0, initial)
        return cls(
            link_id,
            length,
            fd,
            regions=[initial],
            entry_routes=routes,
            exit_routes=routes,
            history=history,
            cum_in=CumulativeCurve.start(t0, initial.flow),
            cum_out=CumulativeCurve.start(t0, initial.flow),
        )

    # ------------------------------------------------------------ inspection

    @property
    def upstream_regime(self) -> FlowRegime:
        return self.regions[0]

    @property
    def downstream_regime(self) -> FlowRegime:
        return self.regions[-1]

    def separators(self) -> list[InformationPackage]:
        return [ip for ip in self.ips if ip.is_separator]

    def cumulative_curves(self) -> tuple[CumulativeCurve, CumulativeCurve]:
        """Boundary curves of a whole link; zone pieces carry only the end they own"""
        if self.cum_in is None or self.cum_out is None:
            raise InvariantViolation(f"{self.link_id}: partial link has no complete curve pair")
        return self.cum_in, self.cum_out

    def vehicles(self, t: float) -> float:
        """Vehicles on the link at t, integrated over the regions"""
        edges = [0.0]
        edges += [min(max(ip.position_at(t), 0.0), self.length) for ip in self.separators()]
        edges.append(self.length)
        return sum(
            r.density * (b - a)
            for r, a, b in zip(self.regions, edges[:-1], edges[1:], strict=True)
        )

    def check_invariants(self, t: float) -> None:
        if len(self.regions) != len(self.separators()) + 1:
            raise InvariantViolation(
                f"{self.link_id}: {len(self.regions)} regions "
                f"for {len(self.separators())} separators"
            )
        positions = [ip.position_at(t) for ip in self.ips]
        for a, b in zip(positions, positions[1:], strict=False):
            if b < a - POSITION_TOLERANCE:
                raise InvariantViolation(f"{self.link_id}: packages out of order at t={t}")
        if positions and (
            positions[0] < -POSITION_TOLERANCE or positions[-1] > self.length + POSITION_TOLERANCE
        ):
            raise InvariantViolation(f"{self.link_id}: package outside the link at t={t}")

    def _index_of(self, ip: InformationPackage) -> int | None:
        for i, resident in enumerate(self.ips):
            if resident is ip:
                return i
        return None

    def _colocated_span(self, t: float, lo: int, hi: int, x: float) -> tuple[int, int]:
        while lo > 0 and abs(self.ips[lo - 1].position_at(t) - x) <= POSITION_TOLERANCE:
            lo -= 1
        while hi < len(self.ips) and abs(self.ips[hi].position_at(t) - x) <= POSITION_TOLERANCE:
            hi += 1
        return lo, hi

    def _span_at(self, t: float, x: float) -> tuple[int, int]:
        lo = 0
        while lo < len(self.ips) and self.ips[lo].position_at(t) < x - POSITION_TOLERANCE:
            lo += 1
        return self._colocated_span(t, lo, lo, x)

    def _id_maker(self, t: float, x: float):
        if self._spawn_time != t:
            self._spawn_time = t
            self._spawn_counts = {}

        def make(_ordinal: int) -> str:
            spot = f"{float(x):.9f}"
            n = self._spawn_counts.get(spot, 0)
            self._spawn_counts[spot] = n + 1
            return package_id(self.link_id, t, x, n)

        return make

    # ------------------------------------------------------------ scheduling

    def schedule_all(self) -> None:
        self._schedule_range(0, len(self.ips))

    def _schedule_range(self, lo: int, hi: int) -> None:
        if self.queue is None or not self.ips:
            return
        lo, hi = max(lo, 0), min(hi, len(self.ips))
        for i in range(lo, hi - 1):
            self._schedule_pair(i)
        first, last = self.ips[0], self.ips[-1]
        if lo == 0 and self.has_upstream_end and first.speed < -SPEED_TOLERANCE:
            tau = first.created_at - first.position / first.speed
            self.queue.push(
                ScheduledEvent(
                    tau, EventKind.BOUNDARY_ARRIVAL, self.link_id, 0.0, (first,), LinkEnd.UPSTREAM
                )
            )
        if hi == len(self.ips) and self.has_downstream_end and last.speed > SPEED_TOLERANCE:
            tau = last.created_at + (self.length - last.position) / last.speed
            self.queue.push(
                ScheduledEvent(
                    tau,
                    EventKind.BOUNDARY_ARRIVAL,
                    self.link_id,
                    self.length,
                    (last,),
                    LinkEnd.DOWNSTREAM,
                )
            )

    def _schedule_pair(self, i: int) -> None:
        a, b = self.ips[i], self.ips[i + 1]
        if a.speed - b.speed <= SPEED_TOLERANCE:
            return
        hit = intersection_event(a, b, self.length)
        if hit is not None:
            tau, x = hit
            self.queue.push(ScheduledEvent(tau, EventKind.INTERSECTION, self.link_id, x, (a, b)))

    # ------------------------------------------------------------ resolution

    def _resolve(
        self,
        t: float,
        x: float,
        lo: int,
        hi: int,
        key: tuple,
        *,
        extra: Iterable[InformationPackage] = (),
        upstream: FlowRegime | None = None,
        downstream: FlowRegime | None = None,
    ) -> ColocatedResolution:
        at_upstream = self.has_upstream_end and x <= POSITION_TOLERANCE
        at_downstream = self.has_downstream_end and x >= self.length - POSITION_TOLERANCE
        if at_upstream:
            x = 0.0
        elif at_downstream:
            x = self.length

        members = self.ips[lo:hi] + list(extra)
        r = sum(1 for ip in self.ips[:lo] if ip.is_separator)
        n_sep = sum(1 for ip in self.ips[lo:hi] if ip.is_separator)
        u = upstream if upstream is not None else self.regions[r]
        d = downstream if downstream is not None else self.regions[r + n_sep]
        old_up, old_down = self.regions[0], self.regions[-1]

        result = resolve_colocated(
            self.fd,
            self.link_id,
            u,
            d,
            members,
            t,
            x,
            self._id_maker(t, x),
            at_upstream_end=at_upstream,
            at_downstream_end=at_downstream,
        )
        self.ips[lo:hi] = result.packages
        self.regions[r : r + n_sep + 1] = result.regions

        for ip in result.terminated:
            self.history.close(ip, t)
        for ip in result.created:
            self.history.open(ip)
            packages_created.labels(kind=ip.kind.value).inc()
        for ip in result.exited:
            if ip.kind == PackageKind.ROUTE_FRONT:
                self.exit_routes = ip.payload
                self.notices.add(LinkEnd.DOWNSTREAM)
            else:
                self.handoffs.append(ip)

        if self.log is not None and (result.terminated or result.created or result.exited):
            self.log.add(
                key,
                f"{t:.9f}|link:{self.link_id}|resolve|x={x:.9f}"
                f"|ended={','.join(ip.id for ip in result.terminated)}"
                f"|created={';'.join(ip.describe() for ip in result.created)}"
                f"|exited={','.join(ip.id for ip in result.exited)}",
            )
        if self.has_upstream_end and regimes_differ(old_up, self.regions[0]):
            self._boundary_changed(LinkEnd.UPSTREAM, t, key)
        if self.has_downstream_end and regimes_differ(old_down, self.regions[-1]):
            self._boundary_changed(LinkEnd.DOWNSTREAM, t, key)

        self._schedule_range(lo - 1, lo + len(result.packages) + 1)
        return result

    def _boundary_changed(self, end: LinkEnd, t: float, key: tuple) -> None:
        regime = self.regions[0] if end == LinkEnd.UPSTREAM else self.regions[-1]
        curve = self.cum_in if end == LinkEnd.UPSTREAM else self.cum_out
        curve.set_slope(t, regime.flow)
        self.history.record_boundary(end.value, t, regime)
        self.notices.add(end)
        if self.log is not None:
            self.log.add(
                key,
                f"{t:.9f}|link:{self.link_id}|boundary|{end.value}"
                f"|k={regime.density:.9f}|f={regime.flow:.9f}",
            )

    def resolve_intersection(self, event: ScheduledEvent) -> bool:
        """Resolve the block of packages meeting at the event; False when stale"""
        indices = [self._index_of(ip) for ip in event.packages]
        if any(i is None for i in indices):
            return False
        positions = [ip.position_at(event.time) for ip in event.packages]
        if max(positions) - min(positions) > POSITION_TOLERANCE:
            return False
        x = min(max(positions[0], 0.0), self.length)
        lo, hi = self._colocated_span(event.time, min(indices), max(indices) + 1, x)
        self._resolve(event.time, x, lo, hi, event.key)
        return True

    def boundary_arrival(self, event: ScheduledEvent) -> LinkEnd | None:
        """Terminate a package at a link end; returns the end whose node must update"""
        ip = event.packages[0]
        i = self._index_of(ip)
        if i is None:
            return None
        x = 0.0 if event.end == LinkEnd.UPSTREAM else self.length
        if abs(ip.position_at(event.time) - x) > POSITION_TOLERANCE:
            return None
        lo, hi = self._colocated_span(event.time, i, i + 1, x)
        self._resolve(event.time, x, lo, hi, event.key)
        return event.end

    def process(self, event: ScheduledEvent) -> bool:
        if event.kind == EventKind.INTERSECTION:
            return self.resolve_intersection(event)
        if event.kind == EventKind.BOUNDARY_ARRIVAL:
            return self.boundary_arrival(event) is not None
        if event.kind == EventKind.BOTTLENECK_RELEASE:
            self.release_bottleneck(event.bottleneck, event.time, event.position, event.key)
            return True
        raise InvariantViolation(f"Unknown link event {event.kind}")

    # ------------------------------------------------------------ injection

    def set_boundary_regime(self, end: LinkEnd, regime: FlowRegime, t: float, key: tuple) -> bool:
        current = self.regions[0] if end == LinkEnd.UPSTREAM else self.regions[-1]
        if not regimes_differ(current, regime):
            return False
        x = 0.0 if end == LinkEnd.UPSTREAM else self.length
        lo, hi = self._span_at(t, x)
        if end == LinkEnd.UPSTREAM:
            self._resolve(t, x, lo, hi, key, upstream=regime)
        else:
            self._resolve(t, x, lo, hi, key, downstream=regime)
        return True

    def inject_ip(self, end: LinkEnd, ip: InformationPackage, t: float, key: tuple) -> bool:
        """Introduce a package at a link end.

        A shockwave stands for a boundary-state change: its outer regime on the
        side of the end becomes the new boundary state. Fronts and bottlenecks
        join whatever already sits at the end.
        """
        if ip.kind == PackageKind.SHOCKWAVE:
            regime = (
                ip.payload.upstream_regime
                if end == LinkEnd.UPSTREAM
                else ip.payload.downstream_regime
            )
            return self.set_boundary_regime(end, regime, t, key)
        x = 0.0 if end == LinkEnd.UPSTREAM else self.length
        placed = replace(ip, link=self.link_id, position=x, created_at=t)
        lo, hi = self._span_at(t, x)
        self._resolve(t, x, lo, hi, key, extra=(placed,))
        if ip.kind == PackageKind.ROUTE_FRONT and end == LinkEnd.UPSTREAM:
            self.entry_routes = ip.payload
        return True

    def inject_front(self, routes: RoutePayload, t: float, key: tuple) -> bool:
        if not routes.differs_from(self.entry_routes):
            return False
        front = InformationPackage(
            id=self._id_maker(t, 0.0)(0),
            kind=PackageKind.ROUTE_FRONT,
            link=self.link_id,
            position=0.0,
            created_at=t,
            speed=0.0,
            payload=routes,
        )
        packages_created.labels(kind=PackageKind.ROUTE_FRONT.value).inc()
        return self.inject_ip(LinkEnd.UPSTREAM, front, t, key)

    def release_bottleneck(
        self, payload: BottleneckPayload, t: float, x: float, key: tuple
    ) -> None:
        ip = InformationPackage(
            id=f"bottleneck:{payload.bottleneck_id}",
            kind=PackageKind.BOTTLENECK,
            link=self.link_id,
            position=x,
            created_at=t,
            speed=0.0,
            payload=payload.deactivated(),
        )
        packages_created.labels(kind=PackageKind.BOTTLENECK.value).inc()
        lo, hi = self._span_at(t, x)
        self._resolve(t, x, lo, hi, key, extra=(ip,))

    def find_bottleneck(self, bottleneck_id: str) -> InformationPackage | None:
        for ip in self.ips:
            if ip.kind == PackageKind.BOTTLENECK and ip.payload.bottleneck_id == bottleneck_id:
                return ip
        return None

    def change_bottleneck(
        self,
        bottleneck_id: str,
        free_speed: float | None,
        capacity: float | None,
        t: float,
        key: tuple,
    ) -> bool:
        ip = self.find_bottleneck(bottleneck_id)
        if ip is None:
            return False
        i = self._index_of(ip)
        x = ip.position_at(t)
        changes = {}
        if free_speed is not None:
            changes["free_speed"] = free_speed
        if capacity is not None:
            changes["capacity"] = capacity
        self.history.close(ip, t)
        self.ips[i] = replace(ip, position=x, created_at=t, payload=replace(ip.payload, **changes))
        lo, hi = self._colocated_span(t, i, i + 1, x)
        self._resolve(t, x, lo, hi, key)
        return True

    # ---------------------------------------------------------------- zones

    def split(self, t: float, zone_length: float) -> tuple["LinkState", "LinkState", "LinkState"]:
        """Cut into upstream zone, middle and downstream zone segments at time t"""
        upper_edge = zone_length
        lower_edge = self.length - zone_length
        groups: tuple[list, list, list] = ([], [], [])
        for ip in self.ips:
            x = ip.position_at(t)
            if x <= upper_edge:
                groups[0].append(ip)
            elif x >= lower_edge:
                groups[2].append(ip)
            else:
                groups[1].append(ip)
        counts = [sum(1 for ip in g if ip.is_separator) for g in groups]
        cut1, cut2 = counts[0], counts[0] + counts[1]

        def segment(ips, regions, up_end, down_end) -> "LinkState":
            part = LinkState(
                self.link_id,
                self.length,
                self.fd,
                regions=regions,
                entry_routes=self.entry_routes,
                exit_routes=self.exit_routes,
                history=self.history,
                cum_in=self.cum_in if up_end else None,
                cum_out=self.cum_out if down_end else None,
                ips=ips,
                has_upstream_end=up_end,
                has_downstream_end=down_end,
            )
            part.log = self.log
            part._spawn_time, part._spawn_counts = self._spawn_time, dict(self._spawn_counts)
            return part

        return (
            segment(groups[0], self.regions[: cut1 + 1], True, False),
            segment(groups[1], self.regions[cut1 : cut2 + 1], False, False),
            segment(groups[2], self.regions[cut2:], False, True),
        )

    @classmethod
    def join(cls, up: "LinkState", middle: "LinkState", down: "LinkState") -> "LinkState":
        for left, right in ((up, middle), (middle, down)):
            if regimes_differ(left.regions[-1], right.regions[0]):
                raise InvariantViolation(f"{up.link_id}: zone segments disagree at their seam")
        whole = cls(
            up.link_id,
            up.length,
            up.fd,
            regions=up.regions[:-1] + middle.regions[:-1] + down.regions,
            entry_routes=up.entry_routes,
            exit_routes=down.exit_routes,
            history=up.history,
            cum_in=up.cum_in,
            cum_out=down.cum_out,
            ips=up.ips + middle.ips + down.ips,
        )
        whole.log = up.log
        whole.handoffs = up.handoffs + middle.handoffs + down.handoffs
        whole.notices = up.notices | down.notices
        latest = max(
            (s for s in (up, middle, down) if s._spawn_time is not None),
            key=lambda s: s._spawn_time,
            default=None,
        )
        if latest is not None:
            whole._spawn_time = latest._spawn_time
            whole._spawn_counts = {}
            for s in (up, middle, down):
                if s._spawn_time == latest._spawn_time:
                    whole._spawn_counts.update(s._spawn_counts)
        return whole
