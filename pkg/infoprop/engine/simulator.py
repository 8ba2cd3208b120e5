"""Network simulation: node updates, link propagation and the two execution modes.

Both modes drain events through ``EventWorker``. The sequential mode uses one
worker over the whole network. The distributed mode handles each step in
three parts: the instant at the step start is drained globally, node zones
are drained in parallel (stage 1), and the joined links are then drained in
parallel (stage 2). Workers own their links and nodes exclusively and every
log line is keyed by the event that produced it, so both modes write the same
log.
"""

import logging
import math
import threading
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from infoprop.config import SimulationConfig, settings
from infoprop.engine.curves import CumulativeCurve
from infoprop.engine.events import (
    UPDATE_RANK,
    BottleneckChange,
    EventKind,
    EventLog,
    EventQueue,
    LinkEnd,
    NodeEvent,
    NodeEventKind,
    ScheduledEvent,
)
from infoprop.engine.link_engine import LinkState, inflow_regime, outflow_regime
from infoprop.engine.node_engine import (
    SINK,
    SOURCE,
    NodeFlowSnapshot,
    NodeTopology,
    aggregate_flows,
    allocate_flows,
    build_topology,
    downstream_route_state,
)
from infoprop.engine.zones import ExecutionMode, NodeZone, SimulationClock
from infoprop.exceptions import InvariantViolation
from infoprop.models.output import RunSummary, SimulationOutput
from infoprop.models.packages import (
    BottleneckPayload,
    InformationPackage,
    RouteKey,
    RoutePayload,
)
from infoprop.models.scenario import (
    BottleneckChangeEvent,
    ExitCapacityChangeEvent,
    PriorityChangeEvent,
    Scenario,
)
from infoprop.processors.sensors import record_sensor
from infoprop.processors.travel_time import od_travel_times
from infoprop.utils.monitoring import events_processed, node_updates, timed_run

logger = logging.getLogger(__name__)

TIME_TOLERANCE = 1e-12
BACKLOG_TOLERANCE = 1e-6
CONSERVATION_TOLERANCE = 1e-6


def _fmt(values: Iterable[float]) -> str:
    return ",".join("inf" if math.isinf(v) else f"{v:.9f}" for v in values)


@dataclass
class OriginState:
    """Point queue at an origin; arrivals and departures share one FIFO"""

    arrivals: CumulativeCurve
    departures: CumulativeCurve
    mix: dict[RouteKey, float] = field(default_factory=dict)
    queue_empty_at: float | None = None

    def backlog(self, t: float) -> float:
        b = self.arrivals.value_at(t) - self.departures.value_at(t)
        return b if b > BACKLOG_TOLERANCE else 0.0


@dataclass
class NodeRuntime:
    node_id: str
    topo: NodeTopology
    origin: OriginState | None = None
    sink: CumulativeCurve | None = None
    updates: int = 0

    @property
    def upstream_links(self) -> list[str]:
        return [link for link in self.topo.upstream_links if link != SOURCE]

    @property
    def downstream_links(self) -> list[str]:
        return [link for link in self.topo.downstream_links if link != SINK]


class EventWorker:
    """Drains events over links and nodes it owns exclusively.

    Node-zone workers carry a zone per link and drop events that fall outside
    it; those are recomputed once the link is joined again. Middle workers
    own no node and must never see a link end.
    """

    def __init__(
        self,
        sim: "Simulator",
        links: dict[str, LinkState],
        nodes: Iterable[str],
        *,
        limit: float,
        inclusive: bool = False,
        zones: dict[str, NodeZone] | None = None,
        allow_boundary: bool = True,
    ):
        self.sim = sim
        self.links = links
        self.nodes = set(nodes)
        self.limit = limit
        self.inclusive = inclusive
        self.zones = zones
        self.allow_boundary = allow_boundary
        self.queue = EventQueue()
        self.dirty: set[str] = set()
        self._iteration_time: float | None = None
        self._iterations: dict[str, int] = {}
        for link in links.values():
            link.queue = self.queue
            link.schedule_all()

    # ------------------------------------------------------------- draining

    def _due(self, t: float, until: float | None = None) -> bool:
        if until is not None:
            return t < until
        return t <= self.limit if self.inclusive else t < self.limit

    def schedule(self, event: NodeEvent) -> None:
        if self._due(event.time):
            self.queue.push(event)
        else:
            self.sim.defer(event)

    def drain(self, start: float, until: float | None = None) -> None:
        """Process due events instant by instant, flushing dirty nodes after each instant.

        ``until`` stops early without narrowing what the worker may schedule.
        """
        current = start if self.dirty else None
        while True:
            event = self.queue.peek()
            due = event is not None and self._due(event.time, until)
            if due and (current is None or event.time <= current):
                self.queue.pop()
                current = event.time if current is None else max(current, event.time)
                self.dispatch(event, current)
                continue
            if current is not None and self.dirty:
                self.flush(current)
                continue
            if not due:
                return
            current = None

    def dispatch(self, event, t: float) -> None:
        if isinstance(event, NodeEvent):
            events_processed.labels(kind=event.kind.value).inc()
            self._node_event(event, t)
            return
        if isinstance(event, BottleneckChange):
            events_processed.labels(kind="bottleneck_change").inc()
            self._bottleneck_change(event, t)
            return

        link = self.links[event.link_id]
        if self.zones is not None and not self.zones[event.link_id].admits(event, t):
            return
        if event.kind == EventKind.BOUNDARY_ARRIVAL and not self.allow_boundary:
            raise InvariantViolation(
                f"{event.link_id}: package reached a link end at t={t} outside a node zone"
            )
        events_processed.labels(kind=event.kind.value).inc()
        if event.kind == EventKind.BOTTLENECK_RELEASE:
            payload = self.sim.release_payload(event.bottleneck)
            logger.debug(f"Releasing bottleneck {payload.bottleneck_id} on {link.link_id} at t={t}")
            link.release_bottleneck(payload, t, event.position, event.key)
        else:
            link.process(event)
        self._settle(link, t, event.key)

    def _settle(self, link: LinkState, t: float, key: tuple) -> None:
        while link.notices or link.handoffs:
            for end in sorted(link.notices):
                node = self.sim.node_at(link.link_id, end)
                if node not in self.nodes:
                    raise InvariantViolation(
                        f"{link.link_id}: {end.value} end changed at t={t} outside a node zone"
                    )
                self.dirty.add(node)
            link.notices.clear()
            handoffs, link.handoffs = link.handoffs, []
            for ip in handoffs:
                self._hand_off(ip, link.link_id, t, key)

    def _hand_off(self, ip: InformationPackage, link_id: str, t: float, key: tuple) -> None:
        route = ip.payload.route
        i = route.index(link_id)
        if i + 1 >= len(route):
            self.sim.log.add(key, f"{t:.9f}|bottleneck:{ip.payload.bottleneck_id}|retired")
            return
        nxt = self.links.get(route[i + 1])
        if nxt is None:
            raise InvariantViolation(
                f"Bottleneck {ip.id} handed to {route[i + 1]} outside the worker"
            )
        nxt.inject_ip(LinkEnd.UPSTREAM, ip, t, key)
        self._settle(nxt, t, key)

    # ---------------------------------------------------------------- nodes

    def flush(self, t: float) -> None:
        if self._iteration_time != t:
            self._iteration_time = t
            self._iterations = {}
        while self.dirty:
            node_id = min(self.dirty)
            self.dirty.discard(node_id)
            n = self._iterations.get(node_id, 0)
            if n >= self.sim.config.max_node_iterations:
                raise InvariantViolation(
                    f"Node {node_id} did not settle after {n} updates at t={t}"
                )
            self._iterations[node_id] = n + 1
            self.node_update(node_id, t, (t, UPDATE_RANK, node_id, n))

    def node_update(self, node_id: str, t: float, key: tuple) -> list[str]:
        """Reallocate flows at a node and push the result onto its links; returns links changed"""
        rt = self.sim.nodes[node_id]
        topo = rt.topo
        sim = self.sim
        node_updates.inc()
        rt.updates += 1

        rate, backlog = 0.0, 0.0
        if rt.origin is not None:
            rates = sim.source_rates(node_id, t)
            rate = sum(rates.values())
            if rate > 0:
                rt.origin.mix = {r: v / rate for r, v in rates.items()}
            backlog = rt.origin.backlog(t)

        capacities = []
        for link_id in topo.downstream_links:
            if link_id == SINK:
                capacities.append(math.inf)
            else:
                link = self.links[link_id]
                capacities.append(link.fd.inflow_capacity(link.upstream_regime.density))
        C_J = np.array(capacities)

        demands = []
        for link_id in topo.upstream_links:
            if link_id == SOURCE:
                finite = [c for c in capacities if math.isfinite(c)]
                demands.append(rate if backlog <= 0 else max(rate, sum(finite)))
            else:
                link = self.links[link_id]
                sending = link.fd.sending_flow(link.downstream_regime.density)
                demands.append(min(sending, sim.exit_cap(link_id)))
        D_I = np.array(demands)

        P_R = np.zeros(len(topo.upstream_routes))
        mixes: dict[str, dict[RouteKey, float]] = {}
        for r, route in enumerate(topo.upstream_routes):
            if route[0] == SOURCE:
                P_R[r] = rt.origin.mix.get(route, 0.0) if rt.origin else 0.0
            else:
                if route[0] not in mixes:
                    mixes[route[0]] = self.links[route[0]].exit_routes.as_dict()
                P_R[r] = mixes[route[0]].get(route, 0.0)
        per_link = topo.A_IR.T @ (topo.A_IR @ P_R)
        P_R = np.divide(P_R, per_link, out=np.zeros_like(P_R), where=per_link > 0)

        F_IJ = allocate_flows(topo, NodeFlowSnapshot(D_I, P_R, C_J))
        F_I, F_J = aggregate_flows(F_IJ)

        changed: list[str] = []
        for i, link_id in enumerate(topo.upstream_links):
            if link_id == SOURCE:
                continue
            link = self.links[link_id]
            target = outflow_regime(link.fd, link.downstream_regime, F_I[i])
            if link.set_boundary_regime(LinkEnd.DOWNSTREAM, target, t, key):
                changed.append(link_id)

        previous = np.zeros(len(topo.downstream_routes))
        for s, route in enumerate(topo.downstream_routes):
            if route[0] != SINK:
                previous[s] = self.links[route[0]].entry_routes.as_dict().get(route, 0.0)
        _, P_S = downstream_route_state(topo, F_I, P_R, previous)

        for j, link_id in enumerate(topo.downstream_links):
            if link_id == SINK:
                continue
            link = self.links[link_id]
            target = inflow_regime(link.fd, link.upstream_regime, F_J[j])
            boundary = link.set_boundary_regime(LinkEnd.UPSTREAM, target, t, key)
            routes = {topo.downstream_routes[s]: P_S[s] for s in topo.routes_on(link_id, True)}
            total = sum(routes.values())
            front = False
            if total > 0:
                payload = RoutePayload.from_mapping({r: v / total for r, v in routes.items()})
                front = link.inject_front(payload, t, key)
            if boundary or front:
                changed.append(link_id)

        if rt.origin is not None:
            out = F_I[topo.upstream_links.index(SOURCE)]
            rt.origin.arrivals.set_slope(t, rate)
            rt.origin.departures.set_slope(t, out)
            rt.origin.queue_empty_at = None
            if backlog > 0 and out > rate + 1e-9:
                rt.origin.queue_empty_at = t + backlog / (out - rate)
                self.schedule(
                    NodeEvent(rt.origin.queue_empty_at, node_id, NodeEventKind.QUEUE_EMPTY)
                )
        if rt.sink is not None:
            rt.sink.set_slope(t, F_J[topo.downstream_links.index(SINK)])

        sim.log.add(
            key,
            f"{t:.9f}|node:{node_id}|update|D={_fmt(D_I)}|C={_fmt(C_J)}"
            f"|F_I={_fmt(F_I)}|F_J={_fmt(F_J)}|backlog={backlog:.9f}",
        )

        # the node's own boundary changes need no second pass
        for link_id in rt.upstream_links:
            self.links[link_id].notices.discard(LinkEnd.DOWNSTREAM)
        for link_id in rt.downstream_links:
            self.links[link_id].notices.discard(LinkEnd.UPSTREAM)
        for link_id in changed:
            self._settle(self.links[link_id], t, key)
        return changed

    def _node_event(self, event: NodeEvent, t: float) -> None:
        sim = self.sim
        rt = sim.nodes[event.node_id]
        if event.kind == NodeEventKind.QUEUE_EMPTY:
            if rt.origin is None or rt.origin.queue_empty_at != event.time:
                return
        elif event.kind == NodeEventKind.PRIORITY_CHANGE:
            rt.topo = sim.topology(event.node_id, event.data)
        elif event.kind in (NodeEventKind.EXIT_CAPACITY_CHANGE, NodeEventKind.INCIDENT):
            link_id, value = event.data
            if event.kind == NodeEventKind.INCIDENT:
                sim.incident_factor[link_id] = value
            else:
                sim.exit_capacity[link_id] = value
        sim.log.add(event.key, f"{t:.9f}|node:{event.node_id}|{event.kind.value}|{event.data!r}")
        self.dirty.add(event.node_id)

    def _bottleneck_change(self, event: BottleneckChange, t: float) -> None:
        detail = f"v={event.free_speed!r}|c={event.capacity!r}"
        for link_id in sorted(self.links):
            link = self.links[link_id]
            changed = link.change_bottleneck(
                event.bottleneck_id, event.free_speed, event.capacity, t, event.key
            )
            if changed:
                line = f"{t:.9f}|bottleneck:{event.bottleneck_id}|change|{detail}"
                self.sim.log.add(event.key, line)
                self._settle(link, t, event.key)
                return
        # not on the network yet: the change applies at release
        overrides = self.sim.bottleneck_overrides.setdefault(event.bottleneck_id, {})
        if event.free_speed is not None:
            overrides["free_speed"] = event.free_speed
        if event.capacity is not None:
            overrides["capacity"] = event.capacity
        self.sim.log.add(event.key, f"{t:.9f}|bottleneck:{event.bottleneck_id}|pending|{detail}")


class Simulator:
    """Runs a scenario from t0 to the horizon in sequential or distributed mode"""

    def __init__(
        self,
        scenario: Scenario,
        clock: SimulationClock | None = None,
        *,
        workers: int | None = None,
        config: SimulationConfig | None = None,
    ):
        self.scenario = scenario
        self.clock = clock or SimulationClock(scenario.t0, scenario.horizon, scenario.dt)
        self.config = config or settings.simulation
        self.workers = workers or settings.workers
        if self.clock.mode == ExecutionMode.DISTRIBUTED:
            self.clock.validate_step(scenario.max_step())

        self.log = EventLog()
        self.link_specs = scenario.link_map()
        self.fds = {link.id: scenario.link_fd(link.id) for link in scenario.links}
        self.exit_capacity: dict[str, float | None] = {
            link.id: link.exit_capacity for link in scenario.links
        }
        self.incident_factor: dict[str, float] = {link.id: 1.0 for link in scenario.links}
        self.bottleneck_overrides: dict[str, dict[str, float]] = {}
        self.pending = EventQueue()
        self._pending_lock = threading.Lock()
        self.max_conservation_error = 0.0
        self.initial_vehicles = 0.0

        self._paths = scenario.route_paths()
        self.links: dict[str, LinkState] = {}
        self._build_links()
        self.nodes: dict[str, NodeRuntime] = {}
        self._build_nodes()
        self._schedule_external()

    # ---------------------------------------------------------------- setup

    def _build_links(self) -> None:
        t0 = self.clock.t0
        for spec in self.scenario.links:
            fd = self.fds[spec.id]
            initial = fd.regime(spec.initial_density * spec.lanes)
            local = [p[p.index(spec.id) :] for p in self._paths if spec.id in p]
            link = LinkState.empty(
                spec.id, spec.length, fd, t0, initial, RoutePayload.equal_split(local)
            )
            link.log = self.log
            self.links[spec.id] = link
            self.initial_vehicles += initial.density * spec.length

    def topology(self, node_id: str, priorities=None) -> NodeTopology:
        ups = [link.id for link in self.scenario.links if link.to_node == node_id]
        downs = [link.id for link in self.scenario.links if link.from_node == node_id]
        return build_topology(
            node_id,
            ups,
            downs,
            self._paths,
            origin=any(od.origin == node_id for od in self.scenario.ods),
            destination=any(od.destination == node_id for od in self.scenario.ods),
            priorities=priorities,
            capacity_weights={link: self.fds[link].max_flow for link in ups + downs},
        )

    def _build_nodes(self) -> None:
        t0 = self.clock.t0
        for node in self.scenario.nodes:
            topo = self.topology(node.id, node.priorities)
            origin = sink = None
            if SOURCE in topo.upstream_links:
                origin = OriginState(CumulativeCurve.start(t0), CumulativeCurve.start(t0))
            if SINK in topo.downstream_links:
                sink = CumulativeCurve.start(t0)
            self.nodes[node.id] = NodeRuntime(node.id, topo, origin, sink)

    def _schedule_external(self) -> None:
        sc = self.scenario
        t0, horizon = self.clock.t0, self.clock.horizon
        events: list = []
        for node_id, rt in self.nodes.items():
            if rt.origin is None:
                continue
            times = {
                t for od in sc.ods if od.origin == node_id for t in sc.demand_breakpoints(od.id)
            }
            events += [NodeEvent(t, node_id, NodeEventKind.DEMAND_CHANGE) for t in sorted(times)]
        for incident in sc.incidents:
            spec = self.link_specs[incident.link]
            factor = (spec.lanes - incident.blocked_lanes) / spec.lanes
            events.append(
                NodeEvent(incident.start, spec.to_node, NodeEventKind.INCIDENT, (spec.id, factor))
            )
            events.append(
                NodeEvent(
                    incident.start + incident.duration,
                    spec.to_node,
                    NodeEventKind.INCIDENT,
                    (spec.id, 1.0),
                )
            )
        for event in sc.events:
            if isinstance(event, PriorityChangeEvent):
                events.append(
                    NodeEvent(
                        event.time, event.node, NodeEventKind.PRIORITY_CHANGE, event.priorities
                    )
                )
            elif isinstance(event, ExitCapacityChangeEvent):
                node = self.link_specs[event.link].to_node
                events.append(
                    NodeEvent(
                        event.time,
                        node,
                        NodeEventKind.EXIT_CAPACITY_CHANGE,
                        (event.link, event.capacity),
                    )
                )
            elif isinstance(event, BottleneckChangeEvent):
                events.append(
                    BottleneckChange(event.time, event.bottleneck, event.free_speed, event.capacity)
                )
        routes = sc.route_map()
        for bn in sc.bottlenecks:
            path = tuple(routes[bn.route].links)
            events.append(
                ScheduledEvent(
                    bn.release_time,
                    EventKind.BOTTLENECK_RELEASE,
                    path[0],
                    bn.position,
                    bottleneck=BottleneckPayload(bn.id, bn.free_speed, bn.capacity, path),
                )
            )
        for event in events:
            if t0 <= event.time < horizon:
                self.pending.push(event)

    # -------------------------------------------------------------- queries

    def node_at(self, link_id: str, end: LinkEnd) -> str:
        spec = self.link_specs[link_id]
        return spec.from_node if end == LinkEnd.UPSTREAM else spec.to_node

    def exit_cap(self, link_id: str) -> float:
        base = self.exit_capacity[link_id]
        factor = self.incident_factor[link_id]
        if base is None:
            return math.inf if factor >= 1.0 else self.fds[link_id].max_flow * factor
        return base * factor

    def source_rates(self, node_id: str, t: float) -> dict[RouteKey, float]:
        rates: dict[RouteKey, float] = defaultdict(float)
        routes = self.scenario.route_map()
        for od in self.scenario.ods:
            if od.origin != node_id:
                continue
            demand = self.scenario.demand_at(od.id, t)
            for route_id, share in self.scenario.route_shares_at(od.id, t).items():
                if share > 0:
                    rates[(SOURCE, *routes[route_id].links)] += demand * share
        return dict(sorted(rates.items()))

    def release_payload(self, payload: BottleneckPayload) -> BottleneckPayload:
        overrides = self.bottleneck_overrides.get(payload.bottleneck_id)
        return replace(payload, **overrides) if overrides else payload

    def defer(self, event: NodeEvent) -> None:
        with self._pending_lock:
            self.pending.push(event)

    def _take_pending(self, limit: float, inclusive: bool) -> list:
        taken = []
        while self.pending:
            event = self.pending.peek()
            if event.time > limit or (not inclusive and event.time >= limit):
                break
            taken.append(self.pending.pop())
        return taken

    def _next_bottleneck_time(self, after: float) -> float:
        times = [
            event.time
            for _, _, event in self.pending._heap
            if isinstance(event, BottleneckChange)
            or (isinstance(event, ScheduledEvent) and event.kind == EventKind.BOTTLENECK_RELEASE)
        ]
        later = [t for t in times if t > after]
        return min(later, default=math.inf)

    def conservation_error(self, t: float) -> float:
        entered = self.initial_vehicles + sum(
            rt.origin.departures.value_at(t) for rt in self.nodes.values() if rt.origin
        )
        exited = sum(rt.sink.value_at(t) for rt in self.nodes.values() if rt.sink)
        on_network = sum(link.vehicles(t) for link in self.links.values())
        return abs(entered - exited - on_network)

    def checkpoint(self, t: float) -> None:
        for link in self.links.values():
            link.check_invariants(t)
        error = self.conservation_error(t)
        self.max_conservation_error = max(self.max_conservation_error, error)
        if error > CONSERVATION_TOLERANCE:
            logger.warning(f"Conservation drift of {error:.3e} veh at t={t}")

    # ------------------------------------------------------------ execution

    def run(self, time_space_dx: float | None = None) -> SimulationOutput:
        mode = self.clock.mode.value
        logger.info(
            f"Running {self.scenario.name} in {mode} mode over "
            f"[{self.clock.t0}, {self.clock.horizon}] h with {len(self.links)} links"
        )
        with timed_run(mode):
            if self.clock.mode == ExecutionMode.DISTRIBUTED:
                self._run_distributed()
            else:
                self._run_sequential()
        self.checkpoint(self.clock.horizon)
        output = self._output(time_space_dx)
        logger.info(
            f"Finished {self.scenario.name}: {output.summary.events} events, "
            f"{output.summary.node_updates} node updates"
        )
        return output

    def _run_sequential(self) -> None:
        edges = self.scenario.bin_edges()
        worker = EventWorker(self, self.links, self.nodes, limit=self.clock.horizon)
        for event in self._take_pending(self.clock.horizon, inclusive=False):
            worker.queue.push(event)
        worker.dirty = set(self.nodes)
        start = self.clock.t0
        for edge in edges[1:]:
            worker.drain(start, until=edge)
            self.checkpoint(edge)
            start = edge

    def _run_distributed(self) -> None:
        starts = self.clock.steps()
        first = True
        for start, end in zip(starts, [*starts[1:], self.clock.horizon], strict=True):
            t = start
            # bottleneck releases and changes cut a step short
            while t < end - TIME_TOLERANCE:
                self._drain_instant(t, all_dirty=first)
                first = False
                self.checkpoint(t)
                step_end = min(end, self._next_bottleneck_time(t))
                self.step_distributed(t, step_end)
                t = step_end

    def _drain_instant(self, t: float, all_dirty: bool = False) -> None:
        worker = EventWorker(self, self.links, self.nodes, limit=t, inclusive=True)
        for event in self._take_pending(t, inclusive=True):
            worker.queue.push(event)
        if all_dirty:
            worker.dirty = set(self.nodes)
        worker.drain(t)

    def step_distributed(self, t: float, step_end: float) -> None:
        """Advance every link and node over the open interval (t, step_end)"""
        segments = {
            link_id: link.split(t, link.fd.max_wave_speed * (step_end - t))
            for link_id, link in self.links.items()
        }
        node_events: dict[str, list] = defaultdict(list)
        for event in self._take_pending(step_end, inclusive=False):
            if not isinstance(event, NodeEvent):
                raise InvariantViolation(f"Unexpected {event!r} inside a distributed step")
            node_events[event.node_id].append(event)

        zone_workers = []
        for node_id in sorted(self.nodes):
            rt = self.nodes[node_id]
            owned: dict[str, LinkState] = {}
            zones: dict[str, NodeZone] = {}
            for link_id in rt.upstream_links:
                owned[link_id] = segments[link_id][2]
                zones[link_id] = self._zone(node_id, link_id, LinkEnd.DOWNSTREAM, step_end)
            for link_id in rt.downstream_links:
                owned[link_id] = segments[link_id][0]
                zones[link_id] = self._zone(node_id, link_id, LinkEnd.UPSTREAM, step_end)
            worker = EventWorker(self, owned, [node_id], limit=step_end, zones=zones)
            for event in node_events.get(node_id, []):
                worker.queue.push(event)
            zone_workers.append(worker)
        Parallel(n_jobs=self.workers, prefer="threads")(
            delayed(w.drain)(t) for w in zone_workers
        )

        for link_id, (up, middle, down) in segments.items():
            self.links[link_id] = LinkState.join(up, middle, down)
        middle_workers = [
            EventWorker(self, {link_id: link}, [], limit=step_end, allow_boundary=False)
            for link_id, link in sorted(self.links.items())
        ]
        Parallel(n_jobs=self.workers, prefer="threads")(
            delayed(w.drain)(t) for w in middle_workers
        )

    def _zone(self, node_id: str, link_id: str, end: LinkEnd, step_end: float) -> NodeZone:
        return NodeZone(
            node_id,
            link_id,
            end,
            self.link_specs[link_id].length,
            self.fds[link_id].max_wave_speed,
            step_end,
        )

    # --------------------------------------------------------------- output

    def _output(self, time_space_dx: float | None) -> SimulationOutput:
        horizon = self.clock.horizon
        edges = self.scenario.bin_edges()
        for link in self.links.values():
            link.cum_in.close(horizon)
            link.cum_out.close(horizon)
        for rt in self.nodes.values():
            if rt.origin is not None:
                rt.origin.arrivals.close(horizon)
                rt.origin.departures.close(horizon)
            if rt.sink is not None:
                rt.sink.close(horizon)

        sensor_counts = {}
        for sensor in self.scenario.sensors:
            link = self.links[sensor.link]
            curve = link.cum_in if sensor.end == LinkEnd.UPSTREAM else link.cum_out
            sensor_counts[sensor.id] = record_sensor(curve, edges)

        link_curves = {
            link_id: link.cumulative_curves() for link_id, link in self.links.items()
        }
        origin_curves = {
            node_id: (rt.origin.arrivals, rt.origin.departures)
            for node_id, rt in self.nodes.items()
            if rt.origin is not None
        }
        travel_times = od_travel_times(self.scenario, link_curves, origin_curves, edges)

        boundary_history = {
            link_id: {
                end.value: link.history.boundary_series(end.value) for end in LinkEnd
            }
            for link_id, link in sorted(self.links.items())
        }
        curves = {
            link_id: {"in": link.cum_in.knots(), "out": link.cum_out.knots()}
            for link_id, link in sorted(self.links.items())
        }
        for node_id, (arrivals, departures) in sorted(origin_curves.items()):
            curves[f"origin:{node_id}"] = {
                "arrivals": arrivals.knots(),
                "departures": departures.knots(),
            }

        time_space = None
        if time_space_dx is not None:
            time_space = {
                link_id: link.history.time_space_samples(edges[:-1], time_space_dx)
                for link_id, link in sorted(self.links.items())
            }

        entered = self.initial_vehicles + sum(
            rt.origin.departures.value_at(horizon) for rt in self.nodes.values() if rt.origin
        )
        exited = sum(rt.sink.value_at(horizon) for rt in self.nodes.values() if rt.sink)
        events = self.log.lines()
        summary = RunSummary(
            mode=self.clock.mode.value,
            horizon=horizon,
            events=len(events),
            packages=sum(len(link.history.segments) for link in self.links.values()),
            node_updates=sum(rt.updates for rt in self.nodes.values()),
            vehicles_entered=round(entered, 9),
            vehicles_exited=round(exited, 9),
            vehicles_on_network=round(
                sum(link.vehicles(horizon) for link in self.links.values()), 9
            ),
            max_conservation_error=self.max_conservation_error,
        )
        return SimulationOutput(
            scenario=self.scenario.name,
            bin_edges=edges,
            events=events,
            sensor_counts=sensor_counts,
            od_travel_times=travel_times,
            boundary_history=boundary_history,
            cumulative_curves=curves,
            time_space=time_space,
            summary=summary,
        )


def run(
    scenario: Scenario,
    clock: SimulationClock | None = None,
    *,
    workers: int | None = None,
    time_space_dx: float | None = None,
) -> SimulationOutput:
    return Simulator(scenario, clock, workers=workers).run(time_space_dx)
