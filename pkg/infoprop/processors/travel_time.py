"""Link, route and OD travel times from cumulative vehicle curves.

All matching is first-in-first-out: the vehicle numbered N passes the entry of
a link when the inflow curve reaches N and its exit when the outflow curve
does.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from infoprop.engine.curves import COUNT_TOLERANCE, CumulativeCurve
from infoprop.exceptions import InsufficientHistoryError
from infoprop.models.scenario import Scenario

logger = logging.getLogger(__name__)

CurvePair = tuple[CumulativeCurve, CumulativeCurve]


@dataclass(frozen=True)
class LinkTravelTimeProfile:
    """Travel time of vehicles leaving a link, indexed by their exit time"""

    link_id: str
    cum_in: CumulativeCurve
    cum_out: CumulativeCurve
    free_flow_time: float = 0.0

    def at(self, t_exit: float) -> float:
        return link_travel_time(self.cum_in, self.cum_out, t_exit)

    def exit_time(self, t_entry: float) -> float:
        return forward_exit_time(self.cum_in, self.cum_out, t_entry, self.free_flow_time)


def link_travel_time(cum_in: CumulativeCurve, cum_out: CumulativeCurve, t_exit: float) -> float:
    n = cum_out.value_at(t_exit)
    if n <= COUNT_TOLERANCE:
        raise InsufficientHistoryError(f"No vehicle has left the link by t={t_exit}")
    return t_exit - cum_in.time_at(n)


def forward_exit_time(
    cum_in: CumulativeCurve, cum_out: CumulativeCurve, t_entry: float, free_flow_time: float = 0.0
) -> float:
    """Exit time of the vehicle entering at t_entry; never earlier than free flow allows"""
    n = cum_in.value_at(t_entry)
    return max(t_entry + free_flow_time, cum_out.time_at(n))


def route_travel_time(curves: Sequence[CurvePair], t_exit: float) -> float:
    """Walk the route backwards: each link's entry time is the previous link's exit time"""
    t = t_exit
    for cum_in, cum_out in reversed(curves):
        t -= link_travel_time(cum_in, cum_out, t)
    return t_exit - t


def forward_route_exit(
    curves: Sequence[CurvePair], t_entry: float, free_flow_times: Sequence[float] | None = None
) -> float:
    free = free_flow_times or [0.0] * len(curves)
    t = t_entry
    for (cum_in, cum_out), tf in zip(curves, free, strict=True):
        t = forward_exit_time(cum_in, cum_out, t, tf)
    return t


def network_entry_time(arrivals: CumulativeCurve, departures: CumulativeCurve, t: float) -> float:
    """When a vehicle arriving at its origin at t leaves the origin queue"""
    n = arrivals.value_at(t)
    if n <= COUNT_TOLERANCE:
        return t
    return max(t, departures.time_at(n))


def od_travel_times(
    scenario: Scenario,
    link_curves: Mapping[str, CurvePair],
    origin_curves: Mapping[str, CurvePair],
    edges: Sequence[float],
) -> dict[str, list[float | None]]:
    """Mean OD travel time per departure bin, weighted by route share at the bin midpoint.

    A bin is None when any route with a positive share cannot be followed to
    its destination within the recorded curves.
    """
    routes = scenario.route_map()
    free = {
        link.id: link.length / scenario.link_fd(link.id).free_speed for link in scenario.links
    }
    result: dict[str, list[float | None]] = {}
    for od in scenario.ods:
        series: list[float | None] = []
        arrivals, departures = origin_curves[od.origin]
        for a, b in zip(edges, edges[1:], strict=False):
            mid = 0.5 * (a + b)
            try:
                entry = network_entry_time(arrivals, departures, mid)
                total, weight = 0.0, 0.0
                for route_id, share in scenario.route_shares_at(od.id, mid).items():
                    if share <= 0:
                        continue
                    path = routes[route_id].links
                    exit_time = forward_route_exit(
                        [link_curves[link] for link in path], entry, [free[link] for link in path]
                    )
                    total += share * (exit_time - mid)
                    weight += share
                series.append(total / weight if weight > 0 else None)
            except InsufficientHistoryError as e:
                logger.debug(f"OD {od.id} undefined for departures at t={mid}: {e}")
                series.append(None)
        result[od.id] = series
    return result


def curve_from_knots(knots: Sequence[Sequence[float]]) -> CumulativeCurve:
    """Rebuild a closed curve from exported (t, veh) knots"""
    times = [float(t) for t, _ in knots]
    counts = [float(n) for _, n in knots]
    return CumulativeCurve(times=times, counts=counts, slope=0.0, closed_at=times[-1])
