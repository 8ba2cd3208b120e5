"""Time-space record of a link: separator trajectories and boundary states.

The record is enough to rebuild the piecewise-constant density field, which is
used for time-space exports and for driving probe vehicles through a link.
"""

import logging
import math
import threading
from bisect import bisect_right
from dataclasses import dataclass

from infoprop.exceptions import InsufficientHistoryError
from infoprop.models.fundamental_diagram import FlowRegime, FundamentalDiagram
from infoprop.models.packages import InformationPackage

logger = logging.getLogger(__name__)

POSITION_TOLERANCE = 1e-9
MAX_PROBE_STEPS = 200_000


@dataclass
class TrajectorySegment:
    package_id: str
    kind: str
    start_time: float
    start_position: float
    speed: float
    upstream: FlowRegime
    downstream: FlowRegime
    end_time: float = math.inf

    def position_at(self, t: float) -> float:
        return self.start_position + self.speed * (t - self.start_time)

    def alive_at(self, t: float) -> bool:
        return self.start_time <= t < self.end_time


class WaveHistory:
    """Append-only trajectory log for one link"""

    def __init__(self, link_id: str, length: float, fd: FundamentalDiagram):
        self.link_id = link_id
        self.length = length
        self.fd = fd
        self._segments: list[TrajectorySegment] = []
        self._open: dict[tuple[str, float], TrajectorySegment] = {}
        self._boundary: dict[str, tuple[list[float], list[FlowRegime]]] = {
            "upstream": ([], []),
            "downstream": ([], []),
        }
        self._lock = threading.Lock()

    # ------------------------------------------------------------- recording

    def open(self, ip: InformationPackage) -> None:
        up, down = ip.payload.upstream_regime, ip.payload.downstream_regime
        segment = TrajectorySegment(
            ip.id, ip.kind.value, ip.created_at, ip.position, ip.speed, up, down
        )
        with self._lock:
            self._segments.append(segment)
            self._open[(ip.id, ip.created_at)] = segment

    def close(self, ip: InformationPackage, t: float) -> None:
        with self._lock:
            segment = self._open.pop((ip.id, ip.created_at), None)
        if segment is not None:
            segment.end_time = t

    def record_boundary(self, end: str, t: float, regime: FlowRegime) -> None:
        times, regimes = self._boundary[end]
        if times and times[-1] == t:
            regimes[-1] = regime
        else:
            times.append(t)
            regimes.append(regime)

    # --------------------------------------------------------------- queries

    @property
    def segments(self) -> list[TrajectorySegment]:
        return sorted(self._segments, key=lambda s: (s.start_time, s.start_position, s.package_id))

    def boundary_series(self, end: str) -> list[tuple[float, float, float]]:
        times, regimes = self._boundary[end]
        return [(t, r.density, r.flow) for t, r in zip(times, regimes, strict=True)]

    def boundary_regime(self, end: str, t: float) -> FlowRegime:
        times, regimes = self._boundary[end]
        i = bisect_right(times, t)
        if i == 0:
            raise InsufficientHistoryError(f"No boundary state on {self.link_id} at t={t}")
        return regimes[i - 1]

    def regime_at(self, t: float, x: float) -> FlowRegime:
        """State immediately downstream of x at time t"""
        best: TrajectorySegment | None = None
        best_pos = -math.inf
        for segment in self._segments:
            if not segment.alive_at(t):
                continue
            pos = segment.position_at(t)
            if pos <= x + POSITION_TOLERANCE and (
                pos > best_pos + POSITION_TOLERANCE
                or (abs(pos - best_pos) <= POSITION_TOLERANCE and segment.speed > best.speed)
            ):
                best, best_pos = segment, pos
        if best is None:
            return self.boundary_regime("upstream", t)
        return best.downstream

    def density_at(self, t: float, x: float) -> float:
        return self.regime_at(t, x).density

    def time_space_samples(self, times: list[float], dx: float) -> list[tuple[float, float, float]]:
        cells = max(1, int(round(self.length / dx)))
        samples = []
        for t in times:
            for c in range(cells):
                x = (c + 0.5) * self.length / cells
                samples.append((t, x, self.density_at(t, x)))
        return samples

    def probe_trajectory(self, t_entry: float) -> float:
        """Exit time of a vehicle entering at t_entry, integrated through the speed field"""
        events = sorted(
            {s.start_time for s in self._segments}
            | {s.end_time for s in self._segments if math.isfinite(s.end_time)}
            | set(self._boundary["upstream"][0])
        )
        t, x = t_entry, 0.0
        for _ in range(MAX_PROBE_STEPS):
            if x >= self.length - POSITION_TOLERANCE:
                return t
            speed = self.fd.speed_at(self.regime_at(t, x + POSITION_TOLERANCE).density)
            step = math.inf
            if speed > 0:
                step = (self.length - x) / speed
            for segment in self._segments:
                if not segment.alive_at(t):
                    continue
                gap = segment.position_at(t) - x
                closing = speed - segment.speed
                if gap > POSITION_TOLERANCE and closing > 1e-12:
                    step = min(step, gap / closing)
            i = bisect_right(events, t)
            if i < len(events):
                step = min(step, events[i] - t)
            if not math.isfinite(step):
                raise InsufficientHistoryError(
                    f"Probe stuck on {self.link_id} at t={t}, x={x} with no further history"
                )
            t += step
            x = min(self.length, x + speed * step)
        raise InsufficientHistoryError(f"Probe on {self.link_id} did not finish")
