"""Step clock and node zones of the distributed mode.

A node zone covers the part of a link that waves could cross before the end of
the current step. It starts the step at length v_free * dt and shrinks
linearly to zero at the step end. With dt bounded by the shortest
length / (2 v_free), the two zones of a link never overlap.
"""

from dataclasses import dataclass
from enum import Enum

from infoprop.engine.events import LinkEnd, ScheduledEvent
from infoprop.exceptions import ConfigurationError
from infoprop.models.packages import InformationPackage

ZONE_TOLERANCE = 1e-9


class ExecutionMode(str, Enum):
    SEQUENTIAL = "sequential"
    DISTRIBUTED = "distributed"


@dataclass(frozen=True)
class SimulationClock:
    t0: float
    horizon: float
    dt: float | None = None
    mode: ExecutionMode = ExecutionMode.SEQUENTIAL

    def __post_init__(self):
        if self.horizon <= self.t0:
            raise ConfigurationError(f"horizon {self.horizon} must exceed t0 {self.t0}")
        if self.dt is not None and self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.mode == ExecutionMode.DISTRIBUTED and self.dt is None:
            raise ConfigurationError("Distributed mode needs a step dt")

    def validate_step(self, largest: float) -> None:
        if self.mode == ExecutionMode.DISTRIBUTED and self.dt > largest + 1e-12:
            raise ConfigurationError(
                f"dt={self.dt} h exceeds the largest admissible step {largest} h"
            )

    def steps(self) -> list[float]:
        """Step start times from t0 up to, excluding, the horizon"""
        starts, i = [], 0
        while True:
            t = self.t0 + i * self.dt
            if t >= self.horizon - 1e-12:
                return starts
            starts.append(t)
            i += 1


@dataclass(frozen=True)
class NodeZone:
    node_id: str
    link_id: str
    end: LinkEnd
    link_length: float
    free_speed: float
    step_end: float

    def length_at(self, t: float) -> float:
        return max(0.0, self.free_speed * (self.step_end - t))

    def distance(self, x: float) -> float:
        return x if self.end == LinkEnd.UPSTREAM else self.link_length - x

    def contains(self, t: float, x: float) -> bool:
        return self.distance(x) <= self.length_at(t) + ZONE_TOLERANCE

    def exit_time(self, x0: float, t0: float, speed: float) -> float | None:
        """When a package at x0 at time t0 leaves the shrinking zone, if it does before step end"""
        # distance grows at rate v_away, the zone edge approaches the end at free speed
        away = speed if self.end == LinkEnd.UPSTREAM else -speed
        gap = self.length_at(t0) - self.distance(x0) + ZONE_TOLERANCE
        if gap < 0:
            return t0
        closing = away + self.free_speed
        if closing <= 0:
            return None
        t = t0 + gap / closing
        return t if t < self.step_end else None

    def holds(self, ip: InformationPackage, t: float) -> bool:
        exit_at = self.exit_time(ip.position, ip.created_at, ip.speed)
        return exit_at is None or t <= exit_at

    def admits(self, event: ScheduledEvent, t: float) -> bool:
        """Whether a link event at t belongs to this zone's stage-1 worker"""
        if event.packages:
            return all(self.holds(ip, t) for ip in event.packages)
        return self.contains(t, event.position)
