"""Event records, the event queue and the ordered event log.

Every event carries a sort key. Keys are built only from simulation data
(time, entity, position, package ids), so the order in which events are
processed and logged does not depend on how the work was scheduled.
"""

import heapq
import itertools
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from infoprop.models.packages import BottleneckPayload, InformationPackage

NODE_RANK = 0
LINK_RANK = 1
BOTTLENECK_RANK = 2
# node updates settle an instant after all of its events
UPDATE_RANK = 3


class LinkEnd(str, Enum):
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"


class EventKind(str, Enum):
    INTERSECTION = "intersection"
    BOUNDARY_ARRIVAL = "boundary_arrival"
    BOTTLENECK_RELEASE = "bottleneck_release"


class NodeEventKind(str, Enum):
    DEMAND_CHANGE = "demand_change"
    QUEUE_EMPTY = "queue_empty"
    PRIORITY_CHANGE = "priority_change"
    EXIT_CAPACITY_CHANGE = "exit_capacity_change"
    INCIDENT = "incident"


@dataclass(frozen=True, slots=True)
class ScheduledEvent:
    """A link-located event: a meeting of packages, an arrival at a link end or a release"""

    time: float
    kind: EventKind
    link_id: str
    position: float
    packages: tuple[InformationPackage, ...] = ()
    end: LinkEnd | None = None
    bottleneck: BottleneckPayload | None = None

    @property
    def tags(self) -> tuple[str, ...]:
        if self.kind == EventKind.BOTTLENECK_RELEASE:
            return (f"release:{self.bottleneck.bottleneck_id}",)
        return tuple(ip.id for ip in self.packages)

    @property
    def key(self) -> tuple:
        return (self.time, LINK_RANK, self.link_id, self.position, self.tags)


@dataclass(frozen=True, slots=True)
class NodeEvent:
    time: float
    node_id: str
    kind: NodeEventKind
    data: Any = None

    @property
    def key(self) -> tuple:
        return (self.time, NODE_RANK, self.node_id, self.kind.value, repr(self.data))


@dataclass(frozen=True, slots=True)
class BottleneckChange:
    time: float
    bottleneck_id: str
    free_speed: float | None
    capacity: float | None

    @property
    def key(self) -> tuple:
        return (self.time, BOTTLENECK_RANK, self.bottleneck_id)


class EventQueue:
    """Min-heap of events ordered by their keys; stale entries are dropped at pop"""

    def __init__(self):
        self._heap: list[tuple[tuple, int, Any]] = []
        self._counter = itertools.count()

    def push(self, event: Any) -> None:
        heapq.heappush(self._heap, (event.key, next(self._counter), event))

    def peek(self) -> Any | None:
        return self._heap[0][2] if self._heap else None

    def pop(self) -> Any:
        return heapq.heappop(self._heap)[2]

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class EventLog:
    """Log lines keyed by the event that produced them; sorted on export"""

    _entries: list[tuple[tuple, int, str]] = field(default_factory=list)
    _counters: dict[tuple, int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def add(self, key: tuple, text: str) -> None:
        with self._lock:
            seq = self._counters.get(key, 0)
            self._counters[key] = seq + 1
            self._entries.append((key, seq, text))

    def lines(self) -> list[str]:
        return [text for _, _, text in sorted(self._entries, key=lambda e: (e[0], e[1]))]

    def __len__(self) -> int:
        return len(self._entries)
