import time
from collections.abc import Iterator
from contextlib import contextmanager

from prometheus_client import Counter, Histogram

# Prometheus metrics
events_processed = Counter(
    "infoprop_events_processed_total",
    "Simulation events processed",
    ["kind"],
)

packages_created = Counter(
    "infoprop_packages_created_total",
    "Information packages created",
    ["kind"],
)

node_updates = Counter("infoprop_node_updates_total", "Node flow allocations performed")

run_duration = Histogram(
    "infoprop_run_duration_seconds",
    "Wall-clock duration of simulation runs",
    ["mode"],
)


@contextmanager
def timed_run(mode: str) -> Iterator[None]:
    """Observe the wall-clock duration of a run"""
    start_time = time.time()
    try:
        yield
    finally:
        run_duration.labels(mode=mode).observe(time.time() - start_time)
