"""Piecewise-linear cumulative vehicle curves."""

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from infoprop.exceptions import InsufficientHistoryError, InvariantViolation

COUNT_TOLERANCE = 1e-9


@dataclass
class CumulativeCurve:
    """Vehicle count through a point; knots mark every slope change.

    The curve extends with the current slope beyond the last knot until it is
    closed at the end of a run. Queries past the closing time are errors.
    """

    times: list[float] = field(default_factory=list)
    counts: list[float] = field(default_factory=list)
    slope: float = 0.0
    closed_at: float | None = None

    @classmethod
    def start(cls, t0: float, slope: float = 0.0) -> "CumulativeCurve":
        return cls(times=[t0], counts=[0.0], slope=slope)

    @property
    def t0(self) -> float:
        return self.times[0]

    def set_slope(self, t: float, slope: float) -> None:
        if slope < -COUNT_TOLERANCE:
            raise InvariantViolation(f"Negative flow {slope} on a cumulative curve")
        if t < self.times[-1]:
            raise InvariantViolation(f"Curve update at {t} precedes last knot {self.times[-1]}")
        if t > self.times[-1]:
            self.counts.append(self.counts[-1] + self.slope * (t - self.times[-1]))
            self.times.append(t)
        self.slope = max(slope, 0.0)

    def close(self, t: float) -> None:
        self.set_slope(t, self.slope)
        self.closed_at = t

    def value_at(self, t: float) -> float:
        if t <= self.times[0]:
            return 0.0
        if t >= self.times[-1]:
            if self.closed_at is not None and t > self.closed_at:
                raise InsufficientHistoryError(f"t={t} beyond recorded horizon {self.closed_at}")
            return self.counts[-1] + self.slope * (t - self.times[-1])
        i = bisect_right(self.times, t)
        ta, tb = self.times[i - 1], self.times[i]
        ca, cb = self.counts[i - 1], self.counts[i]
        return ca + (cb - ca) * (t - ta) / (tb - ta)

    def values_at(self, times: np.ndarray) -> np.ndarray:
        """Vectorised value_at for times inside the recorded range"""
        knots_t = np.asarray(self.times)
        knots_n = np.asarray(self.counts)
        end = self.closed_at if self.closed_at is not None else self.times[-1]
        if self.closed_at is None:
            knots_t = np.append(knots_t, end + 1.0)
            knots_n = np.append(knots_n, self.counts[-1] + self.slope)
        return np.interp(times, knots_t, knots_n, left=0.0)

    def time_at(self, n: float) -> float:
        """Earliest time at which the count reaches n"""
        if n <= COUNT_TOLERANCE:
            return self.times[0]
        last = self.counts[-1]
        if n > last + COUNT_TOLERANCE:
            if self.closed_at is None and self.slope > 0:
                return self.times[-1] + (n - last) / self.slope
            raise InsufficientHistoryError(
                f"Vehicle {n:.6f} never passed (curve ends at {last:.6f})"
            )
        i = bisect_left(self.counts, n - COUNT_TOLERANCE)
        if i == 0:
            return self.times[0]
        ta, tb = self.times[i - 1], self.times[i]
        ca, cb = self.counts[i - 1], self.counts[i]
        if cb - ca <= 0:
            return tb
        return ta + (min(n, cb) - ca) * (tb - ta) / (cb - ca)

    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.counts, strict=True))
