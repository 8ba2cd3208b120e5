"""Flow-density relationships and the traffic states that live on them.

A fundamental diagram is stored as an ordered list of (density, flow) knots
starting at (0, 0) and ending at (jam_density, 0). The triangular form used for
calibration is the three-knot special case. Every speed, capacity and wave fan
used by the engines is derived here.
"""

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum

from infoprop.exceptions import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

DENSITY_TOLERANCE = 1e-9
FLOW_TOLERANCE = 1e-9


class FDShape(str, Enum):
    TRIANGULAR = "triangular"
    PIECEWISE_LINEAR = "piecewise_linear"


@dataclass(frozen=True, slots=True)
class FlowRegime:
    """A (density, flow) traffic state; bottleneck-constrained states are flagged"""

    density: float
    flow: float
    constrained: bool = False

    def same_as(self, other: "FlowRegime", tol: float = DENSITY_TOLERANCE) -> bool:
        return abs(self.density - other.density) <= tol


def _cross(o: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class FundamentalDiagram:
    """Piecewise-linear flow-density relation with a non-increasing space-mean speed"""

    shape: FDShape
    max_flow: float
    critical_density: float
    jam_density: float
    breakpoints: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.shape == FDShape.TRIANGULAR:
            if not 0 < self.critical_density < self.jam_density:
                raise ConfigurationError(
                    f"Triangular FD needs 0 < critical_density < jam_density, got "
                    f"{self.critical_density} / {self.jam_density}"
                )
            if self.max_flow <= 0:
                raise ConfigurationError(f"max_flow must be positive, got {self.max_flow}")
            knots = (
                (0.0, 0.0),
                (float(self.critical_density), float(self.max_flow)),
                (float(self.jam_density), 0.0),
            )
        else:
            knots = tuple((float(k), float(f)) for k, f in self.breakpoints)
            self._validate_knots(knots)
            peak = max(range(len(knots)), key=lambda i: (knots[i][1], -i))
            object.__setattr__(self, "max_flow", knots[peak][1])
            object.__setattr__(self, "critical_density", knots[peak][0])
            object.__setattr__(self, "jam_density", knots[-1][0])
        object.__setattr__(self, "breakpoints", knots)
        object.__setattr__(self, "_densities", tuple(k for k, _ in knots))

    @classmethod
    def triangular(
        cls, max_flow: float, critical_density: float, jam_density: float
    ) -> "FundamentalDiagram":
        return cls(FDShape.TRIANGULAR, max_flow, critical_density, jam_density)

    @classmethod
    def piecewise_linear(
        cls, breakpoints: list[tuple[float, float]] | tuple[tuple[float, float], ...]
    ) -> "FundamentalDiagram":
        return cls(FDShape.PIECEWISE_LINEAR, 0.0, 0.0, 0.0, tuple(breakpoints))

    @staticmethod
    def _validate_knots(knots: tuple[tuple[float, float], ...]) -> None:
        if len(knots) < 3:
            raise ConfigurationError("A piecewise-linear FD needs at least three breakpoints")
        if knots[0] != (0.0, 0.0) or knots[-1][1] != 0.0:
            raise ConfigurationError("FD must start at (0, 0) and end with zero flow at jam")
        densities = [k for k, _ in knots]
        if any(b <= a for a, b in zip(densities, densities[1:], strict=False)):
            raise ConfigurationError("FD breakpoint densities must be strictly increasing")
        if any(f < 0 for _, f in knots):
            raise ConfigurationError("FD flows must be non-negative")
        if knots[1][1] <= 0:
            raise ConfigurationError("FD must have a positive free-flow branch")

        # Space-mean speed f/k must not increase with density
        speeds = [f / k for k, f in knots[1:]]
        if any(b > a + 1e-12 for a, b in zip(speeds, speeds[1:], strict=False)):
            raise ConfigurationError("Space-mean speed must be non-increasing in density")

        # Unimodal: rising to the capacity knot, falling after it
        flows = [f for _, f in knots]
        peak = flows.index(max(flows))
        if any(b < a for a, b in zip(flows[: peak + 1], flows[1 : peak + 1], strict=False)):
            raise ConfigurationError("FD flow must be non-decreasing up to capacity")
        if any(b > a for a, b in zip(flows[peak:], flows[peak + 1 :], strict=False)):
            raise ConfigurationError("FD flow must be non-increasing beyond capacity")

    # ------------------------------------------------------------------ basics

    @property
    def free_speed(self) -> float:
        k1, f1 = self.breakpoints[1]
        return f1 / k1

    @property
    def congestion_wave_speed(self) -> float:
        """Magnitude of the steepest congested-branch slope"""
        slopes = [
            (fb - fa) / (kb - ka)
            for (ka, fa), (kb, fb) in zip(self.breakpoints, self.breakpoints[1:], strict=False)
        ]
        return max(0.0, -min(slopes))

    @property
    def max_wave_speed(self) -> float:
        slopes = [
            abs((fb - fa) / (kb - ka))
            for (ka, fa), (kb, fb) in zip(self.breakpoints, self.breakpoints[1:], strict=False)
        ]
        return max(slopes)

    def scaled(self, lanes: float) -> "FundamentalDiagram":
        """Whole-link diagram from a per-lane one; densities and flows scale, speeds do not"""
        if lanes <= 0:
            raise ConfigurationError(f"Lane count must be positive, got {lanes}")
        if lanes == 1:
            return self
        if self.shape == FDShape.TRIANGULAR:
            return FundamentalDiagram.triangular(
                self.max_flow * lanes, self.critical_density * lanes, self.jam_density * lanes
            )
        return FundamentalDiagram.piecewise_linear(
            [(k * lanes, f * lanes) for k, f in self.breakpoints]
        )

    def _check(self, k: float) -> float:
        if k < -DENSITY_TOLERANCE or k > self.jam_density + DENSITY_TOLERANCE or math.isnan(k):
            raise DomainError(f"Density {k} outside [0, {self.jam_density}]")
        return min(max(k, 0.0), self.jam_density)

    def flow_at(self, k: float) -> float:
        k = self._check(k)
        i = min(bisect_right(self._densities, k), len(self.breakpoints) - 1)
        (ka, fa), (kb, fb) = self.breakpoints[i - 1], self.breakpoints[i]
        return fa + (fb - fa) * (k - ka) / (kb - ka)

    def speed_at(self, k: float) -> float:
        k = self._check(k)
        if k <= DENSITY_TOLERANCE:
            return self.free_speed
        return self.flow_at(k) / k

    def inflow_capacity(self, k: float) -> float:
        """Receiving capacity of a link whose upstream end sits at density k"""
        k = self._check(k)
        if k <= self.critical_density + DENSITY_TOLERANCE:
            return self.max_flow
        return self.flow_at(k)

    def sending_flow(self, k: float) -> float:
        """Flow a link end at density k can discharge"""
        k = self._check(k)
        if k <= self.critical_density + DENSITY_TOLERANCE:
            return self.flow_at(k)
        return self.max_flow

    def is_congested(self, k: float) -> bool:
        return k > self.critical_density + DENSITY_TOLERANCE

    def regime(self, k: float) -> FlowRegime:
        k = self._check(k)
        return FlowRegime(k, self.flow_at(k))

    def capacity_regime(self) -> FlowRegime:
        return FlowRegime(self.critical_density, self.max_flow)

    def free_density(self, q: float) -> float:
        """Density on the free-flow branch carrying flow q"""
        return self._invert(q, congested=False)

    def congested_density(self, q: float) -> float:
        """Density on the congested branch carrying flow q"""
        return self._invert(q, congested=True)

    def _invert(self, q: float, congested: bool) -> float:
        if q < -FLOW_TOLERANCE or q > self.max_flow + FLOW_TOLERANCE:
            raise DomainError(f"Flow {q} outside [0, {self.max_flow}]")
        q = min(max(q, 0.0), self.max_flow)
        if q >= self.max_flow - FLOW_TOLERANCE:
            if congested:
                # last knot at capacity when the top is a plateau
                return max(k for k, f in self.breakpoints if f >= self.max_flow - FLOW_TOLERANCE)
            return self.critical_density
        pairs = list(zip(self.breakpoints, self.breakpoints[1:], strict=False))
        if congested:
            pairs = [p for p in pairs if p[0][0] >= self.critical_density]
        else:
            pairs = [p for p in pairs if p[1][0] <= self.critical_density]
        for (ka, fa), (kb, fb) in pairs:
            lo, hi = min(fa, fb), max(fa, fb)
            if lo - FLOW_TOLERANCE <= q <= hi + FLOW_TOLERANCE and fb != fa:
                return ka + (q - fa) * (kb - ka) / (fb - fa)
        return self.jam_density if congested else 0.0

    # ------------------------------------------------------------------ waves

    def riemann_fan(self, upstream: FlowRegime, downstream: FlowRegime) -> list[FlowRegime]:
        """States of the exact entropy solution, ordered from upstream to downstream.

        Consecutive states are separated by one discontinuity each. For a
        piecewise-linear flux the solution only uses vertices of the lower
        convex envelope (density rising downstream) or upper concave envelope
        (density falling downstream) between the two densities.
        """
        if upstream.same_as(downstream):
            return [upstream]
        kl, kr = upstream.density, downstream.density
        lo, hi = (upstream, downstream) if kl < kr else (downstream, upstream)
        points = [(lo.density, lo.flow)]
        points += [
            (k, f)
            for k, f in self.breakpoints
            if lo.density + DENSITY_TOLERANCE < k < hi.density - DENSITY_TOLERANCE
        ]
        points.append((hi.density, hi.flow))

        hull: list[tuple[float, float]] = []
        for p in points:
            if kl < kr:
                while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) <= 0:
                    hull.pop()
            else:
                while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) >= 0:
                    hull.pop()
            hull.append(p)

        interior = [FlowRegime(k, f) for k, f in hull[1:-1]]
        if kl > kr:
            interior.reverse()
        return [upstream, *interior, downstream]

    def line_roots(self, intercept: float, slope: float) -> list[float]:
        """Densities where the FD meets the line q = intercept + slope * k"""
        roots: list[float] = []
        for (ka, fa), (kb, fb) in zip(self.breakpoints, self.breakpoints[1:], strict=False):
            ga = fa - intercept - slope * ka
            gb = fb - intercept - slope * kb
            if abs(ga) <= FLOW_TOLERANCE:
                roots.append(ka)
            if ga * gb < 0:
                roots.append(ka + ga * (kb - ka) / (ga - gb))
        ka, fa = self.breakpoints[-1]
        if abs(fa - intercept - slope * ka) <= FLOW_TOLERANCE:
            roots.append(ka)
        roots.sort()
        unique: list[float] = []
        for r in roots:
            if not unique or r - unique[-1] > DENSITY_TOLERANCE:
                unique.append(r)
        return unique


def flow_at(fd: FundamentalDiagram, k: float) -> float:
    return fd.flow_at(k)


def speed_at(fd: FundamentalDiagram, k: float) -> float:
    return fd.speed_at(k)


def inflow_capacity(fd: FundamentalDiagram, k: float) -> float:
    return fd.inflow_capacity(k)
