"""Calibration problem: parameter vector, reference data and the weighted objective."""

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from infoprop.config import CalibrationConfig, settings
from infoprop.engine.simulator import run
from infoprop.exceptions import ConfigurationError, ScenarioError
from infoprop.loaders.scenario_loader import load_scenario, parse_scenario
from infoprop.models.output import SimulationOutput
from infoprop.models.scenario import Scenario

logger = logging.getLogger(__name__)

FD_FIELDS = ("max_flow", "critical_density", "jam_density")


class ParameterSpec(BaseModel):
    """One calibrated quantity.

    Targets are ``fd:<class>:<field>``, ``exit_capacity:<link>`` or
    ``priority:<node>:<upstream>:<downstream>``.
    """

    name: str
    target: str
    lower: float
    upper: float
    initial: float = Field(..., gt=0)

    @field_validator("target")
    @classmethod
    def known_target(cls, v: str) -> str:
        parts = v.split(":")
        valid = (
            (parts[0] == "fd" and len(parts) == 3 and parts[2] in FD_FIELDS)
            or (parts[0] == "exit_capacity" and len(parts) == 2)
            or (parts[0] == "priority" and len(parts) == 4)
        )
        if not valid:
            raise ValueError(f"unknown parameter target {v!r}")
        return v

    @model_validator(mode="after")
    def initial_within_bounds(self) -> "ParameterSpec":
        if not self.lower <= self.initial <= self.upper:
            raise ValueError(
                f"{self.name}: initial {self.initial} outside [{self.lower}, {self.upper}]"
            )
        return self


class CalibrationProblemFile(BaseModel):
    scenario: str
    parameters: list[ParameterSpec] = Field(..., min_length=1)
    initial_weight: float | None = Field(default=None, ge=0)
    max_outer_iterations: int = Field(default=10, ge=1)


def apply_parameters(
    scenario: Scenario, parameters: Sequence[ParameterSpec], theta: Sequence[float]
) -> Scenario:
    """A new validated scenario with theta substituted; priorities renormalised per column"""
    if len(theta) != len(parameters):
        raise ConfigurationError(f"theta has {len(theta)} values for {len(parameters)} parameters")
    data = scenario.model_dump(mode="json")
    touched_nodes: set[str] = set()
    for spec, value in zip(parameters, theta, strict=True):
        parts = spec.target.split(":")
        value = float(value)
        if parts[0] == "fd":
            fd_class = data["link_classes"].get(parts[1])
            if fd_class is None:
                raise ConfigurationError(f"{spec.name}: no link class {parts[1]!r}")
            fd_class[parts[2]] = value
        elif parts[0] == "exit_capacity":
            link = next((lk for lk in data["links"] if lk["id"] == parts[1]), None)
            if link is None:
                raise ConfigurationError(f"{spec.name}: no link {parts[1]!r}")
            link["exit_capacity"] = value
        else:
            node = next((n for n in data["nodes"] if n["id"] == parts[1]), None)
            if node is None or not node.get("priorities"):
                raise ConfigurationError(
                    f"{spec.name}: node {parts[1]!r} has no priorities to calibrate"
                )
            node["priorities"].setdefault(parts[2], {})[parts[3]] = value
            touched_nodes.add(parts[1])
    for node in data["nodes"]:
        if node["id"] in touched_nodes:
            node["priorities"] = _normalise_columns(node["priorities"])
    return parse_scenario(data, f"{scenario.name} with theta")


def _normalise_columns(priorities: dict[str, dict[str, float]]) -> dict[str, dict[str, float]]:
    totals: dict[str, float] = {}
    for row in priorities.values():
        for down, w in row.items():
            totals[down] = totals.get(down, 0.0) + w
    return {
        up: {down: w / totals[down] for down, w in row.items()} for up, row in priorities.items()
    }


@dataclass
class ChannelErrors:
    sse_counts: float
    sse_times: float
    n_counts: int
    n_times: int

    @property
    def mse_counts(self) -> float:
        return self.sse_counts / self.n_counts if self.n_counts else 0.0

    @property
    def mse_times(self) -> float:
        return self.sse_times / self.n_times if self.n_times else 0.0

    def objective(self, weight: float) -> float:
        return self.sse_counts + weight * self.sse_times


def channel_errors(reference: SimulationOutput, simulated: SimulationOutput) -> ChannelErrors:
    """Squared deviations of sensor counts and OD times, bin by bin.

    OD bins undefined in either output are left out.
    """
    sse_y, n_y = 0.0, 0
    for sensor, ref in reference.sensor_counts.items():
        sim = simulated.sensor_counts[sensor]
        diff = np.asarray(ref) - np.asarray(sim)
        sse_y += float(np.sum(diff**2))
        n_y += diff.size
    sse_t, n_t = 0.0, 0
    for od, ref in reference.od_travel_times.items():
        for a, b in zip(ref, simulated.od_travel_times[od], strict=True):
            if a is not None and b is not None:
                sse_t += (a - b) ** 2
                n_t += 1
    return ChannelErrors(sse_y, sse_t, n_y, n_t)


@dataclass
class CalibrationProblem:
    scenario: Scenario
    parameters: list[ParameterSpec]
    reference: SimulationOutput
    initial_weight: float | None = None
    max_outer_iterations: int = 10

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def initial(self) -> np.ndarray:
        return np.array([p.initial for p in self.parameters])

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return [(p.lower, p.upper) for p in self.parameters]

    def scenario_at(self, theta: Sequence[float]) -> Scenario:
        return apply_parameters(self.scenario, self.parameters, theta)

    def simulate(self, theta: Sequence[float]) -> SimulationOutput:
        return run(self.scenario_at(theta))

    def start_weight(self, config: CalibrationConfig | None = None) -> float:
        if self.initial_weight is not None:
            return self.initial_weight
        return (config or settings.calibration).initial_weight

    def errors(self, theta: Sequence[float]) -> ChannelErrors:
        return channel_errors(self.reference, self.simulate(theta))

    def try_errors(self, theta: Sequence[float]) -> ChannelErrors | None:
        """Channel errors, or None when the simulation at theta fails"""
        try:
            return self.errors(theta)
        except Exception as e:
            logger.error(f"Simulation failed at theta={list(theta)}: {e}", exc_info=True)
            return None

    def objective(
        self, theta: Sequence[float], weight: float, config: CalibrationConfig | None = None
    ) -> float:
        """Weighted squared deviation; failed simulations score the failure penalty"""
        config = config or settings.calibration
        errors = self.try_errors(theta)
        if errors is None:
            return config.failure_penalty
        value = errors.objective(weight)
        logger.debug(f"objective({list(np.round(theta, 6))}, w={weight:.6g}) = {value:.6g}")
        return value


def objective(
    problem: CalibrationProblem, theta: Sequence[float], weight: float | None = None
) -> float:
    return problem.objective(theta, problem.start_weight() if weight is None else weight)


def load_problem(path: str | Path, reference: SimulationOutput) -> CalibrationProblem:
    path = Path(path)
    try:
        spec = CalibrationProblemFile.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"{path}: cannot read calibration problem ({e})") from e
    except ValidationError as e:
        raise ScenarioError(f"{path}: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}") from e
    scenario_path = Path(spec.scenario)
    if not scenario_path.is_absolute():
        scenario_path = path.parent / scenario_path
    return CalibrationProblem(
        scenario=load_scenario(scenario_path),
        parameters=spec.parameters,
        reference=reference,
        initial_weight=spec.initial_weight,
        max_outer_iterations=spec.max_outer_iterations,
    )
