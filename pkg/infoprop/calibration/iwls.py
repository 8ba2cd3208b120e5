"""Iteratively re-weighted least squares around a derivative-free inner search."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from infoprop.calibration.problem import CalibrationProblem
from infoprop.config import CalibrationConfig, settings

logger = logging.getLogger(__name__)


@dataclass
class CalibrationResult:
    theta: dict[str, float]
    objective_history: list[float] = field(default_factory=list)
    weight_history: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def outer_iterations(self) -> int:
        return len(self.objective_history)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "objective_history": self.objective_history,
            "weight_history": self.weight_history,
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
        }


def update_weight(mse_counts: float, mse_times: float) -> float | None:
    """Ratio of the channel mean squared errors; None when travel times fit exactly"""
    if mse_times <= 0:
        return None
    return mse_counts / mse_times


def relative_change(old: float, new: float) -> float:
    if old == 0:
        return 0.0 if new == 0 else math.inf
    return abs(new - old) / old


class _MonitoredObjective:
    """Objective at a fixed weight over parameters scaled by their initial values"""

    def __init__(self, problem: CalibrationProblem, weight: float, config: CalibrationConfig):
        self.problem = problem
        self.weight = weight
        self.config = config
        self.scale = problem.initial
        self.cache: dict[tuple[float, ...], float] = {}
        self.best = math.inf

    def __call__(self, z: np.ndarray) -> float:
        key = tuple(np.round(z, 12))
        if key not in self.cache:
            self.cache[key] = self.problem.objective(z * self.scale, self.weight, self.config)
        return self.cache[key]

    def callback(self, z: np.ndarray) -> None:
        value = self(z)
        if value > self.best:
            logger.warning(f"Inner search best objective rose from {self.best:.6g} to {value:.6g}")
        self.best = min(self.best, value)


def calibrate(
    problem: CalibrationProblem, config: CalibrationConfig | None = None
) -> CalibrationResult:
    """Alternate Nelder-Mead at a fixed weight with the weight update until the weight settles"""
    config = config or settings.calibration
    max_outer = min(problem.max_outer_iterations, config.max_outer_iterations)
    scale = problem.initial
    bounds = [(lo / s, hi / s) for (lo, hi), s in zip(problem.bounds, scale, strict=True)]
    z = np.ones_like(scale)
    weight = problem.start_weight(config)
    result = CalibrationResult(theta=dict(zip(problem.names, scale.tolist(), strict=True)))

    for k in range(max_outer):
        f = _MonitoredObjective(problem, weight, config)
        res = minimize(
            f,
            z,
            method="Nelder-Mead",
            bounds=bounds,
            callback=f.callback,
            options={"maxfev": config.max_evaluations, "xatol": 1e-6, "fatol": 1e-9},
        )
        if not res.success:
            logger.warning(f"Outer iteration {k}: inner search stopped early ({res.message})")
        z = np.asarray(res.x)
        theta = z * scale
        result.theta = dict(zip(problem.names, theta.tolist(), strict=True))
        result.objective_history.append(float(res.fun))
        result.weight_history.append(weight)

        errors = problem.try_errors(theta)
        if errors is None:
            logger.warning(f"Outer iteration {k}: no simulation at the inner optimum, stopping")
            break
        new_weight = update_weight(errors.mse_counts, errors.mse_times)
        logger.info(
            f"Outer iteration {k}: objective={res.fun:.6g} w={weight:.6g} "
            f"mse_counts={errors.mse_counts:.6g} mse_times={errors.mse_times:.6g}"
        )
        if new_weight is None:
            logger.info("Travel times reproduced exactly, weight update skipped")
            result.converged = True
            break
        change = relative_change(weight, new_weight)
        weight = new_weight
        if change < config.weight_tolerance:
            result.converged = True
            break

    if not result.converged:
        logger.warning(f"Calibration stopped after {result.outer_iterations} outer iterations")
    return result
