"""Goodness-of-fit statistics between reference and simulated series."""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd

from infoprop.exceptions import DomainError, UndefinedFitError
from infoprop.models.output import SimulationOutput

logger = logging.getLogger(__name__)

STATISTICS = ["RMSE", "RMSPE", "U", "U_M", "U_S", "U_C"]
Channel = Literal["counts", "times", "both"]


@dataclass(frozen=True)
class PairedSeries:
    reference: np.ndarray
    simulated: np.ndarray
    label: str = ""

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=float)
        sim = np.asarray(self.simulated, dtype=float)
        if ref.ndim != 1 or ref.shape != sim.shape:
            raise DomainError(f"{self.label}: series shapes {ref.shape} and {sim.shape} differ")
        if ref.size == 0:
            raise DomainError(f"{self.label}: empty series")
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "simulated", sim)

    @classmethod
    def of(cls, reference, simulated, label: str = "") -> "PairedSeries":
        return cls(np.asarray(reference, dtype=float), np.asarray(simulated, dtype=float), label)


@dataclass(frozen=True)
class TheilDecomposition:
    """Theil's U with its bias, variance and covariance proportions.

    The proportions are None when the series are identical.
    """

    U: float
    U_M: float | None
    U_S: float | None
    U_C: float | None


def rmse(s: PairedSeries) -> float:
    return float(np.sqrt(np.mean((s.simulated - s.reference) ** 2)))


def rmspe(s: PairedSeries) -> float:
    zeros = np.flatnonzero(s.reference == 0)
    if zeros.size:
        raise DomainError(f"{s.label}: RMSPE undefined, reference is zero at index {int(zeros[0])}")
    return float(np.sqrt(np.mean(((s.simulated - s.reference) / s.reference) ** 2)))


def theil(s: PairedSeries) -> TheilDecomposition:
    ref, sim = s.reference, s.simulated
    mse = float(np.mean((sim - ref) ** 2))
    denominator = float(np.sqrt(np.mean(sim**2)) + np.sqrt(np.mean(ref**2)))
    if denominator == 0:
        raise UndefinedFitError(f"{s.label}: Theil's U undefined for two all-zero series")
    u = float(np.sqrt(mse)) / denominator
    if mse == 0:
        return TheilDecomposition(u, None, None, None)

    # population moments make the three proportions sum to one
    sd_sim, sd_ref = float(np.std(sim)), float(np.std(ref))
    cov = float(np.mean((sim - sim.mean()) * (ref - ref.mean())))
    u_m = float((sim.mean() - ref.mean()) ** 2) / mse
    u_s = (sd_sim - sd_ref) ** 2 / mse
    u_c = 2.0 * (sd_sim * sd_ref - cov) / mse
    return TheilDecomposition(u, u_m, u_s, u_c)


def statistics(s: PairedSeries) -> dict[str, float | None]:
    row: dict[str, float | None] = {"RMSE": rmse(s)}
    try:
        row["RMSPE"] = rmspe(s)
    except DomainError as e:
        logger.warning(str(e))
        row["RMSPE"] = None
    try:
        t = theil(s)
        row.update({"U": t.U, "U_M": t.U_M, "U_S": t.U_S, "U_C": t.U_C})
    except UndefinedFitError as e:
        logger.warning(str(e))
        row.update({"U": None, "U_M": None, "U_S": None, "U_C": None})
    return row


def count_series(reference: SimulationOutput, simulated: SimulationOutput) -> PairedSeries:
    ref, sim = [], []
    for sensor in sorted(reference.sensor_counts):
        if sensor not in simulated.sensor_counts:
            raise DomainError(f"Sensor {sensor} missing from the simulated output")
        ref += reference.sensor_counts[sensor]
        sim += simulated.sensor_counts[sensor]
    return PairedSeries.of(ref, sim, "counts")


def time_series(reference: SimulationOutput, simulated: SimulationOutput) -> PairedSeries:
    """OD travel times over bins defined in both outputs"""
    ref, sim = [], []
    for od in sorted(reference.od_travel_times):
        if od not in simulated.od_travel_times:
            raise DomainError(f"OD {od} missing from the simulated output")
        for a, b in zip(reference.od_travel_times[od], simulated.od_travel_times[od], strict=True):
            if a is not None and b is not None:
                ref.append(a)
                sim.append(b)
    return PairedSeries.of(ref, sim, "times")


def metrics_table(
    reference: SimulationOutput, simulated: SimulationOutput, channel: Channel = "both"
) -> pd.DataFrame:
    """Statistic x series table"""
    columns = {}
    if channel in ("counts", "both"):
        columns["counts"] = statistics(count_series(reference, simulated))
    if channel in ("times", "both"):
        columns["times"] = statistics(time_series(reference, simulated))
    return pd.DataFrame(columns).reindex(STATISTICS)
