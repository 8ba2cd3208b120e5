"""Scenario generators for demand scaling, demand perturbation and incidents.

Each generated scenario is a validated copy of the base scenario; results of a
batch are collected into level x statistic tables.
"""

import logging
from collections.abc import Callable, Sequence
from typing import Annotated, Literal

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field

from infoprop.config import settings
from infoprop.engine.simulator import run
from infoprop.exceptions import DomainError
from infoprop.loaders.scenario_loader import parse_scenario
from infoprop.models.output import SimulationOutput
from infoprop.models.scenario import Scenario
from infoprop.processors.metrics import STATISTICS, metrics_table

logger = logging.getLogger(__name__)

SCALE_LEVELS = (0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0)
PERTURBATION_LEVELS = (0.05, 0.1, 0.15, 0.2)
BLOCKED_LANE_LEVELS = (1, 2, 3, 4, 5)


class DemandScale(BaseModel):
    kind: Literal["scale"] = "scale"
    theta: float = Field(..., gt=0, le=1)

    @property
    def level(self) -> float:
        return self.theta


class DemandPerturb(BaseModel):
    kind: Literal["perturb"] = "perturb"
    alpha: float = Field(..., ge=0)
    repetitions: int = Field(default=20, ge=1)
    seed: int = 0

    @property
    def level(self) -> float:
        return self.alpha


class Incident(BaseModel):
    kind: Literal["incident"] = "incident"
    link: str
    blocked_lanes: int = Field(..., ge=0)
    start: float
    duration: float = Field(..., gt=0)

    @property
    def level(self) -> int:
        return self.blocked_lanes


ExperimentSpec = Annotated[DemandScale | DemandPerturb | Incident, Field(discriminator="kind")]

Reference = Callable[[Scenario], SimulationOutput] | Sequence[SimulationOutput] | None

RunHook = Callable[[Scenario, SimulationOutput], None]


def _scaled_demands(data: dict, factor: Callable[[str, int], float]) -> None:
    for demand in data["demands"]:
        demand["series"] = [
            [t, q * factor(demand["od"], i)] for i, (t, q) in enumerate(demand["series"])
        ]


def perturbation_factors(
    base: Scenario, alpha: float, repetitions: int, seed: int
) -> np.ndarray:
    """Factors 1 + 2(R - 0.5)alpha, one row per repetition, one column per demand entry.

    Entries are ordered by OD id then by series position.
    """
    entries = sum(len(d.series) for d in base.demands)
    rng = np.random.default_rng(seed)
    return 1.0 + 2.0 * (rng.random((repetitions, entries)) - 0.5) * alpha


def _entry_index(base: Scenario) -> dict[tuple[str, int], int]:
    index = {}
    for demand in sorted(base.demands, key=lambda d: d.od):
        for i in range(len(demand.series)):
            index[(demand.od, i)] = len(index)
    return index


def generate_experiment(
    base: Scenario, spec: DemandScale | DemandPerturb | Incident
) -> list[Scenario]:
    """Scenarios realising one experiment level"""
    if isinstance(spec, DemandScale):
        data = base.model_dump(mode="json")
        data["name"] = f"{base.name}-scale-{spec.theta:g}"
        _scaled_demands(data, lambda od, i: spec.theta)
        return [parse_scenario(data, data["name"])]

    if isinstance(spec, DemandPerturb):
        factors = perturbation_factors(base, spec.alpha, spec.repetitions, spec.seed)
        index = _entry_index(base)
        scenarios = []
        for r in range(spec.repetitions):
            data = base.model_dump(mode="json")
            data["name"] = f"{base.name}-perturb-{spec.alpha:g}-{r:02d}"
            _scaled_demands(data, lambda od, i, row=factors[r]: row[index[(od, i)]])
            scenarios.append(parse_scenario(data, data["name"]))
        return scenarios

    data = base.model_dump(mode="json")
    data["name"] = f"{base.name}-incident-{spec.link}-{spec.blocked_lanes}"
    data["incidents"].append(
        {
            "link": spec.link,
            "start": spec.start,
            "duration": spec.duration,
            "blocked_lanes": spec.blocked_lanes,
        }
    )
    return [parse_scenario(data, data["name"])]


def design_matrix(
    link: str,
    start: float,
    duration: float,
    repetitions: int | None = None,
    seed: int | None = None,
) -> list[DemandScale | DemandPerturb | Incident]:
    """Eight scale levels, four perturbation levels and one to five blocked lanes"""
    repetitions = repetitions or settings.experiment.repetitions
    seed = settings.experiment.seed if seed is None else seed
    return [
        *(DemandScale(theta=theta) for theta in SCALE_LEVELS),
        *(DemandPerturb(alpha=a, repetitions=repetitions, seed=seed) for a in PERTURBATION_LEVELS),
        *(
            Incident(link=link, blocked_lanes=n, start=start, duration=duration)
            for n in BLOCKED_LANE_LEVELS
        ),
    ]


def run_batch(scenarios: Sequence[Scenario], workers: int | None = None) -> list[SimulationOutput]:
    workers = workers or settings.workers
    logger.info(f"Running {len(scenarios)} scenarios on {workers} workers")
    return Parallel(n_jobs=workers)(delayed(run)(s) for s in scenarios)


def _references(
    scenarios: Sequence[Scenario], base: Scenario, reference: Reference
) -> list[SimulationOutput]:
    if reference is None:
        baseline = run(base)
        return [baseline] * len(scenarios)
    if callable(reference):
        return [reference(s) for s in scenarios]
    if len(reference) != len(scenarios):
        raise DomainError(f"{len(reference)} reference outputs for {len(scenarios)} scenarios")
    return list(reference)


def run_experiment(
    base: Scenario,
    spec: DemandScale | DemandPerturb | Incident,
    reference: Reference = None,
    workers: int | None = None,
    on_run: RunHook | None = None,
) -> pd.DataFrame:
    """One row of a result table: statistics per channel, averaged over repetitions.

    Without a reference the unmodified base run is used. ``on_run`` sees every
    generated scenario with its output, e.g. to write them to disk.
    """
    scenarios = generate_experiment(base, spec)
    simulated = run_batch(scenarios, workers)
    if on_run is not None:
        for scenario, output in zip(scenarios, simulated, strict=True):
            on_run(scenario, output)
    references = _references(scenarios, base, reference)
    tables = [metrics_table(ref, sim) for ref, sim in zip(references, simulated, strict=True)]
    mean = pd.concat(tables).astype(float).groupby(level=0).mean().reindex(STATISTICS)
    columns = pd.MultiIndex.from_product([mean.columns, STATISTICS], names=["channel", "statistic"])
    values = [mean.at[stat, channel] for channel, stat in columns]
    return pd.DataFrame([values], columns=columns, index=pd.Index([spec.level], name=spec.kind))


def run_design(
    base: Scenario,
    specs: Sequence[DemandScale | DemandPerturb | Incident],
    reference: Reference = None,
    workers: int | None = None,
    on_run: RunHook | None = None,
) -> dict[str, pd.DataFrame]:
    """Result tables keyed by experiment kind; ``reference`` must be None or a callable here"""
    if reference is not None and not callable(reference):
        raise DomainError("a design run needs a reference callable")
    tables: dict[str, list[pd.DataFrame]] = {}
    for spec in specs:
        row = run_experiment(base, spec, reference, workers, on_run)
        tables.setdefault(spec.kind, []).append(row)
    return {kind: pd.concat(rows) for kind, rows in tables.items()}
