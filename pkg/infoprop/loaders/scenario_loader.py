"""Scenario file ingestion and emission."""

import json
import logging
from pathlib import Path

from pydantic import ValidationError

from infoprop.exceptions import ScenarioError
from infoprop.models.scenario import Scenario

logger = logging.getLogger(__name__)


def _describe(error: ValidationError, source: str) -> str:
    parts = []
    for err in error.errors():
        location = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{source}: {location}: {err['msg']}")
    return "; ".join(parts)


def parse_scenario(data: dict, source: str = "<scenario>", dt: float | None = None) -> Scenario:
    """Validate a decoded scenario document; ``dt`` overrides the file's step"""
    if dt is not None:
        data = {**data, "dt": dt}
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise ScenarioError(_describe(e, source)) from e


def load_scenario(path: str | Path, dt: float | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"{path}: cannot read scenario ({e.strerror})") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    scenario = parse_scenario(data, str(path), dt)
    logger.info(
        f"Loaded scenario {scenario.name} from {path}: {len(scenario.links)} links, "
        f"{len(scenario.nodes)} nodes, {len(scenario.ods)} ODs"
    )
    return scenario


def save_scenario(scenario: Scenario, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scenario.model_dump_json(indent=2), encoding="utf-8")
    logger.debug(f"Saved scenario {scenario.name} to {path}")
    return path
