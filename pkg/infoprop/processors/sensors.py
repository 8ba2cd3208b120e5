import logging
from collections.abc import Sequence

import numpy as np

from infoprop.engine.curves import CumulativeCurve

logger = logging.getLogger(__name__)

EXPORT_DECIMALS = 3


def record_sensor(curve: CumulativeCurve, edges: Sequence[float]) -> list[float]:
    """Vehicles passing the sensor in each bin: curve increments between bin edges"""
    values = curve.values_at(np.asarray(edges, dtype=float))
    return np.diff(values).tolist()


def rounded(counts: Sequence[float]) -> list[float]:
    return [round(c, EXPORT_DECIMALS) for c in counts]
