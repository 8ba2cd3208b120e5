from pydantic import BaseModel, Field


class RunSummary(BaseModel):
    """Run totals; deliberately free of wall-clock data so files compare byte for byte"""

    mode: str
    horizon: float
    events: int = Field(..., description="Logged event lines")
    packages: int = Field(..., description="Trajectory segments recorded")
    node_updates: int
    vehicles_entered: float
    vehicles_exited: float
    vehicles_on_network: float
    max_conservation_error: float


class SimulationOutput(BaseModel):
    scenario: str
    bin_edges: list[float]
    events: list[str]
    sensor_counts: dict[str, list[float]]
    od_travel_times: dict[str, list[float | None]]
    boundary_history: dict[str, dict[str, list[tuple[float, float, float]]]]
    cumulative_curves: dict[str, dict[str, list[tuple[float, float]]]] = Field(
        default_factory=dict, description="link or origin -> curve name -> (t, veh) knots"
    )
    time_space: dict[str, list[tuple[float, float, float]]] | None = None
    summary: RunSummary
