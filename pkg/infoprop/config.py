from typing import Literal

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class SimulationConfig(BaseModel):
    """Guards for the simulation engines"""

    max_node_iterations: int = Field(
        default=1000, description="Node updates allowed at a single time instant"
    )


class CalibrationConfig(BaseModel):
    """Configuration for the iterative weighted least squares loop"""

    max_outer_iterations: int = Field(default=10, description="IWLS outer iterations")
    weight_tolerance: float = Field(default=1e-3, description="Relative weight change to stop")
    max_evaluations: int = Field(default=400, description="Inner Nelder-Mead evaluation budget")
    failure_penalty: float = Field(default=1e12, description="Objective for failed simulations")
    initial_weight: float = Field(default=1.0, description="Initial travel-time weight")


class ExperimentConfig(BaseModel):
    """Configuration for experiment generators"""

    repetitions: int = Field(default=20, description="Repetitions for demand perturbation")
    seed: int = Field(default=0, description="Seed for the perturbation generator")


class Settings(BaseSettings):
    """Application settings with environment variable support"""

    # Output
    output_dir: str = Field(default="runs")

    # Execution
    mode: Literal["sequential", "distributed"] = Field(default="sequential")
    workers: int = Field(default=4)
    bin_minutes: float = Field(default=5.0, description="Sensor bin for scenarios that name none")

    # Application
    log_level: str = Field(default="INFO")

    # Calibration
    calibration_max_outer_iterations: int = Field(default=10)
    calibration_max_evaluations: int = Field(default=400)
    calibration_initial_weight: float = Field(default=1.0)

    # Experiments
    experiment_repetitions: int = Field(default=20)
    experiment_seed: int = Field(default=0)

    # Nested configs
    @property
    def simulation(self) -> SimulationConfig:
        return SimulationConfig()

    @property
    def calibration(self) -> CalibrationConfig:
        return CalibrationConfig(
            max_outer_iterations=self.calibration_max_outer_iterations,
            max_evaluations=self.calibration_max_evaluations,
            initial_weight=self.calibration_initial_weight,
        )

    @property
    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            repetitions=self.experiment_repetitions,
            seed=self.experiment_seed,
        )

    model_config = SettingsConfigDict(
        env_prefix="INFOPROP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Create global settings instance
settings = Settings()
