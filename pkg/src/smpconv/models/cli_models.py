from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .experiment_models import TARGET_DIMS, FitMode, SequenceTaskConfig
from .train_models import TrainConfig


class RunConfig(BaseModel):
    """Common fields of every subcommand; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    out_dir: str
    seed: int = 0


class FitRunConfig(RunConfig):
    mode: FitMode = FitMode.MOVING
    points: int = Field(default=204, gt=0)
    grid: int = Field(default=51, ge=2)
    dim: int = Field(default=2, ge=1, le=2)
    target: str = "product_sine"
    seeds: Optional[List[int]] = None
    jobs: int = Field(default=1, ge=1)
    sigma: float = Field(default=0.3, gt=0)
    r_init: float = Field(default=0.2, gt=0)
    init: str = Field(default="uniform", pattern="^(uniform|gaussian)$")
    image: bool = False
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def check_target(self):
        if self.target not in TARGET_DIMS:
            raise ValueError(f"unknown target '{self.target}', expected one of {sorted(TARGET_DIMS)}")
        if self.dim not in TARGET_DIMS[self.target]:
            raise ValueError(f"target '{self.target}' is not defined for dim={self.dim}")
        if self.image and self.dim != 2:
            raise ValueError("kernel images need dim=2")
        return self


class RasterizeRunConfig(RunConfig):
    checkpoint: str
    grid: int = Field(default=33, ge=1)
    domain: Tuple[float, float] = (-1.0, 1.0)

    @model_validator(mode="after")
    def check_domain(self):
        if not self.domain[0] < self.domain[1]:
            raise ValueError(f"domain must satisfy lower < upper, got {self.domain}")
        return self


class BenchRunConfig(RunConfig):
    configs: str = "default"
    input_shape: List[int] = Field(default_factory=lambda: [32, 32])
    repetitions: int = Field(default=5, ge=3)


class SequenceRunConfig(RunConfig):
    seeds: Optional[List[int]] = None
    reference: Optional[str] = None  # test accuracies pinned by the first run
    task: SequenceTaskConfig = Field(default_factory=SequenceTaskConfig)


class VisualizeRunConfig(RunConfig):
    checkpoint: Optional[str] = None
    grid: int = Field(default=33, ge=1)
    points: int = Field(default=16, gt=0)
    sigma: float = Field(default=0.05, gt=0)
    channel: int = Field(default=0, ge=0)
