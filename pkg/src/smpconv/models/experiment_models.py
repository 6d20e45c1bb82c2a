from enum import Enum
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .smp_models import GridSpec, SmpFilter
from .train_models import TrainConfig


class FitMode(str, Enum):
    MOVING = "moving"
    FIXED = "fixed"  # positions frozen, radii and weights train
    FROZEN = "frozen"  # positions and radii frozen, weights train


# analytic targets and the grid dimensions they are defined on
TARGET_DIMS = {
    "product_sine": (2,),
    "radial_sine": (2,),
    "sine": (1,),
    "sine_mix": (1,),
    "zero": (1, 2),
}


class TargetFunction(BaseModel):
    """A named scalar function sampled on a 1D or 2D grid; values have the grid's extent."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    grid: GridSpec
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def coerce_values(cls, v):
        arr = np.array(v, dtype=np.float64)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def check_values(self):
        if self.values.shape != tuple(self.grid.extent):
            raise ValueError(f"values shape {self.values.shape} does not match grid extent {self.grid.extent}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"target '{self.name}' has non-finite samples")
        return self


class FitReport(BaseModel):
    mode: FitMode
    n_points: int
    seed: int
    mse_trace: List[float]
    final_mse: float
    wall_clock_s: float

    @model_validator(mode="after")
    def check_trace(self):
        if any(v < 0 for v in self.mse_trace) or self.final_mse < 0:
            raise ValueError("MSE values must be non-negative")
        return self

    @property
    def steps(self) -> int:
        return len(self.mse_trace)


def _sequence_train_defaults() -> TrainConfig:
    return TrainConfig(base_lr=5e-3, steps=1500, log_every=100)


class SequenceTaskConfig(BaseModel):
    """First-element sign classification of white-noise sequences."""

    model_config = ConfigDict(extra="forbid")

    length: int = Field(default=256, ge=2)
    n_train: int = Field(default=2048, ge=1)
    n_test: int = Field(default=1024, ge=1)
    hidden_channels: int = Field(default=6, ge=1)
    n_points: int = Field(default=30, ge=1)
    sigma: float = Field(default=1.0, gt=0)
    r_init: float = Field(default=0.1, gt=0)
    batch_size: int = Field(default=64, ge=1)
    dense_kernel: int = Field(default=5, ge=1)
    shuffle_labels: bool = False
    include_baseline: bool = True
    train: TrainConfig = Field(default_factory=_sequence_train_defaults)


class SequenceResult(BaseModel):
    model: str
    seed: int
    train_accuracy: float
    test_accuracy: float


class SequenceReport(BaseModel):
    results: List[SequenceResult]
    wall_clock_s: float

    def accuracy(self, model: str) -> float:
        for r in self.results:
            if r.model == model:
                return r.test_accuracy
        raise KeyError(model)


class TrainedSequenceModel(BaseModel):
    """Parameters of the two-layer causal SMP classifier."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    layer1: List[SmpFilter]
    layer2: List[SmpFilter]
    readout: np.ndarray
    bias: np.ndarray
