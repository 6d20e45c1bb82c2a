from enum import Enum
from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .smp_models import RADIUS_MAX, RADIUS_MIN


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"
    ADAMW = "adamw"  # decoupled weight decay


class TrainConfig(BaseModel):
    """Optimizer hyperparameters and parameter-group treatment.

    Radii train at base_lr * radius_lr_scale and are projected into [radius_min, radius_max] after
    every step. Weight decay touches weights only. Positions are never projected.
    """

    model_config = ConfigDict(extra="forbid")

    base_lr: float = Field(default=1e-2, gt=0)
    radius_lr_scale: float = Field(default=0.1, gt=0, le=1)
    radius_min: float = RADIUS_MIN
    radius_max: float = RADIUS_MAX
    optimizer_kind: OptimizerKind = OptimizerKind.ADAM
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    momentum: float = Field(default=0.0, ge=0, lt=1)
    weight_decay: float = Field(default=0.0, ge=0)
    train_positions: bool = True
    train_radii: bool = True
    steps: int = Field(default=2000, ge=0)
    seed: int = 0
    log_every: int = Field(default=200, ge=1)

    @model_validator(mode="after")
    def check_bounds(self):
        if not (0 < self.radius_min < self.radius_max):
            raise ValueError(f"radius bounds must satisfy 0 < radius_min < radius_max, got [{self.radius_min}, {self.radius_max}]")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {self.betas}")
        return self


class OptimizerState(BaseModel):
    """Moment buffers and update counters keyed by parameter name ("smp0.positions", "readout", ...)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    counts: Dict[str, int] = Field(default_factory=dict)
    first_moment: Dict[str, np.ndarray] = Field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = Field(default_factory=dict)
