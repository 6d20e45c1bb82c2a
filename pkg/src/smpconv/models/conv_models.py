from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .smp_models import SmpFilter


class PositionSharing(str, Enum):
    FILTER = "filter"  # one position set per filter, shared across its channels
    LAYER = "layer"  # one position set for every filter of the layer


class ConvLayerSpec(BaseModel):
    """A convolution layer whose kernels are rasterized from SMP filters.

    One filter per output channel; a filter's weight vectors carry one value per input channel.
    In depthwise mode the layer has either one filter per channel with a single weight channel,
    or a single filter whose weight channels are the per-channel kernel slices.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    filters: List[SmpFilter]
    position_sharing: PositionSharing = PositionSharing.FILTER
    small_branch: Optional[np.ndarray] = None
    causal: bool = False
    depthwise: bool = False

    @field_validator("small_branch", mode="before")
    @classmethod
    def coerce_branch(cls, v):
        if v is None:
            return v
        arr = np.array(v, dtype=np.float64)
        arr.flags.writeable = False
        return arr

    @model_validator(mode="after")
    def check_filters(self):
        if not self.filters:
            raise ValueError("a layer needs at least one filter")
        first = self.filters[0]
        for f in self.filters[1:]:
            if f.dim != first.dim or f.channels != first.channels:
                raise ValueError(f"filters disagree on dim/channels: ({f.dim}, {f.channels}) vs ({first.dim}, {first.channels})")
            if self.position_sharing == PositionSharing.LAYER:
                if f.positions.shape != first.positions.shape or not (np.array_equal(f.positions, first.positions) and np.array_equal(f.radii, first.radii)):
                    raise ValueError("position_sharing=layer requires identical positions and radii in every filter")
        if self.causal and first.dim != 1:
            raise ValueError("causal layers must be 1D")
        if self.small_branch is not None:
            lead = self.small_branch.shape[:2]
            if lead != (len(self.filters), first.channels) or self.small_branch.ndim != 2 + first.dim:
                raise ValueError(f"small_branch shape {self.small_branch.shape} does not fit {len(self.filters)} filters x {first.channels} channels in {first.dim}D")
        return self

    @property
    def dim(self) -> int:
        return self.filters[0].dim

    @property
    def channels(self) -> int:
        return self.filters[0].channels

    @property
    def n_filters(self) -> int:
        return len(self.filters)


class BenchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    kind: str = Field(default="smp", pattern="^(smp|dense)$")
    dim: int = Field(default=2, ge=1, le=2)
    kernel_extent: int = Field(ge=1)
    n_points: int = Field(default=0, ge=0)
    in_channels: int = Field(default=16, ge=1)
    out_channels: int = Field(default=16, ge=1)
    depthwise: bool = False
    position_sharing: PositionSharing = PositionSharing.FILTER

    @model_validator(mode="after")
    def check_points(self):
        if self.kind == "smp" and self.n_points < 1:
            raise ValueError(f"SMP benchmark config '{self.name}' needs n_points >= 1")
        if self.depthwise and self.in_channels != self.out_channels:
            raise ValueError(f"depthwise config '{self.name}' needs in_channels == out_channels")
        return self


class TimingRow(BaseModel):
    config_name: str
    kernel_extent: int
    n_points: int
    params: int
    median_ms: float
    p10_ms: float
    p90_ms: float


class BenchReport(BaseModel):
    rows: List[TimingRow]
    repetitions: int
    input_shape: List[int]
