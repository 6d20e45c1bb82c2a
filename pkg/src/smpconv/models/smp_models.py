from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

RADIUS_MIN = 1e-4
RADIUS_MAX = 1.0

# Rasterized kernel values: (channels, *extent) for one filter, (filters, channels, *extent) for a layer.
KernelTensor = npt.NDArray[np.float64]


def _frozen_array(value, ndim: int, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


class SmpFilter(BaseModel):
    """One filter's learnable point set: positions (N_p, d), weights (N_p, N_c), radii (N_p,).

    Arrays are copied to float64 and made read-only on construction; updates go through
    `with_params`, which re-validates every invariant.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    positions: np.ndarray
    weights: np.ndarray
    radii: np.ndarray
    radius_min: float = RADIUS_MIN
    radius_max: float = RADIUS_MAX

    @field_validator("positions", "weights", mode="before")
    @classmethod
    def coerce_matrix(cls, v, info):
        return _frozen_array(v, 2, info.field_name)

    @field_validator("radii", mode="before")
    @classmethod
    def coerce_vector(cls, v):
        return _frozen_array(v, 1, "radii")

    @model_validator(mode="after")
    def check_invariants(self):
        n = self.positions.shape[0]
        if n < 1:
            raise ValueError("a filter needs at least one point")
        if self.weights.shape[0] != n or self.radii.shape[0] != n:
            raise ValueError(f"positions/weights/radii disagree on point count: {n}, {self.weights.shape[0]}, {self.radii.shape[0]}")
        if self.positions.shape[1] not in (1, 2):
            raise ValueError(f"coordinate dimension must be 1 or 2, got {self.positions.shape[1]}")
        if self.weights.shape[1] < 1:
            raise ValueError("weights need at least one channel")
        if not (0.0 < self.radius_min < self.radius_max):
            raise ValueError(f"radius bounds must satisfy 0 < radius_min < radius_max, got [{self.radius_min}, {self.radius_max}]")
        for name in ("positions", "weights", "radii"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.radii < self.radius_min) or np.any(self.radii > self.radius_max):
            raise ValueError(f"radii must lie in [{self.radius_min}, {self.radius_max}], got range [{self.radii.min()}, {self.radii.max()}]")
        return self

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def channels(self) -> int:
        return self.weights.shape[1]

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    def with_params(
        self,
        positions: Optional[np.ndarray] = None,
        weights: Optional[np.ndarray] = None,
        radii: Optional[np.ndarray] = None,
        radius_min: Optional[float] = None,
        radius_max: Optional[float] = None,
    ) -> "SmpFilter":
        return SmpFilter(
            positions=self.positions if positions is None else positions,
            weights=self.weights if weights is None else weights,
            radii=self.radii if radii is None else radii,
            radius_min=self.radius_min if radius_min is None else radius_min,
            radius_max=self.radius_max if radius_max is None else radius_max,
        )


class GridSpec(BaseModel):
    """Evenly spaced query lattice over a closed box; endpoints included, row-major for 2D."""

    model_config = ConfigDict(frozen=True)

    dim: int
    extent: Tuple[int, ...]
    domain: Tuple[Tuple[float, float], ...]

    @model_validator(mode="after")
    def check_shape(self):
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if len(self.extent) != self.dim or len(self.domain) != self.dim:
            raise ValueError(f"extent {self.extent} and domain {self.domain} must both have {self.dim} entries")
        if any(k < 1 for k in self.extent):
            raise ValueError(f"extent entries must be >= 1, got {self.extent}")
        if any(not lo < hi for lo, hi in self.domain):
            raise ValueError(f"domain intervals must satisfy lower < upper, got {self.domain}")
        return self

    @classmethod
    def square(cls, k: int, dim: int = 2, lo: float = -1.0, hi: float = 1.0) -> "GridSpec":
        return cls(dim=dim, extent=(k,) * dim, domain=((lo, hi),) * dim)

    @classmethod
    def causal(cls, length: int) -> "GridSpec":
        """1D grid over [-1, 0]; the last tap (coordinate 0) is lag 0."""
        return cls(dim=1, extent=(length,), domain=((-1.0, 0.0),))

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.domain[i]
        k = self.extent[i]
        if k == 1:
            return np.array([0.5 * (lo + hi)])
        return np.linspace(lo, hi, k)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """(M, d) query matrix, M = prod(extent); first coordinate varies slowest."""
        axes = np.meshgrid(*(self.axis(i) for i in range(self.dim)), indexing="ij")
        coords = np.stack([a.reshape(-1) for a in axes], axis=1)
        coords.flags.writeable = False
        return coords

    @property
    def size(self) -> int:
        return int(np.prod(self.extent))


class SmpGradients(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    d_positions: np.ndarray
    d_weights: np.ndarray
    d_radii: np.ndarray

    @field_validator("d_positions", "d_weights", "d_radii", mode="before")
    @classmethod
    def coerce(cls, v):
        return np.asarray(v, dtype=np.float64)

    @classmethod
    def zeros_like(cls, smp: SmpFilter) -> "SmpGradients":
        return cls(
            d_positions=np.zeros_like(smp.positions),
            d_weights=np.zeros_like(smp.weights),
            d_radii=np.zeros_like(smp.radii),
        )

    def congruent_with(self, smp: SmpFilter) -> bool:
        return (
            self.d_positions.shape == smp.positions.shape
            and self.d_weights.shape == smp.weights.shape
            and self.d_radii.shape == smp.radii.shape
        )

    def __add__(self, other: "SmpGradients") -> "SmpGradients":
        return SmpGradients(
            d_positions=self.d_positions + other.d_positions,
            d_weights=self.d_weights + other.d_weights,
            d_radii=self.d_radii + other.d_radii,
        )


class CheckpointDocument(BaseModel):
    """On-disk form of an SmpFilter."""

    model_config = ConfigDict(extra="forbid")

    dim: int
    channels: int
    n_points: int
    positions: list[list[float]]
    weights: list[list[float]]
    radii: list[float]
    radius_min: float
    radius_max: float

    @model_validator(mode="after")
    def check_counts(self):
        if len(self.positions) != self.n_points or len(self.weights) != self.n_points or len(self.radii) != self.n_points:
            raise ValueError(f"n_points={self.n_points} does not match the stored arrays")
        if any(len(p) != self.dim for p in self.positions):
            raise ValueError(f"every position must have dim={self.dim} coordinates")
        if any(len(w) != self.channels for w in self.weights):
            raise ValueError(f"every weight vector must have channels={self.channels} entries")
        return self

    @classmethod
    def from_filter(cls, smp: SmpFilter) -> "CheckpointDocument":
        return cls(
            dim=smp.dim,
            channels=smp.channels,
            n_points=smp.n_points,
            positions=smp.positions.tolist(),
            weights=smp.weights.tolist(),
            radii=smp.radii.tolist(),
            radius_min=smp.radius_min,
            radius_max=smp.radius_max,
        )

    def to_filter(self) -> SmpFilter:
        return SmpFilter(
            positions=self.positions,
            weights=self.weights,
            radii=self.radii,
            radius_min=self.radius_min,
            radius_max=self.radius_max,
        )
