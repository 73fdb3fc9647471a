"""Core domain types: features, images, domain labels, and pyramid geometry."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError


class Season(enum.Enum):
    SP = "SP"
    SU = "SU"
    AU = "AU"
    WI = "WI"
    OTHER = "OTHER"


@dataclass(frozen=True)
class DomainLabel:
    """Season + route identifier of one image collection."""

    season: Season
    route: int

    def __post_init__(self):
        if self.route < 0:
            raise ValueError("route must be >= 0")

    def as_pair(self) -> tuple[str, int]:
        return (self.season.value, self.route)


@dataclass(frozen=True)
class Feature:
    """One local feature: normalized keypoint position plus a descriptor vector."""

    pos: tuple[float, float]
    desc: np.ndarray

    def __post_init__(self):
        x, y = self.pos
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValueError(f"keypoint position out of [0,1]^2: {self.pos}")


@dataclass
class ImageRecord:
    """All features of one image, stored as dense arrays for fast batch math.

    `positions` is (N, 2) with x right / y down in [0, 1]; `descriptors` is
    (N, d) float64. Feature ordinals are row indices and stay stable.
    """

    image_id: int
    positions: np.ndarray
    descriptors: np.ndarray
    domain: DomainLabel
    place_id: Optional[int] = None
    scales: Optional[np.ndarray] = None
    orientations: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.descriptors = np.asarray(self.descriptors, dtype=np.float64)
        if self.descriptors.ndim != 2:
            self.descriptors = self.descriptors.reshape(len(self.positions), -1)
        if len(self.positions) != len(self.descriptors):
            raise ValueError("positions and descriptors disagree on feature count")
        if len(self.positions) and (
            self.positions.min() < 0.0 or self.positions.max() > 1.0
        ):
            raise ValueError(f"image {self.image_id}: keypoint outside [0,1]^2")

    @property
    def num_features(self) -> int:
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def feature(self, ordinal: int) -> Feature:
        return Feature(tuple(self.positions[ordinal]), self.descriptors[ordinal])


def check_same_dim(images: Sequence[ImageRecord]) -> int:
    """Return the common descriptor dimension, or raise."""
    dims = {im.dim for im in images if im.num_features > 0}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed descriptor dimensions: {sorted(dims)}")
    return dims.pop() if dims else 0


@dataclass(frozen=True)
class MinerConfig:
    """Nearest-neighbor mining parameters (method defaults: K=10, K'=3, D0=200)."""

    k: int = 10
    k_prime: int = 3
    d0: float = 200.0
    exclude_same_source: bool = False

    def __post_init__(self):
        if not (self.k >= self.k_prime >= 1):
            raise ValueError("require k >= k_prime >= 1")
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")


@dataclass(frozen=True)
class PyramidConfig:
    """Spatial pyramid depth; level l has 4**l cells (21 cells total at L=2)."""

    levels: int = 2

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("levels must be >= 0")

    @property
    def num_cells_finest(self) -> int:
        return 4**self.levels

    @property
    def total_cells(self) -> int:
        return sum(4**l for l in range(self.levels + 1))


def cell_of(pos: tuple[float, float], level: int) -> int:
    """Row-major grid cell of a normalized position at one pyramid level.

    Coordinates exactly 1.0 are clamped into the last cell so the grid stays
    a partition of [0,1]^2.
    """
    n = 1 << level
    cx = min(int(pos[0] * n), n - 1)
    cy = min(int(pos[1] * n), n - 1)
    return cy * n + cx


def cells_of(positions: np.ndarray, level: int) -> np.ndarray:
    """Vectorized `cell_of` over an (N, 2) position array."""
    n = 1 << level
    grid = np.minimum((positions * n).astype(np.int64), n - 1)
    return grid[:, 1] * n + grid[:, 0]


def ancestor_cell(cell: np.ndarray, finest_level: int, level: int) -> np.ndarray:
    """Map finest-level cell indices to their enclosing cell at a coarser level."""
    n = 1 << finest_level
    cy, cx = cell // n, cell % n
    shift = finest_level - level
    return ((cy >> shift) << level) + (cx >> shift)


def cell_bbox(cell: int, level: int) -> tuple[float, float, float, float]:
    """Normalized (x0, y0, x1, y1) bounding box of a grid cell."""
    n = 1 << level
    cy, cx = divmod(cell, n)
    return (cx / n, cy / n, (cx + 1) / n, (cy + 1) / n)
