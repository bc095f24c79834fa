"""Regular tomogram grids and the scalar fields that live on them.

The grid is Cartesian and isotropic.  Voxel centers sit at
``(i + 0.5 - n/2) * voxel_size`` per axis, so the grid is centered on the
origin and the inscribed disk is symmetric.  2D problems use ``n_z = 1``;
every operator in this package treats z slices independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a regular voxel grid (counts plus isotropic spacing in cm)."""

    n_x: int
    n_y: int
    n_z: int
    voxel_size: float

    def __post_init__(self):
        for name in ("n_x", "n_y", "n_z"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 1:
                raise ValueError(f"{name} must be a positive integer, got {n!r}")
        if not (self.voxel_size > 0.0 and np.isfinite(self.voxel_size)):
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (n_z, n_y, n_x); x varies fastest in memory."""
        return (self.n_z, self.n_y, self.n_x)

    @property
    def n_voxels(self) -> int:
        return self.n_x * self.n_y * self.n_z

    @property
    def extent_x(self) -> float:
        return self.n_x * self.voxel_size

    @property
    def extent_y(self) -> float:
        return self.n_y * self.voxel_size

    @property
    def extent_z(self) -> float:
        return self.n_z * self.voxel_size

    @property
    def voxel_volume(self) -> float:
        """Voxel volume in cm^3."""
        return self.voxel_size**3

    def axis_centers(self, n: int) -> np.ndarray:
        """Physical center coordinates of n samples along one axis."""
        return (np.arange(n) + 0.5 - 0.5 * n) * self.voxel_size

    @property
    def x_centers(self) -> np.ndarray:
        return self.axis_centers(self.n_x)

    @property
    def y_centers(self) -> np.ndarray:
        return self.axis_centers(self.n_y)


def make_grid(n_x: int, n_y: int, n_z: int, voxel_size: float) -> GridSpec:
    """Build a grid spec; rejects non-positive counts or spacing."""
    return GridSpec(n_x=int(n_x), n_y=int(n_y), n_z=int(n_z), voxel_size=float(voxel_size))


@dataclass(frozen=True)
class Field:
    """A scalar sample per voxel.  Immutable; the unit tag is advisory."""

    grid: GridSpec
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size != self.grid.n_voxels:
            raise ValueError(
                f"field has {arr.size} values for a grid of {self.grid.n_voxels} voxels"
            )
        arr = np.ascontiguousarray(arr.reshape(self.grid.shape))
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def with_values(self, values: np.ndarray, unit: str | None = None) -> "Field":
        """Same grid, new values (and optionally a new unit tag)."""
        return Field(self.grid, values, self.unit if unit is None else unit)

    @property
    def flat(self) -> np.ndarray:
        """Values raveled x-fastest, then y, then z (row-major)."""
        return self.values.reshape(-1)

    def slice(self, z: int) -> np.ndarray:
        """The (n_y, n_x) array of one z slice."""
        return self.values[z]


def constant_field(grid: GridSpec, value: float, unit: str = "") -> Field:
    return Field(grid, np.full(grid.shape, float(value)), unit)


def require_same_grid(*fields: Field) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: {f.grid} vs {grid}")
    return grid


def field_add(a: Field, b: Field) -> Field:
    require_same_grid(a, b)
    return a.with_values(a.values + b.values)


def field_scale(a: Field, c: float) -> Field:
    return a.with_values(a.values * float(c))


def field_multiply(a: Field, b: Field) -> Field:
    require_same_grid(a, b)
    return a.with_values(a.values * b.values)


def inscribed_disk_mask(grid: GridSpec) -> Field:
    """Indicator of the disk inscribed in the square x-y domain, replicated in z.

    A voxel gets 1 when its center lies within radius ``min extent / 2`` of
    the grid center.  Requires a square x-y cross-section.
    """
    if grid.n_x != grid.n_y:
        raise ValueError(f"inscribed disk needs a square x-y grid, got {grid.n_x}x{grid.n_y}")
    radius = 0.5 * min(grid.extent_x, grid.extent_y)
    xx = grid.x_centers[None, :]
    yy = grid.y_centers[:, None]
    inside = (xx**2 + yy**2) <= radius**2
    values = np.broadcast_to(inside.astype(np.float64), grid.shape)
    return Field(grid, values.copy(), unit="")


def field_stats(f: Field) -> tuple[float, float, float, float]:
    """(min, max, mean, L2 norm) over the raw values."""
    v = f.values
    return (float(v.min()), float(v.max()), float(v.mean()), float(np.linalg.norm(v.reshape(-1))))
