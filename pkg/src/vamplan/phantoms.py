"""Synthetic response targets for runs, sweeps, and demos."""

from __future__ import annotations

import numpy as np

from .grids import Field, GridSpec
from .fileio import read_pgm

FOUR_GRATINGS = "four_gratings"
BINARY_GRATINGS = "binary_gratings"
DISK = "disk"
GRAYSCALE_IMAGE = "grayscale_image"
BINARY_3D = "binary_3d"

KINDS = (FOUR_GRATINGS, BINARY_GRATINGS, DISK, GRAYSCALE_IMAGE, BINARY_3D)


def _quantize(values: np.ndarray, bits: int) -> np.ndarray:
    """Quantize values in [0, 1] to 2**bits uniform levels spanning [0, 1]."""
    levels = 2**bits - 1
    return np.round(values * levels) / levels


def _quadrant_masks(n_x: int, n_y: int):
    """(lower_right, upper_right, upper_left, lower_left) boolean masks.
    Rows index y upward (y grows with the row index)."""
    half_x, half_y = n_x // 2, n_y // 2
    xx = np.arange(n_x)[None, :]
    yy = np.arange(n_y)[:, None]
    right = xx >= half_x
    upper = yy >= half_y
    return (right & ~upper, right & upper, ~right & upper, ~right & ~upper)


def four_gratings(
    grid: GridSpec, periods: float = 4.0, amplitude: float = 1.0
) -> Field:
    """Four equal-amplitude sinusoidal gratings quantized to 1, 2, 4 and 12
    bits, counterclockwise from the lower-right quadrant."""
    xx = np.arange(grid.n_x)[None, :]
    half_x = max(grid.n_x // 2, 1)
    phase = 2.0 * np.pi * periods * (xx % half_x) / half_x
    base = 0.5 * amplitude * (1.0 - np.cos(phase)) * np.ones((grid.n_y, 1))
    out = np.zeros((grid.n_y, grid.n_x))
    for mask, bits in zip(_quadrant_masks(grid.n_x, grid.n_y), (1, 2, 4, 12)):
        out[mask] = _quantize(base / amplitude, bits)[mask] * amplitude
    return Field(grid, np.broadcast_to(out, grid.shape).copy(), unit="response")


def binary_gratings(grid: GridSpec, periods: tuple[float, ...] = (2, 4, 6, 8)) -> Field:
    """Four binary {0, 1} gratings of increasing spatial frequency,
    counterclockwise from the lower-right quadrant."""
    xx = np.arange(grid.n_x)[None, :]
    half_x = max(grid.n_x // 2, 1)
    out = np.zeros((grid.n_y, grid.n_x))
    for mask, per in zip(_quadrant_masks(grid.n_x, grid.n_y), periods):
        stripes = ((xx % half_x) * per * 2 // half_x) % 2
        out[mask] = np.broadcast_to(stripes, out.shape)[mask]
    return Field(grid, np.broadcast_to(out, grid.shape).copy(), unit="response")


def disk(grid: GridSpec, radius: float, value: float = 1.0) -> Field:
    """Centered disk of the given physical radius (cm), replicated in z."""
    xx = grid.x_centers[None, :]
    yy = grid.y_centers[:, None]
    inside = (xx**2 + yy**2) <= radius**2
    out = np.broadcast_to(inside * float(value), grid.shape)
    return Field(grid, out.copy(), unit="response")


def grayscale_image(grid: GridSpec, path: str) -> Field:
    """Load a PGM (P5) image, rescale to [0, 1], replicate along z.

    PNG input works too when Pillow is installed.  The image must match the
    grid's x-y shape.
    """
    if str(path).lower().endswith(".png"):
        try:
            from PIL import Image
        except ImportError as exc:
            raise ValueError("PNG input needs the optional Pillow dependency") from exc
        img = np.asarray(Image.open(path).convert("L"), dtype=np.float64)
        img = img[::-1]  # image rows run top-down; grid y runs upward
    else:
        img = read_pgm(path)[::-1].astype(np.float64)
    if img.shape != (grid.n_y, grid.n_x):
        raise ValueError(f"image shape {img.shape} does not match grid ({grid.n_y}, {grid.n_x})")
    peak = img.max()
    if peak > 0:
        img = img / peak
    return Field(grid, np.broadcast_to(img, grid.shape).copy(), unit="response")


def binary_3d(grid: GridSpec, radius: float | None = None) -> Field:
    """Stacked binary solid: a cylinder over the lower half, stepping down to
    a half-radius cylinder above (a simple extruded two-tier part)."""
    if radius is None:
        radius = 0.3 * min(grid.extent_x, grid.extent_y)
    xx = grid.x_centers[None, :]
    yy = grid.y_centers[:, None]
    rr = xx**2 + yy**2
    wide = rr <= radius**2
    narrow = rr <= (0.5 * radius) ** 2
    out = np.zeros(grid.shape)
    z_split = max(grid.n_z // 2, 1)
    out[:z_split] = wide
    out[z_split:] = narrow
    return Field(grid, out, unit="response")


def generate_phantom(kind: str, grid: GridSpec, **params) -> Field:
    """Dispatch by phantom kind; unknown kinds are rejected."""
    if kind == FOUR_GRATINGS:
        return four_gratings(grid, **params)
    if kind == BINARY_GRATINGS:
        return binary_gratings(grid, **params)
    if kind == DISK:
        return disk(grid, **params)
    if kind == GRAYSCALE_IMAGE:
        return grayscale_image(grid, **params)
    if kind == BINARY_3D:
        return binary_3d(grid, **params)
    raise ValueError(f"unknown phantom kind {kind!r}; expected one of {KINDS}")
