"""Parallel-beam attenuated propagation between sinogram and tomogram space.

The forward operator marches one ray per sinogram sample through the grid
with a fixed step of half a voxel, interpolating fields bilinearly along the
ray and accumulating beam attenuation with the same quadrature.  The
backward operator is the exact transpose of that discretized stencil (under
the quadrature-weighted inner products), which makes the adjoint identity
hold to rounding error by construction.

Composition of the full pair: the forward multiplies its operand by the
active-species absorption field before the attenuated line integrals; the
backward multiplies the attenuated backprojection by the same field, turning
areal dose (J/cm^2) into volumetric dose (J/cm^3).  The angular quadrature
weight is folded into the backward so that dose amplitudes do not depend on
the number of projection angles.

Rays lie in constant-z planes, so z slices are processed independently; 3D
problems reuse a single 2D stencil per slice when the attenuation fields are
z-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .grids import Field, GridSpec, inscribed_disk_mask, require_same_grid

# S.4-style sparse layout used for the published memory heuristic:
# float16 value plus two uint32 indices per stored entry.
HEURISTIC_BYTES_PER_ENTRY = 10
# Conservative per-heuristic-entry cost of the CSR matrices actually built
# here (float64 + int32, both orientations, ~2.5x interpolation spread).
_BUILD_BYTES_PER_ENTRY = 60
_DEFAULT_BUILD_LIMIT = 8_000_000_000


@dataclass(frozen=True)
class SinogramSpec:
    """Sampling of sinogram space: transverse offset rho, gantry angle, z slice.

    Angles are radians, strictly increasing within [0, 2*pi), uniformly
    spaced.  ``angle_weight`` is the angular quadrature weight; it defaults
    to the angle spacing (2*pi for a single angle).
    """

    n_rho: int
    n_z: int
    angles: tuple[float, ...]
    rho_extent: float
    angle_weight: float | None = None

    def __post_init__(self):
        if self.n_rho < 1 or self.n_z < 1:
            raise ValueError("n_rho and n_z must be >= 1")
        if len(self.angles) < 1:
            raise ValueError("need at least one angle")
        ang = np.asarray(self.angles, dtype=np.float64)
        if ang[0] < 0.0 or ang[-1] >= 2.0 * np.pi:
            raise ValueError("angles must lie in [0, 2*pi)")
        if len(ang) > 1:
            d = np.diff(ang)
            if np.any(d <= 0):
                raise ValueError("angles must be strictly increasing")
            if not np.allclose(d, d[0], rtol=0, atol=1e-9):
                raise ValueError("angle grid must be uniform")
        if not (self.rho_extent > 0):
            raise ValueError("rho_extent must be positive")
        object.__setattr__(self, "angles", tuple(float(a) for a in ang))
        if self.angle_weight is None:
            w = float(ang[1] - ang[0]) if len(ang) > 1 else 2.0 * np.pi
            object.__setattr__(self, "angle_weight", w)
        elif not self.angle_weight > 0:
            raise ValueError("angle_weight must be positive")

    @classmethod
    def uniform(
        cls,
        n_rho: int,
        n_theta: int,
        n_z: int,
        rho_extent: float,
        coverage_deg: float = 360.0,
        start_deg: float = 0.0,
    ) -> "SinogramSpec":
        """Uniform angles covering ``coverage_deg`` degrees from ``start_deg``."""
        coverage = math.radians(coverage_deg)
        start = math.radians(start_deg)
        angles = start + coverage * np.arange(n_theta) / n_theta
        return cls(n_rho, n_z, tuple(angles), rho_extent, angle_weight=coverage / n_theta)

    @property
    def n_theta(self) -> int:
        return len(self.angles)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape (n_z, n_theta, n_rho); rho varies fastest in memory."""
        return (self.n_z, self.n_theta, self.n_rho)

    @property
    def n_samples(self) -> int:
        return self.n_rho * self.n_theta * self.n_z

    @property
    def delta_rho(self) -> float:
        return self.rho_extent / self.n_rho

    @property
    def rho_centers(self) -> np.ndarray:
        return (np.arange(self.n_rho) + 0.5 - 0.5 * self.n_rho) * self.delta_rho

    @property
    def sample_measure(self) -> float:
        """Quadrature measure of one (rho, theta, z') sample; z' spacing is
        inherited from the voxel grid it pairs with, so this is per unit z."""
        return self.delta_rho * self.angle_weight


@dataclass(frozen=True)
class Sinogram:
    """Scalar sample per (rho, theta, z'); areal dose in J/cm^2."""

    spec: SinogramSpec
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size != self.spec.n_samples:
            raise ValueError(
                f"sinogram has {arr.size} values for a spec of {self.spec.n_samples} samples"
            )
        arr = np.ascontiguousarray(arr.reshape(self.spec.shape))
        if not np.all(np.isfinite(arr)):
            raise ValueError("sinogram values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def with_values(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.spec, values)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def zero_sinogram(spec: SinogramSpec) -> Sinogram:
    return Sinogram(spec, np.zeros(spec.shape))


def default_sinogram_spec(
    grid: GridSpec, n_theta: int = 360, coverage_deg: float = 360.0
) -> SinogramSpec:
    """One transverse sample per x voxel, rho extent matching the grid."""
    return SinogramSpec.uniform(
        grid.n_x, n_theta, grid.n_z, grid.extent_x, coverage_deg=coverage_deg
    )


def disk_attenuation_fields(grid: GridSpec, alpha: float = 0.001) -> tuple[Field, Field]:
    """Default attenuation/absorption pair: ``alpha`` on the inscribed disk,
    zero outside, for both the total attenuation and the active species."""
    mask = inscribed_disk_mask(grid)
    f = mask.with_values(mask.values * alpha, unit="1/cm")
    return f, f


def _bilinear_taps(grid: GridSpec, x: np.ndarray, y: np.ndarray):
    """Flattened voxel indices and weights of the 4 bilinear taps per point.

    Taps falling outside the grid get zero weight (fields vanish outside).
    Returns (idx, w), each of shape (4,) + x.shape.
    """
    h = grid.voxel_size
    fx = x / h + 0.5 * grid.n_x - 0.5
    fy = y / h + 0.5 * grid.n_y - 0.5
    ix0 = np.floor(fx).astype(np.int64)
    iy0 = np.floor(fy).astype(np.int64)
    tx = fx - ix0
    ty = fy - iy0

    ixs = np.stack([ix0, ix0 + 1, ix0, ix0 + 1])
    iys = np.stack([iy0, iy0, iy0 + 1, iy0 + 1])
    w = np.stack([(1 - ty) * (1 - tx), (1 - ty) * tx, ty * (1 - tx), ty * tx])
    valid = (ixs >= 0) & (ixs < grid.n_x) & (iys >= 0) & (iys < grid.n_y)
    w = np.where(valid, w, 0.0)
    idx = np.clip(iys, 0, grid.n_y - 1) * grid.n_x + np.clip(ixs, 0, grid.n_x - 1)
    return idx, w


@dataclass(frozen=True)
class Propagator:
    """Attenuated parallel-beam projector pair for one grid/sinogram pairing."""

    grid: GridSpec
    sino_spec: SinogramSpec
    alpha_total: Field
    alpha_act: Field
    step: float | None = None

    def __post_init__(self):
        require_same_grid(self.alpha_total, self.alpha_act)
        if self.alpha_total.grid != self.grid:
            raise ValueError("attenuation fields must live on the propagator grid")
        if self.sino_spec.n_z != self.grid.n_z:
            raise ValueError("sinogram n_z must match grid n_z")
        if np.any(self.alpha_total.values < 0) or np.any(self.alpha_act.values < 0):
            raise ValueError("attenuation fields must be non-negative")
        if self.step is None:
            object.__setattr__(self, "step", 0.5 * self.grid.voxel_size)
        elif not self.step > 0:
            raise ValueError("ray step must be positive")

    @classmethod
    def with_disk_attenuation(
        cls,
        grid: GridSpec,
        sino_spec: SinogramSpec | None = None,
        alpha: float = 0.001,
        n_theta: int = 360,
        coverage_deg: float = 360.0,
    ) -> "Propagator":
        if sino_spec is None:
            sino_spec = default_sinogram_spec(grid, n_theta, coverage_deg)
        a_total, a_act = disk_attenuation_fields(grid, alpha)
        return cls(grid, sino_spec, a_total, a_act)

    @property
    def backward_scale(self) -> float:
        """Quadrature factor turning the transposed stencil into the adjoint
        under the physical inner products: d(rho) d(theta) / h^2."""
        h = self.grid.voxel_size
        return self.sino_spec.delta_rho * self.sino_spec.angle_weight / (h * h)

    @cached_property
    def _ray_s(self) -> np.ndarray:
        """Arc-length samples shared by every ray, covering the grid diagonal."""
        half = 0.5 * math.hypot(self.grid.extent_x, self.grid.extent_y)
        n_steps = int(math.ceil(2.0 * half / self.step))
        return (np.arange(n_steps) + 0.5) * self.step - half

    def _angle_taps(self, theta: float):
        """Bilinear taps of every sample point of every ray at one angle."""
        rho = self.sino_spec.rho_centers
        s = self._ray_s
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        # transverse axis (cos, sin); beam direction (-sin, cos)
        x = rho[:, None] * cos_t - s[None, :] * sin_t
        y = rho[:, None] * sin_t + s[None, :] * cos_t
        return _bilinear_taps(self.grid, x, y)

    def _attenuation(self, idx, w, alpha_slice: np.ndarray) -> np.ndarray | None:
        """exp(-optical depth) at each sample; None when the slice has no
        attenuation.  Depth accumulates from the beam entry with midpoint
        weighting of the current step."""
        if not alpha_slice.any():
            return None
        a = (alpha_slice.reshape(-1)[idx] * w).sum(axis=0)
        tau = self.step * (np.cumsum(a, axis=1) - 0.5 * a)
        return np.exp(-tau)

    @cached_property
    def _z_shared(self) -> bool:
        """True when both alpha fields are identical across z slices."""
        at, aa = self.alpha_total.values, self.alpha_act.values
        return bool(
            np.all(at == at[0:1]) and np.all(aa == aa[0:1])
        )

    def forward(self, a: Field) -> Sinogram:
        """Adjoint projection P a: absorption-weighted attenuated line
        integrals of a tomogram-space field."""
        if a.grid != self.grid:
            raise ValueError("field grid does not match propagator grid")
        out = np.zeros(self.sino_spec.shape)
        u = self.alpha_act.values * a.values  # (n_z, n_y, n_x)
        u_flat = u.reshape(self.grid.n_z, -1)
        at = self.alpha_total.values
        for j, theta in enumerate(self.sino_spec.angles):
            idx, w = self._angle_taps(theta)
            attn_shared = self._attenuation(idx, w, at[0]) if self._z_shared else None
            for z in range(self.grid.n_z):
                attn = attn_shared if self._z_shared else self._attenuation(idx, w, at[z])
                vals = (u_flat[z][idx] * w).sum(axis=0)
                if attn is not None:
                    vals = vals * attn
                out[z, j, :] = self.step * vals.sum(axis=-1)
        return Sinogram(self.sino_spec, out)

    def backward(self, g: Sinogram) -> Field:
        """Backpropagation P* g: volumetric dose delivered by a sinogram."""
        if g.spec != self.sino_spec:
            raise ValueError("sinogram spec does not match propagator spec")
        n_vox = self.grid.n_x * self.grid.n_y
        acc = np.zeros((self.grid.n_z, n_vox))
        at = self.alpha_total.values
        for j, theta in enumerate(self.sino_spec.angles):
            idx, w = self._angle_taps(theta)
            flat_idx = idx.reshape(-1)
            attn_shared = self._attenuation(idx, w, at[0]) if self._z_shared else None
            for z in range(self.grid.n_z):
                attn = attn_shared if self._z_shared else self._attenuation(idx, w, at[z])
                coef = g.values[z, j][:, None] * self.step
                if attn is not None:
                    coef = coef * attn
                acc[z] += np.bincount(
                    flat_idx, weights=(w * coef).reshape(-1), minlength=n_vox
                )
        dose = acc.reshape(self.grid.shape) * self.alpha_act.values * self.backward_scale
        return Field(self.grid, dose, unit="J/cm^3")


def tomogram_inner(a: Field, b: Field) -> float:
    """Inner product with the voxel-volume quadrature weight."""
    require_same_grid(a, b)
    return float(np.vdot(a.values, b.values)) * a.grid.voxel_volume


def sinogram_inner(u: Sinogram, v: Sinogram, grid: GridSpec) -> float:
    """Inner product with the (rho, theta, z') quadrature weight; the z'
    spacing equals the voxel size of the paired grid."""
    if u.spec != v.spec:
        raise ValueError("sinogram spec mismatch")
    return float(np.vdot(u.values, v.values)) * u.spec.sample_measure * grid.voxel_size


def memory_estimate(prop: Propagator, bytes_per_entry: int = HEURISTIC_BYTES_PER_ENTRY) -> int:
    """Rough bytes needed to materialize the coupling matrix, using the
    one-line-of-voxels-per-sample heuristic and a compact COO layout."""
    n_t_line = max(prop.grid.n_x, prop.grid.n_y)
    return prop.sino_spec.n_samples * n_t_line * bytes_per_entry


class SparseOperator:
    """Materialized coupling between sinogram samples and tomogram voxels.

    ``apply`` reproduces the ray-traced backward propagation and
    ``transpose_apply`` the forward, each per z slice.  When the attenuation
    fields are z-invariant a single slice matrix is shared by all slices.
    """

    def __init__(
        self,
        grid,
        sino_spec,
        slice_matrices,
        shared: bool,
        adjoint_scale: float,
        alpha_total: Field | None = None,
        alpha_act: Field | None = None,
    ):
        self.grid = grid
        self.sino_spec = sino_spec
        self._mats = slice_matrices  # CSR, shape (n_y*n_x, n_theta*n_rho)
        self._mats_t = [m.T.tocsr() for m in slice_matrices]
        self.shared = shared
        self.adjoint_scale = adjoint_scale
        self.alpha_total = alpha_total
        self.alpha_act = alpha_act

    @property
    def dims(self) -> tuple[int, int]:
        """(tomogram voxels, sinogram samples) of the full operator."""
        return (self.grid.n_voxels, self.sino_spec.n_samples)

    @property
    def nnz(self) -> int:
        """Logical non-zeros of the full operator (shared slices counted per z)."""
        per_slice = [m.nnz for m in self._mats]
        if self.shared:
            return per_slice[0] * self.grid.n_z
        return sum(per_slice)

    @property
    def stored_bytes(self) -> int:
        total = 0
        for m in list(self._mats) + list(self._mats_t):
            total += m.data.nbytes + m.indices.nbytes + m.indptr.nbytes
        return total

    def _mat(self, z: int) -> sp.csr_matrix:
        return self._mats[0] if self.shared else self._mats[z]

    def _mat_t(self, z: int) -> sp.csr_matrix:
        return self._mats_t[0] if self.shared else self._mats_t[z]

    def apply(self, g: Sinogram) -> Field:
        return self.backward(g)

    def transpose_apply(self, a: Field) -> Sinogram:
        return self.forward(a)

    def backward(self, g: Sinogram) -> Field:
        if g.spec != self.sino_spec:
            raise ValueError("sinogram spec does not match operator spec")
        nz = self.grid.n_z
        gv = g.values.reshape(nz, -1)
        if self.shared:
            dose = (self._mats[0] @ gv.T).T
        else:
            dose = np.stack([self._mats[z] @ gv[z] for z in range(nz)])
        return Field(self.grid, dose.reshape(self.grid.shape), unit="J/cm^3")

    def forward(self, a: Field) -> Sinogram:
        if a.grid != self.grid:
            raise ValueError("field grid does not match operator grid")
        nz = self.grid.n_z
        av = a.values.reshape(nz, -1)
        if self.shared:
            sino = (self._mats_t[0] @ av.T).T
        else:
            sino = np.stack([self._mats_t[z] @ av[z] for z in range(nz)])
        return Sinogram(self.sino_spec, self.adjoint_scale * sino.reshape(self.sino_spec.shape))


def build_matrix(prop: Propagator, max_bytes: int = _DEFAULT_BUILD_LIMIT) -> SparseOperator:
    """Materialize the propagator as sparse slice matrices.

    Refuses (with the estimate in the message) when the projected build size
    exceeds ``max_bytes``.
    """
    shared = prop._z_shared
    slices = [0] if shared else list(range(prop.grid.n_z))
    n_t_line = max(prop.grid.n_x, prop.grid.n_y)
    slice_samples = prop.sino_spec.n_rho * prop.sino_spec.n_theta
    est = slice_samples * n_t_line * _BUILD_BYTES_PER_ENTRY * len(slices)
    if est > max_bytes:
        raise MemoryError(
            f"estimated sparse build size {est / 1e9:.2f} GB exceeds limit "
            f"{max_bytes / 1e9:.2f} GB; raise max_bytes or shrink the problem"
        )

    spec = prop.sino_spec
    n_vox = prop.grid.n_x * prop.grid.n_y
    at = prop.alpha_total.values
    aa = prop.alpha_act.values
    mats = []
    for z in slices:
        rows, cols, data = [], [], []
        for j, theta in enumerate(spec.angles):
            idx, w = prop._angle_taps(theta)
            attn = prop._attenuation(idx, w, at[z])
            coef = w * prop.step if attn is None else w * (attn * prop.step)
            ray = j * spec.n_rho + np.arange(spec.n_rho)
            ray_idx = np.broadcast_to(ray[None, :, None], idx.shape)
            keep = coef != 0.0
            rows.append(ray_idx[keep])
            cols.append(idx[keep])
            data.append(coef[keep])
        stencil = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(slice_samples, n_vox),
        ).tocsr()
        back = stencil.T.tocsr()
        scale = sp.diags(aa[z].reshape(-1) * prop.backward_scale)
        back = scale @ back
        back.eliminate_zeros()
        back.sort_indices()
        mats.append(back)
    return SparseOperator(
        prop.grid,
        spec,
        mats,
        shared,
        adjoint_scale=1.0 / prop.backward_scale,
        alpha_total=prop.alpha_total,
        alpha_act=prop.alpha_act,
    )
