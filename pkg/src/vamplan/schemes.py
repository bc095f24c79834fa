"""Presets mapping the published projection-optimization schemes onto the
band-loss problem, plus a literal reference oracle for the object-space
scheme and the binary-mask erosion its penalty cousin relies on.

The three presets are dose matching (real-valued target, plain L1 response
error), penalty minimization (binary target, eroded in/out regions with a
de-emphasized boundary buffer, unilateral dose thresholds, L1), and
object-space model optimization (binary target, unilateral thresholds, L2,
half step, optional alternate handling of over/underdose by iteration
parity).  Unilateral thresholds are expressed as tolerance bands whose far
limit sits so far out it can never be reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import Field, constant_field
from .loss import ProblemSpec, WeightSchedule
from .propagation import Propagator, Sinogram
from .response import LINEAR_IDENTITY, ResponseModel

# Band limit placed on the physically unreachable side of a unilateral
# constraint, in dose/response units.
FAR_LIMIT = 1.0e6

DM = "DM"
PM = "PM"
OSMO = "OSMO"


@dataclass(frozen=True)
class SchemePreset:
    """A generated problem plus the scheme's recommended optimizer settings."""

    name: str
    problem: ProblemSpec
    eta: float | None
    notes: str = ""


def _require_binary(mask: Field, what: str) -> np.ndarray:
    v = mask.values
    if not np.all((v == 0) | (v == 1)):
        raise ValueError(f"{what} must be binary (values in {{0, 1}})")
    return v > 0


def erode(mask: Field, width: int) -> Field:
    """Morphological erosion by a (2*width+1) square (cube for n_z > 1).

    A voxel survives only when its full neighborhood lies inside the mask;
    the outside of the grid counts as background.
    """
    binary = _require_binary(mask, "erosion mask")
    if width < 0:
        raise ValueError("erosion width must be >= 0")
    if width == 0:
        return mask.with_values(binary.astype(np.float64))
    size = 2 * width + 1
    structure = np.ones((1, size, size) if mask.grid.n_z == 1 else (size, size, size))
    eroded = ndimage.binary_erosion(binary, structure=structure, border_value=0)
    return mask.with_values(eroded.astype(np.float64))


def dm_preset(target: Field, response: ResponseModel) -> SchemePreset:
    """Dose matching: plain L1 norm of the response error, no tolerance,
    uniform unit weights, the given (nonlinear) response model."""
    if not response.is_identity:
        if np.any(target.values <= response.A) or np.any(target.values >= response.K):
            raise ValueError("dose-matching target must lie strictly inside the response range")
    grid = target.grid
    problem = ProblemSpec(
        target=target,
        tolerance=constant_field(grid, 0.0, unit=target.unit),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=1.0,
        q=1.0,
        response=response,
    )
    return SchemePreset(DM, problem, eta=None, notes="L1 response matching")


def pm_preset(
    binary_target: Field,
    d_h: float,
    d_l: float,
    rho1: float,
    rho2: float,
    erosion_width: int = 2,
    far_limit: float = FAR_LIMIT,
) -> SchemePreset:
    """Penalty minimization: keep dose above d_h on the eroded target, below
    d_l on the eroded complement, ignore the boundary buffer between them."""
    if not (d_h > d_l > 0):
        raise ValueError("need d_h > d_l > 0")
    if rho1 < 0 or rho2 < 0:
        raise ValueError("region weights must be non-negative")
    target_mask = _require_binary(binary_target, "binary target")
    grid = binary_target.grid

    r1 = erode(binary_target, erosion_width).values > 0
    r2 = erode(binary_target.with_values(1.0 - binary_target.values), erosion_width).values > 0
    if not r1.any():
        raise ValueError(f"erosion width {erosion_width} emptied the in-part region R1")
    if not r2.any():
        raise ValueError(f"erosion width {erosion_width} emptied the out-of-part region R2")

    # R1: band [d_h, far]; R2: band [-far, d_l]; buffer carries no weight.
    f_t = np.zeros(grid.shape)
    eps = np.zeros(grid.shape)
    f_t[r1] = 0.5 * (d_h + far_limit)
    eps[r1] = 0.5 * (far_limit - d_h)
    f_t[r2] = 0.5 * (d_l - far_limit)
    eps[r2] = 0.5 * (d_l + far_limit)
    w = np.zeros(grid.shape)
    w[r1] = rho1
    w[r2] = rho2

    problem = ProblemSpec(
        target=Field(grid, f_t, unit="J/cm^3"),
        tolerance=Field(grid, eps, unit="J/cm^3"),
        weights=WeightSchedule.constant(Field(grid, w)),
        p=1.0,
        q=1.0,
        response=ResponseModel(variant=LINEAR_IDENTITY),
    )
    return SchemePreset(
        PM, problem, eta=None,
        notes=f"unilateral dose thresholds d_h={d_h}, d_l={d_l}; buffer width {erosion_width}",
    )


def osmo_preset(
    binary_target: Field,
    d_high: float,
    d_low: float,
    alternating: bool,
    far_limit: float = FAR_LIMIT,
) -> SchemePreset:
    """Object-space scheme as a band problem: p = q = 2, identity response,
    half step size; in-part dose floored at d_high, out-of-part ceiled at
    d_low.  ``alternating`` reproduces the original parity split: even
    iterations weight only the out-of-part region, odd only the in-part."""
    if not (d_high > d_low > 0):
        raise ValueError("need d_high > d_low > 0")
    ip = _require_binary(binary_target, "binary target")
    grid = binary_target.grid

    f_t = np.zeros(grid.shape)
    eps = np.zeros(grid.shape)
    # IP band [d_high, 2*far - d_high]; OFP band [-d_low, d_low] (dose is
    # non-negative, so only the d_low ceiling can ever activate).
    f_t[ip] = far_limit
    eps[ip] = far_limit - d_high
    eps[~ip] = d_low

    if alternating:
        schedule = WeightSchedule.alternating(
            even=Field(grid, (~ip).astype(np.float64)),
            odd=Field(grid, ip.astype(np.float64)),
        )
    else:
        schedule = WeightSchedule.constant(constant_field(grid, 1.0))

    problem = ProblemSpec(
        target=Field(grid, f_t, unit="J/cm^3"),
        tolerance=Field(grid, eps, unit="J/cm^3"),
        weights=schedule,
        p=2.0,
        q=2.0,
        response=ResponseModel(variant=LINEAR_IDENTITY),
    )
    return SchemePreset(
        OSMO, problem, eta=0.5,
        notes=f"unilateral dose thresholds D_h={d_high}, D_l={d_low}; "
        f"{'alternating' if alternating else 'constant'} weights",
    )


@dataclass(frozen=True)
class OsmoState:
    """State of the literal object-space iteration: the model field, the
    parity of the next half-cycle, thresholds, and the normalization toggle."""

    model: Field
    ip_mask: Field
    d_high: float
    d_low: float
    normalize: bool
    parity: int = 0

    @classmethod
    def from_target(
        cls, binary_target: Field, d_high: float, d_low: float, normalize: bool
    ) -> "OsmoState":
        _require_binary(binary_target, "binary target")
        if not (d_high > d_low > 0):
            raise ValueError("need d_high > d_low > 0")
        return cls(
            model=binary_target,
            ip_mask=binary_target,
            d_high=d_high,
            d_low=d_low,
            normalize=normalize,
        )


def osmo_sinogram(state: OsmoState, prop: Propagator) -> Sinogram:
    """The non-negative sinogram the current model would be printed with."""
    g = prop.forward(state.model)
    return g.with_values(np.maximum(0.0, g.values))


def osmo_reference_step(state: OsmoState, prop: Propagator) -> OsmoState:
    """One literal half-cycle of the published object-space iteration.

    Reconstructs the dose from the clamped forward projection of the model
    (optionally max-normalized), then subtracts the out-of-part overdose at
    even parity or adds the in-part underdose at odd parity.
    """
    g = osmo_sinogram(state, prop)
    f = prop.backward(g).values
    if state.normalize:
        peak = f.max()
        if peak > 0:
            f = f / peak
    ip = state.ip_mask.values > 0
    m = state.model.values.copy()
    if state.parity % 2 == 0:
        over = np.maximum(0.0, f - state.d_low)
        m[~ip] -= over[~ip]
    else:
        under = np.maximum(0.0, state.d_high - f)
        m[ip] += under[ip]
    return OsmoState(
        model=state.model.with_values(m),
        ip_mask=state.ip_mask,
        d_high=state.d_high,
        d_low=state.d_low,
        normalize=state.normalize,
        parity=state.parity + 1,
    )
