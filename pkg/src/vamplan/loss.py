"""Band-tolerance Lp loss over dose response, with its analytic gradient.

The loss penalizes only the part of the absolute response error that exceeds
the local tolerance band:

    L = ( integral over V of  w * (|M(f) - f_T| - eps)^p  dV ) ^ (q/p)

where V is the set of voxels violating the band.  The gradient with respect
to the sinogram is the forward propagation of the pointwise integrand

    q * L^((q-p)/q) * P( v * w * E^(p-1) * sgn(M(f) - f_T) * dM/df )

returned in the same per-sample convention the descent update consumes
directly (no extra sample-measure factor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Field, GridSpec, require_same_grid
from .propagation import Sinogram, zero_sinogram
from .response import ResponseModel

# Floor applied to E^(p-1) inside the gradient when p < 1, where the
# exponent is singular as E -> 0+.
_GRADIENT_EXCESS_FLOOR = 1e-9


@dataclass(frozen=True)
class WeightSchedule:
    """Per-voxel weights, optionally alternating between two fields by
    iteration parity (even iterations use ``even``, odd use ``odd``)."""

    even: Field
    odd: Field | None = None

    def __post_init__(self):
        if np.any(self.even.values < 0):
            raise ValueError("weights must be non-negative")
        if self.odd is not None:
            require_same_grid(self.even, self.odd)
            if np.any(self.odd.values < 0):
                raise ValueError("weights must be non-negative")

    @classmethod
    def constant(cls, weights: Field) -> "WeightSchedule":
        return cls(even=weights)

    @classmethod
    def alternating(cls, even: Field, odd: Field) -> "WeightSchedule":
        return cls(even=even, odd=odd)

    @property
    def mode(self) -> str:
        return "constant" if self.odd is None else "alternating"

    @property
    def grid(self) -> GridSpec:
        return self.even.grid

    def at(self, k: int) -> Field:
        if self.odd is None or k % 2 == 0:
            return self.even
        return self.odd

    def support(self) -> np.ndarray:
        """Union of the weight supports across the schedule."""
        sup = self.even.values > 0
        if self.odd is not None:
            sup = sup | (self.odd.values > 0)
        return sup


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines the soft-constraint objective: target and
    tolerance fields (response units), weights, exponents, response model."""

    target: Field
    tolerance: Field
    weights: WeightSchedule
    p: float
    q: float
    response: ResponseModel

    def __post_init__(self):
        require_same_grid(self.target, self.tolerance, self.weights.even)
        if np.any(self.tolerance.values < 0):
            raise ValueError("tolerance must be non-negative")
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.q > 0:
            raise ValueError("q must be positive")

    @property
    def grid(self) -> GridSpec:
        return self.target.grid


@dataclass(frozen=True)
class LossReport:
    """Loss value plus the diagnostics logged per iteration."""

    value: float
    inner_integral: float
    violation_fraction: float
    max_excess: float


def _band_terms(spec: ProblemSpec, f: Field, k: int):
    """Signed response error, band excess E, weights and violation mask."""
    if f.grid != spec.grid:
        raise ValueError("dose field grid does not match problem grid")
    signed = spec.response.respond(f.values) - spec.target.values
    excess = np.abs(signed) - spec.tolerance.values
    w = spec.weights.at(k).values
    viol = (excess > 0) & (w > 0)
    return signed, excess, w, viol


def violation_set(spec: ProblemSpec, f: Field, k: int = 0) -> Field:
    """Indicator of voxels whose response error leaves the tolerance band
    (restricted to positively weighted voxels at iteration k)."""
    _, _, _, viol = _band_terms(spec, f, k)
    return Field(spec.grid, viol.astype(np.float64))


def loss(spec: ProblemSpec, f: Field, k: int = 0) -> LossReport:
    signed, excess, w, viol = _band_terms(spec, f, k)
    dv = spec.grid.voxel_volume
    if not viol.any():
        return LossReport(0.0, 0.0, 0.0, 0.0)
    e_v = excess[viol]
    inner = float(np.sum(w[viol] * e_v**spec.p)) * dv
    value = inner ** (spec.q / spec.p)
    return LossReport(
        value=value,
        inner_integral=inner,
        violation_fraction=float(viol.sum()) / spec.grid.n_voxels,
        max_excess=float(e_v.max()),
    )


def loss_gradient(
    spec: ProblemSpec, f: Field, prop, k: int = 0
) -> tuple[Sinogram, LossReport]:
    """Analytic loss gradient with respect to the sinogram, plus the report
    for the same iterate.  ``prop`` is anything exposing ``forward``."""
    signed, excess, w, viol = _band_terms(spec, f, k)
    dv = spec.grid.voxel_volume
    if not viol.any():
        return zero_sinogram(prop.sino_spec), LossReport(0.0, 0.0, 0.0, 0.0)

    e_v = excess[viol]
    inner = float(np.sum(w[viol] * e_v**spec.p)) * dv
    value = inner ** (spec.q / spec.p)
    report = LossReport(
        value=value,
        inner_integral=inner,
        violation_fraction=float(viol.sum()) / spec.grid.n_voxels,
        max_excess=float(e_v.max()),
    )

    e_grad = np.maximum(e_v, _GRADIENT_EXCESS_FLOOR) if spec.p < 1 else e_v
    integrand = np.zeros(spec.grid.shape)
    integrand[viol] = (
        w[viol]
        * e_grad ** (spec.p - 1.0)
        * np.sign(signed[viol])
        * spec.response.derivative(f.values[viol])
    )
    prefactor = spec.q * value ** ((spec.q - spec.p) / spec.q)
    grad = prop.forward(Field(spec.grid, integrand))
    return grad.with_values(prefactor * grad.values), report


def restrict_to_region(spec: ProblemSpec, region: Field) -> ProblemSpec:
    """Copy of the problem with every weight field multiplied by a region
    mask.  Used to confine the objective to the physically reachable region
    of interest (typically the support of the active absorption)."""
    require_same_grid(spec.target, region)
    even = spec.weights.even.with_values(spec.weights.even.values * region.values)
    odd = spec.weights.odd
    if odd is not None:
        odd = odd.with_values(odd.values * region.values)
    return ProblemSpec(
        target=spec.target,
        tolerance=spec.tolerance,
        weights=WeightSchedule(even=even, odd=odd),
        p=spec.p,
        q=spec.q,
        response=spec.response,
    )


def composite_loss(
    terms: list[tuple[float, ProblemSpec]], f: Field, prop, k: int = 0
) -> tuple[float, Sinogram]:
    """Weighted sum of several band losses and its gradient."""
    if not terms:
        raise ValueError("composite loss needs at least one term")
    grid = terms[0][1].grid
    for _, spec in terms:
        if spec.grid != grid:
            raise ValueError("all composite terms must share the grid")
    total = 0.0
    grad_total = np.zeros(prop.sino_spec.shape)
    for omega, spec in terms:
        grad, report = loss_gradient(spec, f, prop, k)
        total += omega * report.value
        grad_total += omega * grad.values
    return total, Sinogram(prop.sino_spec, grad_total)
