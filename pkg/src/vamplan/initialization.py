"""Initial sinogram generation.

Two routes: an analytic one that ramp-filters the forward projection of the
absorption-compensated inverse-response target (a filtered-backprojection
inverse, valid in the weak-attenuation regime), and an optional iterative
least-squares route that only needs matrix-vector products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Field
from .optimizer import FeasibleSet, project_feasible
from .loss import ProblemSpec
from .propagation import Sinogram, SinogramSpec

RAMLAK = "ramlak"
SHEPP_LOGAN = "shepp-logan"


def _pad_length(n_rho: int) -> int:
    """Next power of two >= 2 * n_rho, suppressing circular wraparound."""
    return 1 << (2 * n_rho - 1).bit_length()


@dataclass(frozen=True)
class RampFilter:
    """Frequency response of the transverse ramp filter on the padded grid."""

    length: int
    response: np.ndarray  # per np.fft.fftfreq ordering, cycles/cm

    def __post_init__(self):
        object.__setattr__(self, "response", np.asarray(self.response, dtype=np.float64))


def make_ramp_filter(n_rho: int, delta_rho: float, kind: str = RAMLAK) -> RampFilter:
    n_pad = _pad_length(n_rho)
    freq = np.fft.fftfreq(n_pad, d=delta_rho)
    resp = np.abs(freq)
    if kind == SHEPP_LOGAN:
        resp = resp * np.sinc(freq * delta_rho)
    elif kind != RAMLAK:
        raise ValueError(f"unknown ramp filter kind {kind!r}")
    return RampFilter(length=n_pad, response=resp)


def ram_lak_filter(g: Sinogram, kind: str = RAMLAK) -> Sinogram:
    """Filter each (theta, z') row along rho in the frequency domain.

    Rows are zero-padded to the filter length before the FFT and truncated
    back afterwards.
    """
    filt = make_ramp_filter(g.spec.n_rho, g.spec.delta_rho, kind)
    # |freq| on the rfft grid equals the first half of the full-grid response
    resp_r = filt.response[: filt.length // 2 + 1]
    spectra = np.fft.rfft(g.values, n=filt.length, axis=-1)
    rows = np.fft.irfft(spectra * resp_r, n=filt.length, axis=-1)
    return Sinogram(g.spec, rows[..., : g.spec.n_rho])


def fbp_calibration(spec: SinogramSpec) -> float:
    """Constant relating the ramp-filtered backprojection to the identity:
    total angular coverage over pi (2.0 for a full turn)."""
    return spec.n_theta * spec.angle_weight / np.pi


def analytic_init_unconstrained(
    target: Field, problem: ProblemSpec, prop, filter_kind: str = RAMLAK
) -> Sinogram:
    """Approximate unconstrained optimum: ramp-filtered forward projection of
    the inverse-response target divided by the squared absorption field.

    ``target`` is the response field to reconstruct.  It is passed separately
    from the problem because unilateral-band constructions park their band
    centers at unreachable far limits; initialization aims at the raw target.

    The absorption division is performed only where the absorption is
    positive; the would-be infinities outside the region of interest are
    suppressed to zero.  Rejects problems whose weights are supported where
    the absorption vanishes, since no exposure can produce a response there.
    """
    if target.grid != problem.grid:
        raise ValueError("init target grid does not match problem grid")
    alpha = prop.alpha_act.values
    support = problem.weights.support()
    if np.any(support & (alpha == 0)):
        raise ValueError(
            "weights are supported where the active absorption is zero; "
            "the target is not physically reachable there"
        )
    dose = problem.response.invert(target.values)
    operand = np.zeros(problem.grid.shape)
    positive = alpha > 0
    operand[positive] = dose[positive] / alpha[positive] ** 2
    g = prop.forward(Field(problem.grid, operand))
    g = ram_lak_filter(g, filter_kind)
    return g.with_values(g.values / fbp_calibration(g.spec))


def analytic_init(
    target: Field,
    problem: ProblemSpec,
    prop,
    feasible: FeasibleSet | None = None,
    filter_kind: str = RAMLAK,
) -> Sinogram:
    """Initial iterate: the unconstrained approximation projected onto the
    feasible set."""
    if feasible is None:
        feasible = FeasibleSet()
    g = analytic_init_unconstrained(target, problem, prop, filter_kind)
    return project_feasible(feasible, g)


@dataclass(frozen=True)
class LsqResult:
    sinogram: Sinogram
    residual_norms: np.ndarray  # length iters + 1, starting at the zero iterate


def lsq_init(op, target_dose: Field, iters: int) -> LsqResult:
    """Least-squares estimate of the sinogram whose backprojection matches a
    dose field, via conjugate gradients on the normal equations.

    Uses only ``backward``/``forward`` applications of ``op`` (quadrature-
    weighted adjoint pair), so it works with either the ray tracer or a
    materialized sparse operator.  The residual 2-norm is non-increasing.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if target_dose.grid != op.grid:
        raise ValueError("target dose grid does not match operator grid")
    dv = op.grid.voxel_volume
    ds = op.sino_spec.sample_measure * op.grid.voxel_size

    g = np.zeros(op.sino_spec.shape)
    r = target_dose.values.copy()  # residual b - A g in tomogram space
    s = op.forward(Field(op.grid, r)).values  # A* r in sinogram space
    d = s.copy()
    gamma = float(np.vdot(s, s)) * ds
    norms = [float(np.sqrt(np.vdot(r, r) * dv))]
    for _ in range(iters):
        if gamma == 0.0:
            norms.append(norms[-1])
            continue
        t = op.backward(Sinogram(op.sino_spec, d)).values
        denom = float(np.vdot(t, t)) * dv
        if denom == 0.0:
            norms.append(norms[-1])
            continue
        alpha = gamma / denom
        g = g + alpha * d
        r = r - alpha * t
        s = op.forward(Field(op.grid, r)).values
        gamma_new = float(np.vdot(s, s)) * ds
        d = s + (gamma_new / gamma) * d
        gamma = gamma_new
        norms.append(float(np.sqrt(np.vdot(r, r) * dv)))
    return LsqResult(Sinogram(op.sino_spec, g), np.asarray(norms))
