"""Evaluation metrics, decoupled from the optimization objective.

Band-norm metrics at arbitrary (p, q) plus the limiting forms (violation
volume, maximum band excess), the legacy binary-print metrics, and weighted
error histograms/moments.  All metrics compare in response units through the
same response model as the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Field, require_same_grid
from .loss import ProblemSpec, WeightSchedule, loss
from .response import ResponseModel

BCLP = "bclp"
VIOLATION_VOLUME = "violation_volume"
MAX_EXCESS = "max_excess"
MOMENT = "moment"

_KINDS = (BCLP, VIOLATION_VOLUME, MAX_EXCESS, MOMENT)


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    flags: str = ""

    @property
    def empty(self) -> bool:
        return "empty" in self.flags


@dataclass(frozen=True)
class MetricSpec:
    """A band-norm style metric: target/tolerance/weight fields, a response
    model, and the norm exponents.  The limiting kinds (violation volume,
    max excess) require the weights to be a {0,1} region indicator."""

    kind: str
    target: Field
    tolerance: Field
    weights: Field
    response: ResponseModel
    p: float = 2.0
    q: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        require_same_grid(self.target, self.tolerance, self.weights)
        if self.kind in (VIOLATION_VOLUME, MAX_EXCESS):
            w = self.weights.values
            if not np.all((w == 0) | (w == 1)):
                raise ValueError(f"{self.kind} needs indicator weights in {{0, 1}}")

    def as_problem(self) -> ProblemSpec:
        return ProblemSpec(
            target=self.target,
            tolerance=self.tolerance,
            weights=WeightSchedule.constant(self.weights),
            p=self.p,
            q=self.q,
            response=self.response,
        )


def _excess(m: MetricSpec, f: Field) -> np.ndarray:
    if f.grid != m.target.grid:
        raise ValueError("field grid does not match metric grid")
    err = np.abs(m.response.respond(f.values) - m.target.values)
    return err - m.tolerance.values


def eval_metric(m: MetricSpec, f: Field) -> MetricResult:
    excess = _excess(m, f)
    w = m.weights.values
    viol = (excess > 0) & (w > 0)
    dv = m.target.grid.voxel_volume
    if m.kind == VIOLATION_VOLUME:
        return MetricResult(m.kind, float(np.sum(w[viol])) * dv)
    if m.kind == MAX_EXCESS:
        if not viol.any():
            return MetricResult(m.kind, 0.0, flags="empty")
        return MetricResult(m.kind, float(excess[viol].max()))
    if m.kind == MOMENT:
        return MetricResult(f"moment({m.p:g})", positive_moment(m.as_problem(), f, m.p))
    report = loss(m.as_problem(), f)
    return MetricResult(f"bclp(p={m.p:g},q={m.q:g})", report.value)


def jaccard(
    f: Field, response: ResponseModel, binary_target: Field, threshold: float
) -> MetricResult:
    """Intersection over union of the thresholded response and a binary target."""
    require_same_grid(f, binary_target)
    t = binary_target.values
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("jaccard needs a binary target")
    b = response.respond(f.values) >= threshold
    t = t > 0
    union = int(np.sum(b | t))
    if union == 0:
        return MetricResult("jaccard", 1.0, flags="empty_union")
    return MetricResult("jaccard", float(np.sum(b & t)) / union)


def voxel_error_rate(f: Field, response: ResponseModel, ip_mask: Field) -> MetricResult:
    """Fraction of all voxels that are out-of-part yet respond at or above
    the weakest in-part response."""
    require_same_grid(f, ip_mask)
    ip = ip_mask.values > 0
    if not np.all((ip_mask.values == 0) | (ip_mask.values == 1)):
        raise ValueError("ip_mask must be binary")
    if not ip.any():
        raise ValueError("in-part region is empty")
    fm = response.respond(f.values)
    floor = fm[ip].min()
    wrong = int(np.sum(fm[~ip] >= floor))
    return MetricResult("ver", wrong / ip.size)


def in_part_dose_range(f: Field, response: ResponseModel, ip_mask: Field) -> MetricResult:
    """Relative spread of the in-part response: 1 - min/max.  A response-unit
    analog of the normalized-dose uniformity metric (ratio form; this
    framework never renormalizes doses)."""
    require_same_grid(f, ip_mask)
    ip = ip_mask.values > 0
    if not ip.any():
        raise ValueError("in-part region is empty")
    fm = response.respond(f.values)[ip]
    top = fm.max()
    if top == 0:
        return MetricResult("ipdr", 0.0, flags="zero_response")
    return MetricResult("ipdr", float(1.0 - fm.min() / top))


@dataclass(frozen=True)
class Histogram:
    """Weighted-volume histogram of the band excess E (both signs)."""

    bin_edges: np.ndarray
    masses: np.ndarray  # w * dV accumulated per bin

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


def error_histogram(
    spec: ProblemSpec,
    f: Field,
    n_bins: int,
    value_range: tuple[float, float] | None = None,
    k: int = 0,
) -> Histogram:
    """Histogram of E = |M(f) - f_T| - eps over all voxels, each weighted by
    w * dV.  Values outside an explicit range are clipped into the end bins
    so the total mass is conserved."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if f.grid != spec.grid:
        raise ValueError("field grid does not match problem grid")
    excess = np.abs(spec.response.respond(f.values) - spec.target.values) - spec.tolerance.values
    w = spec.weights.at(k).values * spec.grid.voxel_volume
    if value_range is None:
        lo, hi = float(excess.min()), float(excess.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
    else:
        lo, hi = value_range
        excess = np.clip(excess, lo, hi)
    masses, edges = np.histogram(excess.reshape(-1), bins=n_bins, range=(lo, hi),
                                 weights=w.reshape(-1))
    return Histogram(bin_edges=edges, masses=masses)


def positive_moment(spec: ProblemSpec, f: Field, p: float, k: int = 0) -> float:
    """Exact (unbinned) p-th moment of the positive band excess, weighted by
    w * dV.  Equals the band loss raised to p/q."""
    if not p > 0:
        raise ValueError("p must be positive")
    if f.grid != spec.grid:
        raise ValueError("field grid does not match problem grid")
    excess = np.abs(spec.response.respond(f.values) - spec.target.values) - spec.tolerance.values
    w = spec.weights.at(k).values
    pos = excess > 0
    if not pos.any():
        return 0.0
    return float(np.sum(w[pos] * excess[pos] ** p)) * spec.grid.voxel_volume
