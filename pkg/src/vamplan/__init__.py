"""Projection planning for tomographic volumetric additive manufacturing.

Optimizes a non-negative sinogram so that the backpropagated dose response
matches a real-valued target within spatially varying tolerance bands.
"""

from .grids import (
    Field,
    GridSpec,
    constant_field,
    field_add,
    field_multiply,
    field_scale,
    field_stats,
    inscribed_disk_mask,
    make_grid,
)
from .response import LINEAR_IDENTITY, LOGISTIC, ResponseModel
from .propagation import (
    Propagator,
    Sinogram,
    SinogramSpec,
    SparseOperator,
    build_matrix,
    default_sinogram_spec,
    disk_attenuation_fields,
    memory_estimate,
    zero_sinogram,
)
from .loss import (
    LossReport,
    ProblemSpec,
    WeightSchedule,
    composite_loss,
    loss,
    loss_gradient,
    restrict_to_region,
    violation_set,
)
from .initialization import analytic_init, lsq_init, ram_lak_filter
from .optimizer import (
    FeasibleSet,
    OptimizerConfig,
    RunRecord,
    converged,
    pgd_step,
    project_feasible,
    run,
)
from . import metrics, phantoms, schemes

__version__ = "0.1.0"

__all__ = [
    "Field",
    "GridSpec",
    "make_grid",
    "inscribed_disk_mask",
    "field_stats",
    "constant_field",
    "field_add",
    "field_scale",
    "field_multiply",
    "ResponseModel",
    "LOGISTIC",
    "LINEAR_IDENTITY",
    "SinogramSpec",
    "Sinogram",
    "Propagator",
    "SparseOperator",
    "build_matrix",
    "memory_estimate",
    "default_sinogram_spec",
    "disk_attenuation_fields",
    "zero_sinogram",
    "ProblemSpec",
    "WeightSchedule",
    "LossReport",
    "loss",
    "loss_gradient",
    "restrict_to_region",
    "violation_set",
    "composite_loss",
    "ram_lak_filter",
    "analytic_init",
    "lsq_init",
    "FeasibleSet",
    "OptimizerConfig",
    "RunRecord",
    "project_feasible",
    "converged",
    "pgd_step",
    "run",
    "metrics",
    "phantoms",
    "schemes",
]
