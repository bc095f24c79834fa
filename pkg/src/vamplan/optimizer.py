"""Projected gradient descent over sinograms with hard feasibility constraints.

Each iteration evaluates the dose and loss at the current iterate, then steps
against the analytic gradient and projects back onto the feasible set.  The
loop stops on exact zero loss, on the trailing-window convergence test, or at
the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import Field
from .loss import LossReport, ProblemSpec, loss, loss_gradient
from .propagation import Sinogram

CONVERGENCE_WINDOW = 5
CONVERGENCE_RATIO = 0.001

TERM_ZERO_LOSS = "zero_loss"
TERM_CONVERGED = "converged"
TERM_MAX_ITERS = "max_iters"

QUANTIZE_NEVER = "never"
QUANTIZE_FINAL = "final"
QUANTIZE_EVERY_STEP = "every_step"


@dataclass(frozen=True)
class FeasibleSet:
    """Hard sinogram constraints: clamp range plus optional bit-depth lattice.

    The quantization lattice has spacing (h_max - h_min) / 2^bit_depth; it is
    applied per ``quantize_mode``: never, once after the optimization loop
    (default when a bit depth is set), or inside every projection.
    """

    h_min: float = 0.0
    h_max: float | None = None
    bit_depth: int | None = None
    quantize_mode: str | None = None

    def __post_init__(self):
        if self.h_min < 0:
            raise ValueError("h_min must be >= 0")
        if self.h_max is not None and not self.h_max > self.h_min:
            raise ValueError("h_max must exceed h_min")
        if self.bit_depth is not None and self.bit_depth < 1:
            raise ValueError("bit_depth must be a positive integer")
        if self.quantize_mode is None:
            mode = QUANTIZE_FINAL if self.bit_depth is not None else QUANTIZE_NEVER
            object.__setattr__(self, "quantize_mode", mode)
        elif self.quantize_mode not in (QUANTIZE_NEVER, QUANTIZE_FINAL, QUANTIZE_EVERY_STEP):
            raise ValueError(f"unknown quantize_mode {self.quantize_mode!r}")

    def project_values(self, values: np.ndarray, quantize: bool = False) -> np.ndarray:
        hi = np.inf if self.h_max is None else self.h_max
        out = np.clip(values, self.h_min, hi)
        if quantize:
            if self.bit_depth is None:
                return out
            if self.h_max is None:
                raise ValueError("quantization needs h_max to define the lattice")
            unit = (self.h_max - self.h_min) / 2**self.bit_depth
            out = self.h_min + np.round((out - self.h_min) / unit) * unit
        return out


def project_feasible(fs: FeasibleSet, g: Sinogram, quantize: bool = False) -> Sinogram:
    """Clamp (and optionally lattice-round) a sinogram; idempotent."""
    return g.with_values(fs.project_values(g.values, quantize=quantize))


def converged(
    loss_history,
    k: int,
    window: int = CONVERGENCE_WINDOW,
    ratio: float = CONVERGENCE_RATIO,
) -> bool:
    """Trailing-window convergence test: the mean absolute per-iteration loss
    change over the last ``window`` steps is at most ``ratio`` of the current
    loss.  False until the window is filled."""
    if k < window or k >= len(loss_history):
        return False
    changes = [abs(loss_history[i] - loss_history[i - 1]) for i in range(k - window + 1, k + 1)]
    return sum(changes) / window <= ratio * loss_history[k]


@dataclass(frozen=True)
class OptimizerConfig:
    """Fixed-step descent settings.  ``check_convergence`` exists for
    protocols that run to a fixed iteration count regardless of plateaus."""

    eta: float
    max_iters: int
    check_convergence: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("step size eta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class RunRecord:
    """Everything observed during one optimization run."""

    loss_history: list[float] = field(default_factory=list)
    violation_history: list[float] = field(default_factory=list)
    max_excess_history: list[float] = field(default_factory=list)
    eta_history: list[float] = field(default_factory=list)
    sinogram: Sinogram | None = None
    dose: Field | None = None
    response_field: Field | None = None
    termination: str = ""
    quantized_loss: float | None = None

    @property
    def iterations(self) -> int:
        """Number of gradient steps taken."""
        return max(len(self.loss_history) - 1, 0)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]

    def append(self, report: LossReport, eta: float) -> None:
        self.loss_history.append(report.value)
        self.violation_history.append(report.violation_fraction)
        self.max_excess_history.append(report.max_excess)
        self.eta_history.append(eta)


def _evaluate(spec: ProblemSpec, prop, g: Sinogram, k: int):
    f = prop.backward(g)
    grad, report = loss_gradient(spec, f, prop, k)
    if not np.all(np.isfinite(grad.values)):
        raise FloatingPointError(f"non-finite loss gradient at iteration {k}")
    return f, grad, report


def pgd_step(
    g: Sinogram,
    spec: ProblemSpec,
    prop,
    fs: FeasibleSet,
    eta: float,
    k: int,
) -> tuple[Sinogram, LossReport]:
    """One descent-and-project update.  The returned report describes the
    iterate *before* the step."""
    _, grad, report = _evaluate(spec, prop, g, k)
    quantize = fs.quantize_mode == QUANTIZE_EVERY_STEP
    g_next = project_feasible(fs, g.with_values(g.values - eta * grad.values), quantize)
    return g_next, report


def run(
    spec: ProblemSpec,
    prop,
    fs: FeasibleSet,
    cfg: OptimizerConfig,
    g0: Sinogram,
) -> RunRecord:
    """Full projected-descent loop from a feasible initial sinogram."""
    record = RunRecord()
    g = g0
    k = 0
    quantize_each = fs.quantize_mode == QUANTIZE_EVERY_STEP
    while True:
        _, grad, report = _evaluate(spec, prop, g, k)
        record.append(report, cfg.eta)
        if report.value == 0.0:
            record.termination = TERM_ZERO_LOSS
            break
        if cfg.check_convergence and converged(record.loss_history, k):
            record.termination = TERM_CONVERGED
            break
        if k >= cfg.max_iters:
            record.termination = TERM_MAX_ITERS
            break
        g = project_feasible(fs, g.with_values(g.values - cfg.eta * grad.values), quantize_each)
        k += 1

    if fs.quantize_mode == QUANTIZE_FINAL and fs.bit_depth is not None:
        g = project_feasible(fs, g, quantize=True)
        record.quantized_loss = loss(spec, prop.backward(g), k).value

    record.sinogram = g
    record.dose = prop.backward(g)
    record.response_field = Field(
        spec.grid, spec.response.respond(record.dose.values), unit="response"
    )
    return record
