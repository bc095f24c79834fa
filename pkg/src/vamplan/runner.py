"""Config-driven drivers: assemble a problem, run or sweep it, write outputs.

Every run directory receives the initial and final sinograms, the dose /
response / signed-error fields, a convergence CSV, a metrics CSV, an error
histogram CSV, optional grayscale renders (PGM) and matplotlib figures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import figures, metrics, phantoms, schemes
from .config import ConfigError, RunConfig
from .fileio import (
    read_field,
    render_response_pgm,
    write_field,
    write_sinogram,
)
from .grids import Field, GridSpec, constant_field, inscribed_disk_mask, make_grid
from .initialization import analytic_init, analytic_init_unconstrained, lsq_init
from .loss import ProblemSpec, WeightSchedule, loss, restrict_to_region
from .optimizer import FeasibleSet, OptimizerConfig, RunRecord, project_feasible, run
from .propagation import (
    Propagator,
    SinogramSpec,
    build_matrix,
    disk_attenuation_fields,
)
from .response import LINEAR_IDENTITY, LOGISTIC, ResponseModel


@dataclass
class Assembled:
    """Everything a run needs, materialized from a config."""

    grid: GridSpec
    prop: object  # Propagator or SparseOperator, same call surface
    target: Field
    problem: ProblemSpec
    feasible: FeasibleSet
    optimizer: OptimizerConfig | None
    init_method: str
    init_filter: str
    lsq_iters: int
    eta_preset: float | None = None


def _build_grid(cfg: RunConfig) -> GridSpec:
    try:
        return make_grid(
            cfg.get_int("grid.nx", 128),
            cfg.get_int("grid.ny", 128),
            cfg.get_int("grid.nz", 1),
            cfg.get_float("grid.voxel_size_cm", 1.0 / 128),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_sino_spec(cfg: RunConfig, grid: GridSpec) -> SinogramSpec:
    return SinogramSpec.uniform(
        n_rho=cfg.get_int("sino.nrho", grid.n_x),
        n_theta=cfg.get_int("sino.ntheta", 360),
        n_z=grid.n_z,
        rho_extent=grid.extent_x,
        coverage_deg=cfg.get_float("sino.coverage_deg", 360.0),
        start_deg=cfg.get_float("sino.start_deg", 0.0),
    )


def _build_propagator(cfg: RunConfig, grid: GridSpec):
    spec = _build_sino_spec(cfg, grid)
    mode = cfg.get("prop.alpha_mode", "disk")
    alpha = cfg.get_float("prop.alpha", 0.001)
    if mode == "disk":
        a_total, a_act = disk_attenuation_fields(grid, alpha)
    elif mode == "uniform":
        a_total = constant_field(grid, alpha, unit="1/cm")
        a_act = a_total
    elif mode == "files":
        a_total = read_field(cfg.require("prop.alpha_total_file"))
        a_act = read_field(cfg.require("prop.alpha_act_file"))
    else:
        raise ConfigError(f"prop.alpha_mode: unknown mode {mode!r}")
    prop = Propagator(grid, spec, a_total, a_act)

    use_matrix = cfg.get("prop.use_matrix", "auto")
    if use_matrix not in ("auto", "always", "never"):
        raise ConfigError(f"prop.use_matrix: unknown value {use_matrix!r}")
    limit = cfg.get_float("prop.matrix_max_bytes", 8e9)
    if use_matrix == "never":
        return prop
    try:
        return build_matrix(prop, max_bytes=int(limit))
    except MemoryError:
        if use_matrix == "always":
            raise
        return prop


def _build_response(cfg: RunConfig) -> ResponseModel:
    variant = cfg.get("response.variant", LOGISTIC)
    if variant not in (LOGISTIC, LINEAR_IDENTITY):
        raise ConfigError(f"response.variant: unknown variant {variant!r}")
    try:
        return ResponseModel(
            variant=variant,
            A=cfg.get_float("response.A", 0.0),
            K=cfg.get_float("response.K", 1.0),
            B=cfg.get_float("response.B", 10.0),
            M_prime=cfg.get_float("response.Mprime", 0.5),
            nu=cfg.get_float("response.nu", 1.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_target(cfg: RunConfig, grid: GridSpec) -> Field:
    source = cfg.get("problem.target", "phantom")
    if source.startswith("file:"):
        field = read_field(source[len("file:"):])
        if field.grid != grid:
            raise ConfigError("target file grid does not match run grid")
        return field
    if source != "phantom":
        raise ConfigError(f"problem.target: expected 'phantom' or 'file:<path>', got {source!r}")
    kind = cfg.get("phantom.kind", phantoms.FOUR_GRATINGS)
    params: dict = {}
    if kind == phantoms.DISK:
        params["radius"] = cfg.get_float("phantom.radius", 0.25 * grid.extent_x)
        params["value"] = cfg.get_float("phantom.value", 1.0)
    elif kind == phantoms.FOUR_GRATINGS:
        params["periods"] = cfg.get_float("phantom.periods", 4.0)
        params["amplitude"] = cfg.get_float("phantom.amplitude", 1.0)
    elif kind == phantoms.GRAYSCALE_IMAGE:
        params["path"] = cfg.require("phantom.image")
    elif kind == phantoms.BINARY_3D:
        radius = cfg.get_float("phantom.radius")
        if radius is not None:
            params["radius"] = radius
    try:
        return phantoms.generate_phantom(kind, grid, **params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _field_or_constant(cfg: RunConfig, key: str, grid: GridSpec, default: float) -> Field:
    raw = cfg.get(key)
    if raw is None:
        return constant_field(grid, default)
    if raw.startswith("file:"):
        field = read_field(raw[len("file:"):])
        if field.grid != grid:
            raise ConfigError(f"{key}: field file grid does not match run grid")
        return field
    try:
        return constant_field(grid, float(raw))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number or file:<path>, got {raw!r}") from exc


def _disk_weight_fields(grid: GridSpec, w_disk: float) -> Field:
    """Coupled local weighting: ``w_disk`` inside the half-diameter disk and
    (1 - 0.25 w_disk) / 0.75 outside, keeping the total weight constant."""
    w_outside = (1.0 - 0.25 * w_disk) / 0.75
    if w_outside < 0:
        raise ConfigError(f"weights.disk={w_disk} implies a negative outside weight")
    half_disk = phantoms.disk(grid, 0.25 * min(grid.extent_x, grid.extent_y))
    w = np.where(half_disk.values > 0, w_disk, w_outside)
    return Field(grid, w)


def _build_problem(cfg: RunConfig, grid: GridSpec, target: Field, prop) -> tuple[ProblemSpec, float | None]:
    scheme_name = cfg.get("scheme", "bclp")
    response = _build_response(cfg)
    eta_preset = None
    try:
        if scheme_name == "bclp":
            tolerance = _field_or_constant(cfg, "problem.epsilon", grid, 0.05)
            w_disk = cfg.get_float("problem.weights_disk")
            if w_disk is not None:
                weights = WeightSchedule.constant(_disk_weight_fields(grid, w_disk))
            elif "problem.weights_even" in cfg or "problem.weights_odd" in cfg:
                weights = WeightSchedule.alternating(
                    _field_or_constant(cfg, "problem.weights_even", grid, 1.0),
                    _field_or_constant(cfg, "problem.weights_odd", grid, 1.0),
                )
            else:
                weights = WeightSchedule.constant(
                    _field_or_constant(cfg, "problem.weights", grid, 1.0)
                )
            problem = ProblemSpec(
                target=target,
                tolerance=tolerance,
                weights=weights,
                p=cfg.get_float("problem.p", 2.0),
                q=cfg.get_float("problem.q", 1.0),
                response=response,
            )
        elif scheme_name == "dm":
            preset = schemes.dm_preset(target, response)
            problem, eta_preset = preset.problem, preset.eta
        elif scheme_name == "pm":
            preset = schemes.pm_preset(
                target,
                d_h=cfg.get_float("scheme.d_h", 0.8),
                d_l=cfg.get_float("scheme.d_l", 0.2),
                rho1=cfg.get_float("scheme.rho1", 1.0),
                rho2=cfg.get_float("scheme.rho2", 1.0),
                erosion_width=cfg.get_int("scheme.erosion_width", 2),
            )
            problem, eta_preset = preset.problem, preset.eta
        elif scheme_name == "osmo":
            preset = schemes.osmo_preset(
                target,
                d_high=cfg.get_float("scheme.D_h", 0.8),
                d_low=cfg.get_float("scheme.D_l", 0.2),
                alternating=bool(cfg.get_bool("scheme.alternating", False)),
            )
            problem, eta_preset = preset.problem, preset.eta
        else:
            raise ConfigError(f"scheme: unknown scheme {scheme_name!r}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if cfg.get("problem.region", "alpha_support") == "alpha_support":
        # Region of interest = support of the active absorption: weights
        # outside it are dropped so initialization stays physically
        # consistent (no response is reachable where nothing absorbs).
        mask = Field(grid, (prop.alpha_act.values > 0).astype(np.float64))
        problem = restrict_to_region(problem, mask)
        if not problem.weights.support().any():
            raise ConfigError("region-of-interest masking removed all weights")
    return problem, eta_preset


def _build_feasible(cfg: RunConfig) -> FeasibleSet:
    try:
        return FeasibleSet(
            h_min=cfg.get_float("feasible.h_min", 0.0),
            h_max=cfg.get_float("feasible.h_max"),
            bit_depth=cfg.get_int("feasible.bit_depth"),
            quantize_mode=cfg.get("feasible.quantize"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def assemble(cfg: RunConfig, need_optimizer: bool = True) -> Assembled:
    grid = _build_grid(cfg)
    prop = _build_propagator(cfg, grid)
    target = build_target(cfg, grid)
    problem, eta_preset = _build_problem(cfg, grid, target, prop)
    feasible = _build_feasible(cfg)
    optimizer = None
    if need_optimizer:
        eta = cfg.get_float("opt.eta", eta_preset)
        if eta is None:
            raise ConfigError("opt.eta is required (no scheme preset supplies one)")
        try:
            optimizer = OptimizerConfig(
                eta=eta,
                max_iters=cfg.get_int("opt.max_iters", 200),
                check_convergence=bool(cfg.get_bool("opt.check_convergence", True)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    init_method = cfg.get("init.method", "analytic")
    if init_method not in ("analytic", "lsq"):
        raise ConfigError(f"init.method: unknown method {init_method!r}")
    init_filter = cfg.get("init.filter", "ramlak")
    return Assembled(
        grid=grid,
        prop=prop,
        target=target,
        problem=problem,
        feasible=feasible,
        optimizer=optimizer,
        init_method=init_method,
        init_filter=init_filter,
        lsq_iters=cfg.get_int("init.lsq_iters", 30),
        eta_preset=eta_preset,
    )


def make_initial(asm: Assembled):
    # Initialization aims at the raw target; the unilateral-band presets park
    # their band centers at far limits the init must not chase.
    if asm.init_method == "lsq":
        op = asm.prop
        if isinstance(op, Propagator):
            op = build_matrix(op)
        dose = asm.problem.response.invert(asm.target.values)
        result = lsq_init(op, Field(asm.grid, dose), iters=asm.lsq_iters)
        return project_feasible(asm.feasible, result.sinogram)
    return analytic_init(asm.target, asm.problem, asm.prop, asm.feasible, asm.init_filter)


def _write_convergence_csv(record: RunRecord, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss", "violation_fraction", "max_excess_error", "eta"])
        for i in range(len(record.loss_history)):
            writer.writerow([
                i,
                repr(record.loss_history[i]),
                repr(record.violation_history[i]),
                repr(record.max_excess_history[i]),
                repr(record.eta_history[i]),
            ])


def _metric_rows(asm: Assembled, record: RunRecord) -> list[metrics.MetricResult]:
    problem = asm.problem
    dose = record.dose
    w_ind = problem.weights.even.with_values((problem.weights.support()).astype(np.float64))
    rows = [
        metrics.MetricResult("final_loss", record.final_loss),
        metrics.MetricResult("iterations", float(record.iterations)),
        metrics.MetricResult("termination", float(record.iterations), flags=record.termination),
    ]
    if record.quantized_loss is not None:
        rows.append(metrics.MetricResult("quantized_loss", record.quantized_loss))
    for kind, p, q in ((metrics.VIOLATION_VOLUME, 1.0, 1.0), (metrics.MAX_EXCESS, 1.0, 1.0)):
        m = metrics.MetricSpec(kind, problem.target, problem.tolerance, w_ind,
                               problem.response, p=p, q=q)
        rows.append(metrics.eval_metric(m, dose))
    for p, q in ((1.0, 1.0), (2.0, 1.0)):
        m = metrics.MetricSpec(metrics.BCLP, problem.target, problem.tolerance,
                               problem.weights.even, problem.response, p=p, q=q)
        rows.append(metrics.eval_metric(m, dose))
    target_vals = asm.target.values
    if np.all((target_vals == 0) | (target_vals == 1)) and target_vals.any():
        ip = asm.target
        rows.append(metrics.jaccard(dose, problem.response, ip, threshold=0.5))
        rows.append(metrics.voxel_error_rate(dose, problem.response, ip))
        rows.append(metrics.in_part_dose_range(dose, problem.response, ip))
    return rows


def _write_metrics_csv(rows: list[metrics.MetricResult], path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "value", "flags"])
        for row in rows:
            writer.writerow([row.name, repr(row.value), row.flags])


def _write_histogram_csv(hist: metrics.Histogram, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "weighted_volume"])
        for i in range(len(hist.masses)):
            writer.writerow([
                repr(float(hist.bin_edges[i])),
                repr(float(hist.bin_edges[i + 1])),
                repr(float(hist.masses[i])),
            ])


def run_single(cfg: RunConfig, out_dir: str | Path) -> RunRecord:
    """Drive one optimization end to end and write all declared outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    asm = assemble(cfg)
    g0 = make_initial(asm)
    write_sinogram(g0, out / "g0.f32")
    write_field(asm.target, out / "target.f32")

    record = run(asm.problem, asm.prop, asm.feasible, asm.optimizer, g0)

    write_sinogram(record.sinogram, out / "sinogram.f32")
    write_field(record.dose, out / "dose.f32")
    write_field(record.response_field, out / "response.f32")
    signed_error = record.response_field.values - asm.problem.target.values
    write_field(Field(asm.grid, signed_error, unit="response"), out / "error.f32")
    _write_convergence_csv(record, out / "convergence.csv")
    _write_metrics_csv(_metric_rows(asm, record), out / "metrics.csv")

    n_bins = cfg.get_int("out.histogram_bins", 64)
    hist = metrics.error_histogram(asm.problem, record.dose, n_bins)
    _write_histogram_csv(hist, out / "error_histogram.csv")

    if cfg.get_bool("out.renders", True):
        render_response_pgm(record.response_field, out / "response.pgm")
        render_response_pgm(asm.target, out / "target.pgm")
    if cfg.get_bool("out.figures", True):
        figures.convergence_figure(record, out / "convergence.png")
        figures.field_figure(record.response_field, out / "response.png", title="response")
        figures.field_figure(asm.target, out / "target.png", title="target")
        figures.histogram_figure(hist, out / "error_histogram.png")
    return record


def run_phantom(cfg: RunConfig, out_dir: str | Path) -> Field:
    """Generate and write just the target field."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = _build_grid(cfg)
    target = build_target(cfg, grid)
    write_field(target, out / "target.f32")
    if cfg.get_bool("out.renders", True):
        render_response_pgm(target, out / "target.pgm")
    if cfg.get_bool("out.figures", True):
        figures.field_figure(target, out / "target.png", title="target")
    return target


def run_init(cfg: RunConfig, out_dir: str | Path):
    """Compute and write just the initial sinogram."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    asm = assemble(cfg, need_optimizer=False)
    g0 = make_initial(asm)
    write_sinogram(g0, out / "g0.f32")
    dose = asm.prop.backward(g0)
    write_field(dose, out / "init_dose.f32")
    if cfg.get_bool("out.figures", True):
        figures.field_figure(
            Field(asm.grid, asm.problem.response.respond(dose.values)),
            out / "init_response.png",
            title="response of initial iterate",
        )
    return g0


def run_metrics(cfg: RunConfig, out_dir: str | Path) -> list[metrics.MetricResult]:
    """Evaluate metrics for an existing dose field against the configured
    problem; writes the metrics and histogram CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    asm = assemble(cfg, need_optimizer=False)
    dose = read_field(cfg.require("metrics.dose"))
    if dose.grid != asm.grid:
        raise ConfigError("metrics.dose: field grid does not match run grid")
    problem = asm.problem
    w_ind = problem.weights.even.with_values(problem.weights.support().astype(np.float64))
    rows: list[metrics.MetricResult] = []
    for kind in (metrics.VIOLATION_VOLUME, metrics.MAX_EXCESS):
        m = metrics.MetricSpec(kind, problem.target, problem.tolerance, w_ind, problem.response)
        rows.append(metrics.eval_metric(m, dose))
    for p, q in ((1.0, 1.0), (2.0, 1.0), (problem.p, problem.q)):
        m = metrics.MetricSpec(metrics.BCLP, problem.target, problem.tolerance,
                               problem.weights.even, problem.response, p=p, q=q)
        rows.append(metrics.eval_metric(m, dose))
    threshold = cfg.get_float("metrics.threshold")
    target_vals = asm.target.values
    if threshold is not None and np.all((target_vals == 0) | (target_vals == 1)):
        rows.append(metrics.jaccard(dose, problem.response, asm.target, threshold))
        rows.append(metrics.voxel_error_rate(dose, problem.response, asm.target))
        rows.append(metrics.in_part_dose_range(dose, problem.response, asm.target))
    _write_metrics_csv(rows, out / "metrics.csv")
    hist = metrics.error_histogram(problem, dose, cfg.get_int("out.histogram_bins", 64))
    _write_histogram_csv(hist, out / "error_histogram.csv")
    if cfg.get_bool("out.figures", True):
        figures.histogram_figure(hist, out / "error_histogram.png")
    return rows


def run_sweep(cfg: RunConfig, out_dir: str | Path) -> Path:
    """Run one configuration per sweep value; write a summary CSV with one
    row per value in request order.  Failed runs record an error and the
    sweep continues."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    param = cfg.require("sweep.param")
    values = cfg.get_floats("sweep.values")
    if not values:
        raise ConfigError("sweep.values must list at least one value")
    etas = cfg.get_floats("sweep.etas")
    if etas is not None and len(etas) != len(values):
        raise ConfigError("sweep.etas must match sweep.values in length")

    summary = out / "sweep_summary.csv"
    with summary.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "final_loss", "iterations",
                         "violation_fraction", "max_excess", "error"])
        for i, value in enumerate(values):
            sub = RunConfig(dict(cfg.entries))
            if param == "weights.disk":
                sub.entries["problem.weights_disk"] = repr(value)
            else:
                sub.entries[param] = repr(value)
            if etas is not None:
                sub.entries["opt.eta"] = repr(etas[i])
            run_dir = out / f"run_{i:03d}"
            try:
                record = run_single(sub, run_dir)
                writer.writerow([
                    param,
                    repr(value),
                    repr(record.final_loss),
                    record.iterations,
                    repr(record.violation_history[-1]),
                    repr(record.max_excess_history[-1]),
                    "",
                ])
            except (ConfigError, ValueError, FloatingPointError, MemoryError) as exc:
                writer.writerow([param, repr(value), "", "", "", "", str(exc)])
    return summary
