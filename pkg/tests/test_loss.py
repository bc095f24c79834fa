import math

import numpy as np
import pytest

from vamplan.grids import Field, constant_field, make_grid
from vamplan.loss import (
    ProblemSpec,
    WeightSchedule,
    composite_loss,
    loss,
    loss_gradient,
    restrict_to_region,
    violation_set,
)
from vamplan.propagation import Propagator, Sinogram, default_sinogram_spec, sinogram_inner
from vamplan.response import LINEAR_IDENTITY, ResponseModel


def loop_loss(spec, f):
    """Independent straight-loop evaluation of the band loss."""
    dv = spec.grid.voxel_volume
    w = spec.weights.at(0).values.reshape(-1)
    ft = spec.target.values.reshape(-1)
    eps = spec.tolerance.values.reshape(-1)
    fm = spec.response.respond(f.values.reshape(-1))
    total = 0.0
    for i in range(fm.size):
        err = abs(fm[i] - ft[i]) - eps[i]
        if err > 0 and w[i] > 0:
            total += w[i] * err**spec.p * dv
    return total ** (spec.q / spec.p)


def loop_gradient_integrand(spec, f):
    """Straight-loop pointwise integrand of the analytic gradient."""
    w = spec.weights.at(0).values.reshape(-1)
    ft = spec.target.values.reshape(-1)
    eps = spec.tolerance.values.reshape(-1)
    fv = f.values.reshape(-1)
    out = np.zeros(fv.size)
    for i in range(fv.size):
        fm = float(spec.response.respond(fv[i]))
        signed = fm - ft[i]
        err = abs(signed) - eps[i]
        if err > 0 and w[i] > 0:
            sgn = 0.0 if signed == 0 else math.copysign(1.0, signed)
            e = max(err, 1e-9) if spec.p < 1 else err
            out[i] = w[i] * e ** (spec.p - 1.0) * sgn * float(spec.response.derivative(fv[i]))
    return out.reshape(spec.grid.shape)


def make_setup(n=8, n_theta=12, seed=0, p=2.0, q=1.0, eps=0.05):
    grid = make_grid(n, n, 1, 1.0 / n)
    spec = default_sinogram_spec(grid, n_theta=n_theta)
    prop = Propagator(grid, spec, constant_field(grid, 0.02), constant_field(grid, 1.0))
    rng = np.random.default_rng(seed)
    g = Sinogram(spec, 0.3 + 0.2 * rng.random(spec.shape))
    f = prop.backward(g)
    model = ResponseModel()
    target = Field(grid, np.clip(model.respond(f.values) - 0.3 + 0.6 * rng.random(grid.shape), 0.01, 0.99))
    problem = ProblemSpec(
        target=target,
        tolerance=constant_field(grid, eps),
        weights=WeightSchedule.constant(Field(grid, rng.random(grid.shape))),
        p=p,
        q=q,
        response=model,
    )
    return problem, prop, g, f


# ------------------------------------------------------------- violation set


def test_violation_empty_when_error_zero():
    grid = make_grid(4, 4, 1, 0.25)
    model = ResponseModel()
    f = constant_field(grid, 0.5)
    problem = ProblemSpec(
        target=Field(grid, model.respond(f.values)),
        tolerance=constant_field(grid, 0.0),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=2.0,
        q=1.0,
        response=model,
    )
    assert np.all(violation_set(problem, f).values == 0.0)


def test_violation_uniform_cases():
    grid = make_grid(4, 4, 1, 0.25)
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    f = constant_field(grid, 0.6)
    base = dict(
        target=constant_field(grid, 0.5),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=2.0,
        q=1.0,
        response=ident,
    )
    violating = ProblemSpec(tolerance=constant_field(grid, 0.05), **base)
    assert np.all(violation_set(violating, f).values == 1.0)
    inside = ProblemSpec(tolerance=constant_field(grid, 0.2), **base)
    assert np.all(violation_set(inside, f).values == 0.0)


def test_violation_respects_weight_support():
    grid = make_grid(4, 4, 1, 0.25)
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    w = np.zeros(grid.shape)
    w[0, :2, :] = 1.0
    problem = ProblemSpec(
        target=constant_field(grid, 0.5),
        tolerance=constant_field(grid, 0.05),
        weights=WeightSchedule.constant(Field(grid, w)),
        p=2.0,
        q=1.0,
        response=ident,
    )
    v = violation_set(problem, constant_field(grid, 0.9)).values
    assert np.array_equal(v, w)


# --------------------------------------------------------------------- loss


def test_loss_zero_inside_band():
    grid = make_grid(4, 4, 1, 0.25)
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    problem = ProblemSpec(
        target=constant_field(grid, 0.5),
        tolerance=constant_field(grid, 0.2),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=2.0,
        q=1.0,
        response=ident,
    )
    report = loss(problem, constant_field(grid, 0.6))
    assert report.value == 0.0
    assert report.violation_fraction == 0.0
    assert report.max_excess == 0.0


def test_loss_single_voxel_analytic():
    grid = make_grid(1, 1, 1, 0.37)
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    problem = ProblemSpec(
        target=constant_field(grid, 0.5),
        tolerance=constant_field(grid, 0.05),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=2.0,
        q=1.0,
        response=ident,
    )
    report = loss(problem, constant_field(grid, 0.65))  # |err| = 0.15, E = 0.1
    dv = grid.voxel_volume
    assert report.value == pytest.approx(0.1 * math.sqrt(dv), rel=1e-12)
    assert report.inner_integral == pytest.approx(0.01 * dv, rel=1e-12)
    assert report.max_excess == pytest.approx(0.1)
    assert report.violation_fraction == 1.0


@pytest.mark.parametrize("p,q", [(0.5, 1.0), (1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (3.0, 2.0)])
def test_loss_matches_loop_oracle(p, q):
    problem, prop, g, f = make_setup(n=8, p=p, q=q, seed=int(p * 10 + q))
    got = loss(problem, f).value
    want = loop_loss(problem, f)
    assert got == pytest.approx(want, rel=1e-12)


def test_loss_matches_loop_oracle_16x16():
    problem, prop, g, f = make_setup(n=16, n_theta=20, seed=5)
    assert loss(problem, f).value == pytest.approx(loop_loss(problem, f), rel=1e-10)


# ----------------------------------------------------------------- gradient


def test_gradient_zero_on_empty_violation():
    grid = make_grid(4, 4, 1, 0.25)
    spec = default_sinogram_spec(grid, n_theta=6)
    prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 1.0))
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    problem = ProblemSpec(
        target=constant_field(grid, 0.5),
        tolerance=constant_field(grid, 10.0),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=2.0,
        q=1.0,
        response=ident,
    )
    grad, report = loss_gradient(problem, constant_field(grid, 0.5), prop)
    assert report.value == 0.0
    assert np.all(grad.values == 0.0)


def test_gradient_matches_loop_integrand():
    problem, prop, g, f = make_setup(n=16, n_theta=20, seed=9, p=2.0, q=1.0)
    grad, report = loss_gradient(problem, f, prop)
    integrand = loop_gradient_integrand(problem, f)
    prefactor = problem.q * report.value ** ((problem.q - problem.p) / problem.q)
    expected = prefactor * prop.forward(Field(problem.grid, integrand)).values
    rel = np.linalg.norm(grad.values - expected) / np.linalg.norm(expected)
    assert rel <= 1e-10


def test_gradient_p_equals_q_is_scale_free():
    # with p == q the loss-magnitude prefactor collapses to q
    problem, prop, g, f = make_setup(n=8, p=2.0, q=2.0, seed=2)
    grad, report = loss_gradient(problem, f, prop)
    integrand = loop_gradient_integrand(problem, f)
    expected = 2.0 * prop.forward(Field(problem.grid, integrand)).values
    assert np.allclose(grad.values, expected, rtol=1e-12, atol=1e-16)


def _fd_problem(p, q, eps_val, seed, grid, spec, prop, model):
    """Random instance with every voxel's band excess bounded away from 0."""
    rng = np.random.default_rng(seed)
    g0 = Sinogram(spec, 0.4 + 0.2 * rng.random(spec.shape))
    f = prop.backward(g0)
    fm = model.respond(f.values)
    sgn = np.where(rng.random(grid.shape) < 0.5, -1.0, 1.0)
    if eps_val == 0.0:
        err = 0.04 + 0.1 * rng.random(grid.shape)
    else:
        viol = rng.random(grid.shape) < 0.6
        err = np.where(viol, eps_val + 0.04 + 0.1 * rng.random(grid.shape),
                       (eps_val - 0.04) * 0.5 * rng.random(grid.shape))
    problem = ProblemSpec(
        target=Field(grid, fm - sgn * err),
        tolerance=constant_field(grid, eps_val),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        p=p,
        q=q,
        response=model,
    )
    return g0, f, problem


@pytest.mark.parametrize("p", [0.5, 1.0, 2.0, 3.0])
@pytest.mark.parametrize("q", [1.0, 2.0])
@pytest.mark.parametrize("eps_val", [0.0, 0.05])
def test_gradient_matches_directional_finite_difference(p, q, eps_val):
    # unit voxels keep the loss O(1); small p with large q raises the inner
    # integral to a high power, and a tiny loss would drown the central
    # difference in rounding noise
    grid = make_grid(12, 12, 1, 1.0)
    spec = default_sinogram_spec(grid, n_theta=18)
    prop = Propagator(grid, spec, constant_field(grid, 0.005), constant_field(grid, 1.0))
    model = ResponseModel()
    g0, f, problem = _fd_problem(p, q, eps_val, int(7 + p * 10 + q + eps_val * 100),
                                 grid, spec, prop, model)
    # guard: the construction keeps every voxel off the band edge
    excess = np.abs(model.respond(f.values) - problem.target.values) - eps_val
    assert np.min(np.abs(excess)) > 0.02

    grad, report = loss_gradient(problem, f, prop)
    assert report.value > 0
    # magnitude of the per-sample derivative vector, for filtering directions
    # that are nearly orthogonal to the gradient (their directional
    # derivative is dominated by truncation noise)
    g_scale = np.linalg.norm(grad.flat) * spec.sample_measure * grid.voxel_size
    h = 1e-5
    rng = np.random.default_rng(1234)
    tested = 0
    while tested < 5:
        u = rng.standard_normal(spec.shape)
        u /= np.linalg.norm(u)
        an = sinogram_inner(grad, Sinogram(spec, u), grid)
        if abs(an) < 1e-2 * g_scale:
            continue
        lp = loss(problem, prop.backward(g0.with_values(g0.values + h * u))).value
        lm = loss(problem, prop.backward(g0.with_values(g0.values - h * u))).value
        fd = (lp - lm) / (2 * h)
        assert abs(fd - an) / abs(fd) <= 1e-3
        tested += 1


# ------------------------------------------------------------- composition


def test_composite_single_term_degenerate():
    problem, prop, g, f = make_setup(seed=21)
    value, grad = composite_loss([(1.0, problem)], f, prop)
    direct_grad, direct = loss_gradient(problem, f, prop)
    assert value == direct.value
    assert np.array_equal(grad.values, direct_grad.values)


def test_composite_two_half_terms():
    problem, prop, g, f = make_setup(seed=22)
    value, grad = composite_loss([(0.5, problem), (0.5, problem)], f, prop)
    direct_grad, direct = loss_gradient(problem, f, prop)
    assert value == pytest.approx(direct.value, rel=1e-14)
    assert np.allclose(grad.values, direct_grad.values, rtol=1e-14, atol=1e-300)


def test_composite_disjoint_supports_add():
    grid = make_grid(8, 8, 1, 1.0 / 8)
    spec = default_sinogram_spec(grid, n_theta=10)
    prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 1.0))
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    rng = np.random.default_rng(23)
    f = Field(grid, rng.random(grid.shape))
    target = constant_field(grid, 0.5)
    left = np.zeros(grid.shape)
    left[:, :, :4] = 1.0
    right = 1.0 - left

    def spec_with(w):
        return ProblemSpec(
            target=target,
            tolerance=constant_field(grid, 0.01),
            weights=WeightSchedule.constant(Field(grid, w)),
            p=2.0,
            q=1.0,
            response=ident,
        )

    v_sum, _ = composite_loss([(1.0, spec_with(left)), (1.0, spec_with(right))], f, prop)
    v_left = loss(spec_with(left), f).value
    v_right = loss(spec_with(right), f).value
    assert v_sum == pytest.approx(v_left + v_right, rel=1e-14)


# ----------------------------------------------------------------- invariants


def test_ranking_preserved_across_q():
    problem, prop, g, f1 = make_setup(seed=31)
    rng = np.random.default_rng(99)
    f2 = Field(problem.grid, f1.values * (1.0 + 0.2 * rng.random(problem.grid.shape)))
    for q1, q2 in [(1.0, 2.0), (0.5, 3.0)]:
        vals = {}
        for q in (q1, q2):
            pq = ProblemSpec(target=problem.target, tolerance=problem.tolerance,
                             weights=problem.weights, p=problem.p, q=q,
                             response=problem.response)
            vals[q] = (loss(pq, f1).value, loss(pq, f2).value)
        s1 = np.sign(vals[q1][0] - vals[q1][1])
        s2 = np.sign(vals[q2][0] - vals[q2][1])
        assert s1 == s2 != 0


def test_alternating_weights_switch_by_parity():
    grid = make_grid(4, 4, 1, 0.25)
    ident = ResponseModel(variant=LINEAR_IDENTITY)
    even = np.zeros(grid.shape)
    even[0, :, :2] = 1.0
    odd = np.zeros(grid.shape)
    odd[0, :, 2:] = 1.0
    problem = ProblemSpec(
        target=constant_field(grid, 0.0),
        tolerance=constant_field(grid, 0.0),
        weights=WeightSchedule.alternating(Field(grid, even), Field(grid, odd)),
        p=2.0,
        q=1.0,
        response=ident,
    )
    f = constant_field(grid, 1.0)
    assert np.array_equal(violation_set(problem, f, k=0).values, even)
    assert np.array_equal(violation_set(problem, f, k=1).values, odd)
    assert np.array_equal(violation_set(problem, f, k=2).values, even)


def test_restrict_to_region_masks_all_schedule_fields():
    grid = make_grid(4, 4, 1, 0.25)
    ones = constant_field(grid, 1.0)
    mask = np.zeros(grid.shape)
    mask[0, 2, 2] = 1.0
    problem = ProblemSpec(
        target=constant_field(grid, 0.5),
        tolerance=constant_field(grid, 0.0),
        weights=WeightSchedule.alternating(ones, ones),
        p=1.0,
        q=1.0,
        response=ResponseModel(variant=LINEAR_IDENTITY),
    )
    masked = restrict_to_region(problem, Field(grid, mask))
    assert np.array_equal(masked.weights.even.values, mask)
    assert np.array_equal(masked.weights.odd.values, mask)


def test_problem_validation():
    grid = make_grid(4, 4, 1, 0.25)
    good = dict(
        target=constant_field(grid, 0.5),
        tolerance=constant_field(grid, 0.1),
        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
        response=ResponseModel(),
    )
    with pytest.raises(ValueError):
        ProblemSpec(p=0.0, q=1.0, **good)
    with pytest.raises(ValueError):
        ProblemSpec(p=1.0, q=-1.0, **good)
    with pytest.raises(ValueError):
        ProblemSpec(
            target=constant_field(grid, 0.5),
            tolerance=constant_field(grid, -0.1),
            weights=WeightSchedule.constant(constant_field(grid, 1.0)),
            response=ResponseModel(),
            p=1.0,
            q=1.0,
        )
    with pytest.raises(ValueError):
        WeightSchedule.constant(constant_field(grid, -1.0))
