import numpy as np
import pytest

from vamplan.grids import Field, constant_field, inscribed_disk_mask, make_grid
from vamplan.propagation import (
    Propagator,
    Sinogram,
    SinogramSpec,
    build_matrix,
    default_sinogram_spec,
    disk_attenuation_fields,
    memory_estimate,
    sinogram_inner,
    tomogram_inner,
)
from vamplan.phantoms import disk


@pytest.fixture(scope="module")
def small_prop():
    grid = make_grid(32, 32, 1, 1.0 / 32)
    return Propagator.with_disk_attenuation(grid, n_theta=48)


def test_sinogram_spec_validation():
    with pytest.raises(ValueError):
        SinogramSpec(0, 1, (0.0,), 1.0)
    with pytest.raises(ValueError):
        SinogramSpec(4, 1, (0.0, 7.0), 1.0)  # beyond 2*pi
    with pytest.raises(ValueError):
        SinogramSpec(4, 1, (0.5, 0.25), 1.0)  # not increasing
    with pytest.raises(ValueError):
        SinogramSpec(4, 1, (0.0, 0.1, 0.3), 1.0)  # non-uniform
    spec = SinogramSpec.uniform(8, 6, 1, 1.0, coverage_deg=180.0)
    assert spec.n_theta == 6
    assert spec.angle_weight == pytest.approx(np.pi / 6)


def test_backward_zero_absorption_gives_zero(small_prop):
    grid = small_prop.grid
    zero = constant_field(grid, 0.0)
    prop = Propagator(grid, small_prop.sino_spec, zero, zero)
    rng = np.random.default_rng(1)
    g = Sinogram(prop.sino_spec, rng.random(prop.sino_spec.shape))
    assert np.all(prop.backward(g).values == 0.0)


def test_backward_single_ray_traces_one_path():
    # one nonzero sample at angle 0: the beam runs along +y at offset rho
    grid = make_grid(16, 16, 1, 1.0 / 16)
    spec = SinogramSpec.uniform(16, 4, 1, grid.extent_x)
    c = 0.7
    prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, c))
    g = np.zeros(spec.shape)
    i_rho = 10
    g[0, 0, i_rho] = 1.0
    dose = prop.backward(Sinogram(spec, g)).values[0]
    hit_cols = np.nonzero(dose.sum(axis=0))[0]
    # bilinear footprint of the ray at x = rho_10 covers the two adjacent columns
    assert set(hit_cols) <= {i_rho - 1, i_rho, i_rho + 1}
    assert dose.sum() > 0
    # along the ray the deposition is proportional to the local absorption
    expected = c * spec.angle_weight / grid.voxel_size * spec.delta_rho / grid.voxel_size
    col = dose[:, i_rho]
    assert col[8] == pytest.approx(col[4], rel=1e-9)  # no attenuation: uniform along ray
    # doubling the absorption doubles the dose
    prop2 = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 2 * c))
    dose2 = prop2.backward(Sinogram(spec, g)).values[0]
    assert dose2[8, i_rho] == pytest.approx(2 * dose[8, i_rho], rel=1e-12)


def test_backward_uniform_sinogram_radially_symmetric():
    grid = make_grid(64, 64, 1, 1.0 / 64)
    spec = SinogramSpec.uniform(64, 360, 1, grid.extent_x)
    at, aa = disk_attenuation_fields(grid, 0.001)
    prop = Propagator(grid, spec, at, aa)
    dose = prop.backward(Sinogram(spec, np.ones(spec.shape))).values[0]
    yy, xx = np.meshgrid(grid.y_centers, grid.x_centers, indexing="ij")
    r = np.hypot(xx, yy)
    inside = r <= 0.35 * grid.extent_x
    # group voxels into thin radial shells and compare against shell means
    shells = np.round(r[inside] / (2 * grid.voxel_size)).astype(int)
    vals = dose[inside]
    spread = 0.0
    for s in np.unique(shells):
        sel = shells == s
        if sel.sum() < 8:
            continue
        shell_vals = vals[sel]
        spread = max(spread, shell_vals.std() / shell_vals.mean())
    assert spread <= 0.01


def test_forward_zero_field(small_prop):
    grid = small_prop.grid
    sino = small_prop.forward(constant_field(grid, 0.0))
    assert np.all(sino.values == 0.0)


def test_adjoint_identity_random(small_prop):
    rng = np.random.default_rng(42)
    grid = small_prop.grid
    worst = 0.0
    for _ in range(5):
        a = Field(grid, rng.standard_normal(grid.shape))
        g = Sinogram(small_prop.sino_spec, rng.standard_normal(small_prop.sino_spec.shape))
        pa = small_prop.forward(a)
        lhs = sinogram_inner(pa, g, grid)
        rhs = tomogram_inner(a, small_prop.backward(g))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(pa.flat) * np.linalg.norm(g.flat)))
    assert worst <= 1e-5


def test_adjoint_identity_spatially_varying_attenuation():
    grid = make_grid(24, 24, 1, 1.0 / 24)
    spec = SinogramSpec.uniform(24, 30, 1, grid.extent_x)
    rng = np.random.default_rng(3)
    at = Field(grid, 0.3 * rng.random(grid.shape))
    aa = Field(grid, rng.random(grid.shape))
    prop = Propagator(grid, spec, at, aa)
    a = Field(grid, rng.standard_normal(grid.shape))
    g = Sinogram(spec, rng.standard_normal(spec.shape))
    pa = prop.forward(a)
    lhs = sinogram_inner(pa, g, grid)
    rhs = tomogram_inner(a, prop.backward(g))
    assert abs(lhs - rhs) / (np.linalg.norm(pa.flat) * np.linalg.norm(g.flat)) <= 1e-5


def test_forward_disk_matches_analytic_radon():
    grid = make_grid(128, 128, 1, 1.0 / 128)
    spec = SinogramSpec.uniform(128, 60, 1, grid.extent_x)
    prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 1.0))
    radius = 0.35
    sino = prop.forward(disk(grid, radius)).values
    rho = spec.rho_centers
    analytic = 2.0 * np.sqrt(np.maximum(radius**2 - rho**2, 0.0))
    ana = np.broadcast_to(analytic, sino.shape)
    rel_rms = np.sqrt(np.mean((sino - ana) ** 2)) / np.sqrt(np.mean(ana**2))
    assert rel_rms <= 0.02


def test_linearity(small_prop):
    rng = np.random.default_rng(5)
    spec = small_prop.sino_spec
    g1 = rng.standard_normal(spec.shape)
    g2 = rng.standard_normal(spec.shape)
    combo = small_prop.backward(Sinogram(spec, 2.0 * g1 - 3.0 * g2)).values
    parts = 2.0 * small_prop.backward(Sinogram(spec, g1)).values - 3.0 * small_prop.backward(
        Sinogram(spec, g2)
    ).values
    assert np.allclose(combo, parts, rtol=1e-12, atol=1e-14)


def test_attenuation_limit_matches_unattenuated():
    grid = make_grid(32, 32, 1, 1.0 / 32)
    spec = SinogramSpec.uniform(32, 48, 1, grid.extent_x)
    mask = inscribed_disk_mask(grid)
    aa = mask
    tiny = Propagator(grid, spec, mask.with_values(mask.values * 1e-9), aa)
    zero = Propagator(grid, spec, mask.with_values(mask.values * 0.0), aa)
    rng = np.random.default_rng(7)
    g = Sinogram(spec, rng.random(spec.shape))
    f_tiny = tiny.backward(g).flat
    f_zero = zero.backward(g).flat
    assert np.linalg.norm(f_tiny - f_zero) / np.linalg.norm(f_zero) <= 1e-6


def test_nonnegative_sinogram_gives_nonnegative_dose(small_prop):
    rng = np.random.default_rng(11)
    g = Sinogram(small_prop.sino_spec, rng.random(small_prop.sino_spec.shape))
    assert np.all(small_prop.backward(g).values >= 0.0)


def test_spec_mismatch_rejected(small_prop):
    other = SinogramSpec.uniform(16, 8, 1, small_prop.grid.extent_x)
    with pytest.raises(ValueError):
        small_prop.backward(Sinogram(other, np.zeros(other.shape)))
    other_grid = make_grid(8, 8, 1, 0.1)
    with pytest.raises(ValueError):
        small_prop.forward(constant_field(other_grid, 1.0))


def test_z_slices_independent():
    # a 3-slice volume propagates exactly like three 1-slice volumes
    grid3 = make_grid(16, 16, 3, 1.0 / 16)
    grid1 = make_grid(16, 16, 1, 1.0 / 16)
    spec3 = SinogramSpec.uniform(16, 12, 3, grid3.extent_x)
    spec1 = SinogramSpec.uniform(16, 12, 1, grid1.extent_x)
    rng = np.random.default_rng(13)
    at3 = Field(grid3, 0.2 * rng.random(grid3.shape))
    aa3 = Field(grid3, rng.random(grid3.shape))
    prop3 = Propagator(grid3, spec3, at3, aa3)
    vol = rng.standard_normal(grid3.shape)
    got = prop3.forward(Field(grid3, vol)).values
    for z in range(3):
        prop1 = Propagator(grid1, spec1, Field(grid1, at3.values[z]), Field(grid1, aa3.values[z]))
        expected = prop1.forward(Field(grid1, vol[z])).values[0]
        assert np.allclose(got[z], expected, rtol=1e-13, atol=1e-15)


# ---------------------------------------------------------------- matrices


def test_matrix_reproduces_backward_and_forward():
    grid = make_grid(16, 16, 1, 1.0 / 16)
    prop = Propagator.with_disk_attenuation(grid, n_theta=24)
    op = build_matrix(prop)
    rng = np.random.default_rng(17)
    for _ in range(10):
        g = Sinogram(prop.sino_spec, rng.random(prop.sino_spec.shape))
        ray = prop.backward(g).flat
        mat = op.backward(g).flat
        assert np.linalg.norm(mat - ray) / np.linalg.norm(ray) <= 1e-6
    a = Field(grid, rng.random(grid.shape))
    ray_f = prop.forward(a).flat
    mat_f = op.forward(a).flat
    assert np.linalg.norm(mat_f - ray_f) / np.linalg.norm(ray_f) <= 1e-6


def test_matrix_zero_absorption_is_empty():
    grid = make_grid(8, 8, 1, 1.0 / 8)
    spec = SinogramSpec.uniform(8, 6, 1, grid.extent_x)
    zero = constant_field(grid, 0.0)
    op = build_matrix(Propagator(grid, spec, zero, zero))
    assert op.nnz == 0


def test_matrix_nnz_near_line_heuristic():
    # SE.7-style disk support: one line of voxels per sample, within 2x
    grid = make_grid(64, 64, 1, 1.0 / 64)
    prop = Propagator.with_disk_attenuation(grid, n_theta=90)
    op = build_matrix(prop)
    heuristic = prop.sino_spec.n_samples * max(grid.n_x, grid.n_y)
    assert heuristic / 2 <= op.nnz <= heuristic * 2


def test_matrix_entries_nonnegative():
    grid = make_grid(12, 12, 1, 1.0 / 12)
    prop = Propagator.with_disk_attenuation(grid, n_theta=10)
    op = build_matrix(prop)
    assert all((m.data >= 0).all() for m in op._mats)


def test_matrix_refuses_oversized_build():
    grid = make_grid(512, 512, 1, 1.0 / 500)
    prop = Propagator.with_disk_attenuation(grid, n_theta=360)
    with pytest.raises(MemoryError, match="GB"):
        build_matrix(prop, max_bytes=100_000_000)


def test_memory_estimate_published_cases():
    class Stub:
        pass

    big = Stub()
    big.grid = make_grid(512, 512, 512, 1.0 / 500)
    big.sino_spec = SinogramSpec.uniform(512, 180, 512, 1.024)
    est = memory_estimate(big)
    assert abs(est - 241.6e9) / 241.6e9 <= 0.2

    single = Stub()
    single.grid = make_grid(512, 512, 1, 1.0 / 500)
    single.sino_spec = SinogramSpec.uniform(512, 180, 1, 1.024)
    est = memory_estimate(single)
    assert abs(est - 471.9e6) / 471.9e6 <= 0.2

    tiny = Stub()
    tiny.grid = make_grid(1, 1, 1, 1.0)
    tiny.sino_spec = SinogramSpec.uniform(1, 1, 1, 1.0)
    assert memory_estimate(tiny) == 10


def test_matrix_adjoint_identity():
    grid = make_grid(24, 24, 1, 1.0 / 24)
    prop = Propagator.with_disk_attenuation(grid, n_theta=36)
    op = build_matrix(prop)
    rng = np.random.default_rng(23)
    a = Field(grid, rng.standard_normal(grid.shape))
    g = Sinogram(prop.sino_spec, rng.standard_normal(prop.sino_spec.shape))
    pa = op.forward(a)
    lhs = sinogram_inner(pa, g, grid)
    rhs = tomogram_inner(a, op.backward(g))
    assert abs(lhs - rhs) / (np.linalg.norm(pa.flat) * np.linalg.norm(g.flat)) <= 1e-10


def test_matrix_shared_slices_for_z_invariant_attenuation():
    grid = make_grid(12, 12, 4, 1.0 / 12)
    spec = SinogramSpec.uniform(12, 8, 4, grid.extent_x)
    at, aa = disk_attenuation_fields(grid, 0.001)
    op = build_matrix(Propagator(grid, spec, at, aa))
    assert op.shared
    assert len(op._mats) == 1
    # logical nnz counts every slice
    assert op.nnz == op._mats[0].nnz * 4
