import numpy as np
import pytest

from vamplan.grids import (
    Field,
    constant_field,
    field_add,
    field_multiply,
    field_scale,
    field_stats,
    inscribed_disk_mask,
    make_grid,
)


def test_make_grid_extents():
    grid = make_grid(512, 512, 1, 0.002)
    assert grid.extent_x == pytest.approx(1.024)
    assert grid.extent_y == pytest.approx(1.024)

    single = make_grid(1, 1, 1, 1.0)
    assert single.extent_x == 1.0

    grid128 = make_grid(128, 128, 1, 0.0078125)
    assert grid128.extent_x == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [(0, 4, 1, 0.1), (4, -1, 1, 0.1), (4, 4, 0, 0.1), (4, 4, 1, 0.0), (4, 4, 1, -2.0)])
def test_make_grid_rejects_bad_inputs(bad):
    with pytest.raises(ValueError):
        make_grid(*bad)


def test_disk_mask_2x2():
    # centers at (+-h/2, +-h/2), radius h: all four inside (distance ~0.707 h)
    grid = make_grid(2, 2, 1, 1.0)
    mask = inscribed_disk_mask(grid)
    assert np.all(mask.values == 1.0)


def test_disk_mask_single_voxel():
    mask = inscribed_disk_mask(make_grid(1, 1, 1, 1.0))
    assert mask.values[0, 0, 0] == 1.0


def test_disk_mask_area_ratio():
    grid = make_grid(512, 512, 1, 0.002)
    mask = inscribed_disk_mask(grid)
    ratio = mask.values.mean()
    assert abs(ratio - np.pi / 4) / (np.pi / 4) < 0.01


def test_disk_mask_rotation_invariant():
    grid = make_grid(64, 64, 1, 0.01)
    m = inscribed_disk_mask(grid).values[0]
    assert np.array_equal(m, np.rot90(m))


def test_disk_mask_rejects_non_square():
    with pytest.raises(ValueError):
        inscribed_disk_mask(make_grid(4, 8, 1, 0.1))


def test_field_stats_constant():
    grid = make_grid(2, 2, 1, 1.0)
    assert field_stats(constant_field(grid, 0.5)) == pytest.approx((0.5, 0.5, 0.5, 1.0))


def test_field_stats_mixed():
    grid = make_grid(4, 1, 1, 1.0)
    f = Field(grid, np.array([0.0, 1.0, 1.0, 0.0]))
    lo, hi, mean, norm = field_stats(f)
    assert (lo, hi, mean) == (0.0, 1.0, 0.5)
    assert norm == pytest.approx(np.sqrt(2))


def test_field_stats_zero():
    grid = make_grid(3, 3, 1, 1.0)
    assert field_stats(constant_field(grid, 0.0)) == (0.0, 0.0, 0.0, 0.0)


def test_field_validation():
    grid = make_grid(2, 2, 1, 1.0)
    with pytest.raises(ValueError):
        Field(grid, np.zeros(5))
    with pytest.raises(ValueError):
        Field(grid, np.array([0.0, np.nan, 0.0, 0.0]))


def test_field_values_readonly():
    f = constant_field(make_grid(2, 2, 1, 1.0), 1.0)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 2.0


def test_field_arithmetic_exact_and_commutative():
    grid = make_grid(4, 3, 2, 0.5)
    rng = np.random.default_rng(0)
    a = Field(grid, rng.standard_normal(grid.shape))
    b = Field(grid, rng.standard_normal(grid.shape))
    assert np.array_equal(field_add(a, b).values, field_add(b, a).values)
    assert np.array_equal(field_multiply(a, b).values, field_multiply(b, a).values)
    assert np.array_equal(field_scale(a, 2.0).values, 2.0 * a.values)


def test_field_arithmetic_grid_mismatch():
    a = constant_field(make_grid(2, 2, 1, 1.0), 1.0)
    b = constant_field(make_grid(2, 2, 1, 0.5), 1.0)
    with pytest.raises(ValueError):
        field_add(a, b)


def test_flat_order_x_fastest():
    grid = make_grid(2, 2, 1, 1.0)
    # values[z, y, x]: x must vary fastest in the flat view
    f = Field(grid, np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    assert list(f.flat) == [1.0, 2.0, 3.0, 4.0]
