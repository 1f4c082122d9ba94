"""Staggered-grid containers, file format, and the discrete operators."""

import numpy as np
import pytest

from rtlab import (
    Grid,
    ScalarField,
    VelocityField,
    divergence,
    dirichlet_form,
    gradient,
    inner,
    laplacian_dirichlet,
    norm_l2,
    read_component,
    write_component,
)
from rtlab.assemble import for_grid
from rtlab.operators import center_to_face, face_to_center


def random_velocity(grid, rng):
    v = VelocityField(grid, [rng.standard_normal(grid.face_shape(i))
                             for i in range(grid.d)])
    v.enforce_noslip()
    return v


GRIDS = [Grid((8, 6), (1.0, 0.75)), Grid((5, 4, 6), (1.0, 0.8, 1.2))]


def test_grid_basic_properties():
    g = Grid((8, 6), (2.0, 3.0))
    assert g.d == 2
    assert g.h == (0.25, 0.5)
    assert g.cell_volume == pytest.approx(0.125)
    assert g.n_cells == 48
    assert g.face_shape(0) == (9, 6)
    assert g.face_shape(1) == (8, 7)
    assert g.cell_centers(1)[0] == pytest.approx(0.25)
    assert g.face_coords(0)[-1] == pytest.approx(2.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((0, 4), (1.0, 1.0))
    with pytest.raises(ValueError):
        Grid((4, 4), (1.0,))
    with pytest.raises(ValueError):
        Grid((4, 4), (1.0, -1.0))


def test_field_shape_validation():
    g = Grid((4, 4), (1.0, 1.0))
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros(4))
    with pytest.raises(ValueError):
        VelocityField(g, [np.zeros((4, 4)), np.zeros((4, 5))])


def test_noslip_enforcement_and_boundary_max():
    g = Grid((6, 5), (1.0, 1.0))
    rng = np.random.default_rng(0)
    v = VelocityField(g, [rng.standard_normal(g.face_shape(i))
                          for i in range(2)])
    assert v.boundary_face_max() > 0
    v.enforce_noslip()
    assert v.boundary_face_max() == 0.0


def test_field_file_roundtrip(tmp_path):
    g = Grid((7, 5), (1.5, 1.0))
    rng = np.random.default_rng(3)
    vals = rng.standard_normal(g.face_shape(1))
    path = tmp_path / "comp.rtfld"
    write_component(path, g, vals)
    g2, vals2 = read_component(path)
    assert g2 == g
    np.testing.assert_array_equal(vals, vals2)


def test_field_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.rtfld"
    path.write_bytes(b"not a field file at all")
    with pytest.raises(ValueError):
        read_component(path)


@pytest.mark.parametrize("grid", GRIDS)
def test_divergence_gradient_duality(grid):
    # <div v, phi> = -<v, grad phi>: exact summation by parts on the
    # staggered grid with no-slip v
    rng = np.random.default_rng(11)
    v = random_velocity(grid, rng)
    phi = ScalarField(grid, rng.standard_normal(grid.n))
    lhs = inner(divergence(v), phi)
    rhs = -inner(v, gradient(phi))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("grid", GRIDS)
def test_packed_operators_match_field_operators(grid):
    ops = for_grid(grid)
    rng = np.random.default_rng(7)
    v = random_velocity(grid, rng)
    u = ops.space.pack(v)
    np.testing.assert_allclose(
        ops.D @ u, divergence(v).values.ravel(), atol=1e-13
    )
    lap = ops.space.unpack(ops.L @ u)
    ref = laplacian_dirichlet(v)
    for i in range(grid.d):
        np.testing.assert_allclose(lap.components[i], ref.components[i],
                                   atol=1e-11)


@pytest.mark.parametrize("grid", GRIDS)
def test_gradient_is_negative_divergence_transpose(grid):
    ops = for_grid(grid)
    diff = (ops.G + ops.D.T).toarray()
    assert np.abs(diff).max() == 0.0


@pytest.mark.parametrize("grid", GRIDS)
def test_laplacian_symmetric_and_dissipative(grid):
    rng = np.random.default_rng(5)
    v = random_velocity(grid, rng)
    w = random_velocity(grid, rng)
    lv, lw = laplacian_dirichlet(v), laplacian_dirichlet(w)
    assert inner(lv, w) == pytest.approx(inner(v, lw), rel=1e-12)
    # -<Lv, v> equals the Dirichlet (gradient-squared) form
    assert -inner(lv, v) == pytest.approx(dirichlet_form(v), rel=1e-10)
    assert dirichlet_form(v) > 0


def test_face_center_averaging_preserves_constants():
    g = Grid((6, 8), (1.0, 1.0))
    c = 3.5 * np.ones(g.face_shape(1))
    np.testing.assert_allclose(face_to_center(c, 1), 3.5)
    w = center_to_face(2.0 * np.ones(g.n), 1)
    # interior faces average the constant; wall faces carry the no-slip zero
    np.testing.assert_allclose(w[:, 1:-1], 2.0)
    np.testing.assert_allclose(w[:, [0, -1]], 0.0)


def test_constant_pressure_has_zero_gradient():
    g = Grid((6, 6), (1.0, 1.0))
    gphi = gradient(ScalarField(g, np.ones(g.n)))
    assert gphi.max_abs() == 0.0


def test_norm_l2_of_uniform_scalar():
    g = Grid((10, 10), (2.0, 1.0))
    f = ScalarField(g, np.full(g.n, 3.0))
    assert norm_l2(f) == pytest.approx(3.0 * np.sqrt(2.0))
