import numpy as np
import pytest

from shapemetric.errors import GridDataError
from shapemetric.isosurface import marching_cubes
from shapemetric.mesh import Aabb
from shapemetric.sdf import SdfGrid, grid_from_function, sphere_sdf


def _sphere_grid(res, r=0.4):
    return grid_from_function(sphere_sdf(r), res)


def test_sphere_vertices_near_radius():
    g = _sphere_grid(64)
    m = marching_cubes(g, 0.0)
    cell = g.spacing[0]
    err = np.abs(np.linalg.norm(m.vertices, axis=1) - 0.4)
    assert err.max() < 1.5 * cell
    assert m.is_watertight()


def test_offset_surface_at_quarter_iso():
    g = _sphere_grid(64)
    m = marching_cubes(g, 0.25)
    err = np.abs(np.linalg.norm(m.vertices, axis=1) - 0.65)
    assert err.max() < 1.5 * g.spacing[0]


def test_no_crossing_gives_empty_mesh():
    g = SdfGrid(4, Aabb.cube(1.0), np.ones((4, 4, 4)))
    m = marching_cubes(g, 0.0)
    assert m.is_empty and len(m.vertices) == 0


def test_non_finite_values_raise(monkeypatch):
    g = _sphere_grid(8)
    bad = g.values.copy()
    bad[3, 3, 3] = np.inf
    object.__setattr__(g, "values", bad)
    with pytest.raises(GridDataError):
        marching_cubes(g)


def test_normals_point_toward_increasing_values():
    m = marching_cubes(_sphere_grid(32), 0.0)
    centroid_dir = m.triangles.mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", m.face_normals, centroid_dir) > 0)
    # inverted field flips the orientation
    g = grid_from_function(lambda p: 0.4 - np.linalg.norm(p, axis=1), 32)
    m2 = marching_cubes(g, 0.0)
    assert np.all(np.einsum("ij,ij->i", m2.face_normals, m2.triangles.mean(axis=1)) < 0)


def test_vertices_sit_on_straddling_edges_at_interpolation_parameter():
    g = grid_from_function(lambda p: np.sin(4 * p[:, 0]) + np.cos(3 * p[:, 1]) * p[:, 2] - 0.1, 12)
    iso = 0.05
    m = marching_cubes(g, iso)
    idx = (m.vertices - g.domain.min) / g.spacing
    for v in idx:
        snapped = np.round(v)
        axes = np.flatnonzero(np.abs(v - snapped) > 1e-9)
        assert len(axes) <= 1
        lo = snapped.astype(int)
        if len(axes):
            lo[axes[0]] = int(np.floor(v[axes[0]]))
        frac = v - lo
        if len(axes) == 0:
            # vertex on a lattice point: that value equals iso
            assert abs(g.values[tuple(lo)] - iso) < 1e-9
            continue
        a = axes[0]
        hi = lo.copy()
        hi[a] += 1
        v0, v1 = g.values[tuple(lo)], g.values[tuple(hi)]
        assert (v0 < iso) != (v1 < iso)
        assert abs(frac[a] - (iso - v0) / (v1 - v0)) < 1e-9


def test_convergence_first_order():
    errs = []
    for res in (16, 32, 64):
        m = marching_cubes(_sphere_grid(res), 0.0)
        errs.append(np.abs(np.linalg.norm(m.vertices, axis=1) - 0.4).max())
    assert errs[1] <= errs[0] / 2 and errs[2] <= errs[1] / 2


def test_surface_touching_boundary_is_open_but_valid():
    g = grid_from_function(lambda p: p[:, 2], 8)  # a plane crossing the whole box
    m = marching_cubes(g, 0.0)
    assert len(m.faces) == 2 * 7 * 7
    assert np.allclose(m.vertices[:, 2], 0.0, atol=1e-12)
    assert np.allclose(m.face_normals, [0, 0, 1])


def test_deterministic_output():
    g = _sphere_grid(24)
    a, b = marching_cubes(g), marching_cubes(g)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.faces, b.faces)


def test_all_single_corner_cases_close_up():
    # every 8-corner sign pattern of an isolated cell padded by outside values
    for case in range(1, 255):
        vals = np.ones((4, 4, 4))
        for bit in range(8):
            dx, dy, dz = (bit & 1) ^ ((bit >> 1) & 1), (bit >> 1) & 1, (bit >> 2) & 1
            if case >> bit & 1:
                vals[1 + dx, 1 + dy, 1 + dz] = -1.0
        m = marching_cubes(SdfGrid(4, Aabb.cube(3.0), vals), 0.0)
        assert m.is_watertight(), case
