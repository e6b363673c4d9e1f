"""Marching cubes over an :class:`~shapemetric.sdf.SdfGrid`."""

from __future__ import annotations

import numpy as np

from ._mc_tables import CORNERS, EDGES, TRI_TABLE
from .errors import GridDataError
from .mesh import TriangleMesh, empty_mesh
from .sdf import SdfGrid

_CORNERS = np.array(CORNERS, dtype=np.int64)
_EDGES = np.array(EDGES, dtype=np.int64)
_N_TRI = np.array([len(t) // 3 for t in TRI_TABLE], dtype=np.int64)
_TRI = np.full((256, 15), -1, dtype=np.int64)
for _case, _row in enumerate(TRI_TABLE):
    _TRI[_case, : len(_row)] = _row

# each cell edge as (lower lattice corner offset, axis); the lower corner is
# the endpoint with the smaller coordinate along the edge axis
_EDGE_AXIS = np.argmax(np.abs(_CORNERS[_EDGES[:, 1]] - _CORNERS[_EDGES[:, 0]]), axis=1)
_EDGE_LO = np.minimum(_CORNERS[_EDGES[:, 0]], _CORNERS[_EDGES[:, 1]])


def marching_cubes(grid: SdfGrid, iso: float = 0.0) -> TriangleMesh:
    """Triangulate the level set ``{values == iso}``.

    A corner counts as inside when its value is strictly below ``iso``.
    Vertices shared between cells are welded by lattice edge, and faces are
    wound so their normals point toward increasing values. Returns an empty
    mesh when nothing crosses ``iso``.
    """
    vals = np.asarray(grid.values, dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise GridDataError("grid contains non-finite values")
    r = grid.resolution
    below = vals < iso

    case = np.zeros((r - 1,) * 3, dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(CORNERS):
        case |= below[dx : r - 1 + dx, dy : r - 1 + dy, dz : r - 1 + dz].astype(np.int64) << bit
    cells = np.flatnonzero(_N_TRI[case.ravel()] > 0)
    if len(cells) == 0:
        return empty_mesh("isosurface")
    cell_case = case.ravel()[cells]
    ci, cj, ck = np.unravel_index(cells, case.shape)

    n_tri = _N_TRI[cell_case]
    tri_cell = np.repeat(np.arange(len(cells)), n_tri)
    slot = np.arange(len(tri_cell)) - np.repeat(np.cumsum(n_tri) - n_tri, n_tri)
    edge_ids = np.stack([_TRI[cell_case[tri_cell], 3 * slot + m] for m in range(3)], axis=1)

    # global key of a lattice edge: 3 * (flat index of its lower corner) + axis
    lo = _EDGE_LO[edge_ids]
    li = ci[tri_cell, None] + lo[..., 0]
    lj = cj[tri_cell, None] + lo[..., 1]
    lk = ck[tri_cell, None] + lo[..., 2]
    axis = _EDGE_AXIS[edge_ids]
    keys = 3 * ((li * r + lj) * r + lk) + axis
    uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
    faces = inverse.reshape(-1, 3)

    flat, ax = np.divmod(uniq, 3)
    i0, j0, k0 = np.unravel_index(flat, (r, r, r))
    step = np.eye(3, dtype=np.int64)[ax]
    i1, j1, k1 = i0 + step[:, 0], j0 + step[:, 1], k0 + step[:, 2]
    v0 = vals[i0, j0, k0]
    v1 = vals[i1, j1, k1]
    t = (iso - v0) / (v1 - v0)
    idx = np.stack([i0, j0, k0], axis=1) + t[:, None] * step
    verts = grid.domain.min + idx * grid.spacing

    # the classic table winds triangles with normals toward the inside corners
    faces = faces[:, ::-1]
    return TriangleMesh(verts, faces, name="isosurface")
