"""Area-weighted surface sampling and uniform volume sampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, EmptyGeometryError, ShapeMetricError
from .mesh import TriangleMesh

SPTS_MAGIC = b"SPTS"


def make_rng(seed) -> np.random.Generator:
    """Accepts an int, a SeedSequence or an existing Generator."""
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class SurfacePointSet:
    positions: np.ndarray
    normals: np.ndarray
    face_ids: np.ndarray
    source_mesh_id: str = ""

    def __len__(self):
        return len(self.positions)

    def subset(self, mask) -> "SurfacePointSet":
        return SurfacePointSet(self.positions[mask], self.normals[mask], self.face_ids[mask], self.source_mesh_id)

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0), scale: float = 1.0) -> "SurfacePointSet":
        r = np.asarray(rotation, dtype=np.float64)
        pos = scale * (self.positions @ r.T) + np.asarray(translation, dtype=np.float64)
        return SurfacePointSet(pos, self.normals @ r.T, self.face_ids, self.source_mesh_id)


def _vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    acc = np.zeros_like(mesh.vertices)
    weighted = mesh.face_normals * mesh.face_areas[:, None]
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], weighted)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)


def sample_surface(mesh: TriangleMesh, n: int, rng_seed=0, interpolate_normals: bool = False) -> SurfacePointSet:
    """Draw ``n`` points uniformly over the surface area of ``mesh``.

    A face is picked by inverse CDF over the cumulative face areas, then a
    uniform barycentric point on it. Normals are the flat face normals unless
    ``interpolate_normals`` asks for area-weighted vertex normals blended by
    the barycentric weights.
    """
    if mesh.is_empty:
        raise EmptyGeometryError("cannot sample an empty mesh")
    areas = mesh.face_areas
    cdf = np.cumsum(areas)
    total = cdf[-1]
    if not total > 0.0:
        raise DegenerateGeometryError("mesh has zero surface area")
    n = int(n)
    if n < 0:
        raise ValueError("sample count must be non-negative")
    rng = make_rng(rng_seed)
    u = rng.random(n) * total
    face = np.searchsorted(cdf, u, side="right")
    # u == total can only arise from rounding; zero-area faces are never selected
    face = np.minimum(face, len(cdf) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    tri = mesh.triangles[face]
    pos = w0[:, None] * tri[:, 0] + w1[:, None] * tri[:, 1] + w2[:, None] * tri[:, 2]
    if interpolate_normals:
        vn = _vertex_normals(mesh)[mesh.faces[face]]
        nrm = w0[:, None] * vn[:, 0] + w1[:, None] * vn[:, 1] + w2[:, None] * vn[:, 2]
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    else:
        nrm = mesh.face_normals[face]
    return SurfacePointSet(pos, nrm, face.astype(np.int64), mesh.name)


def sample_volume_uniform(center, side: float, n: int, rng_seed=0) -> np.ndarray:
    """``n`` points i.i.d. uniform in the axis-aligned cube of edge ``side`` about ``center``."""
    if not side > 0:
        raise ValueError("cube side must be positive")
    rng = make_rng(rng_seed)
    c = np.asarray(center, dtype=np.float64).reshape(3)
    return c + (rng.random((int(n), 3)) - 0.5) * side


# --------------------------------------------------------------------------- files


def save_points(points: SurfacePointSet, path) -> None:
    n = len(points)
    rec = np.zeros(
        n, dtype=[("pos", "<f4", 3), ("nrm", "<f4", 3), ("face", "<u4")]
    )
    rec["pos"] = points.positions
    rec["nrm"] = points.normals
    rec["face"] = points.face_ids
    with open(path, "wb") as fh:
        fh.write(SPTS_MAGIC + struct.pack("<I", n))
        fh.write(rec.tobytes())


def load_points(path, source_mesh_id: str = "") -> SurfacePointSet:
    data = Path(path).read_bytes()
    if data[:4] != SPTS_MAGIC:
        raise ShapeMetricError(f"{path}: not an SPTS point file")
    (n,) = struct.unpack_from("<I", data, 4)
    rec = np.frombuffer(data, dtype=[("pos", "<f4", 3), ("nrm", "<f4", 3), ("face", "<u4")], count=n, offset=8)
    return SurfacePointSet(
        rec["pos"].astype(np.float64), rec["nrm"].astype(np.float64), rec["face"].astype(np.int64), source_mesh_id
    )


def save_points_xyz(points: SurfacePointSet, path) -> None:
    """ASCII ``x y z nx ny nz`` per line, for quick inspection."""
    np.savetxt(path, np.hstack([points.positions, points.normals]), fmt="%.9g")
