"""Triangle meshes, bounding boxes, OBJ/OFF I/O and unit-cube normalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import (
    DegenerateGeometryError,
    EmptyGeometryError,
    MeshFormatError,
    MeshStructureError,
)

logger = logging.getLogger(__name__)

# normals of faces whose cross product is below this are reported as zero
_AREA_EPS = 1e-300


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"Aabb min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", _frozen(lo.copy()))
        object.__setattr__(self, "max", _frozen(hi.copy()))

    @classmethod
    def cube(cls, side: float, center=(0.0, 0.0, 0.0)) -> "Aabb":
        c = np.asarray(center, dtype=np.float64)
        return cls(c - side / 2.0, c + side / 2.0)

    @property
    def center(self) -> np.ndarray:
        return (self.min + self.max) / 2.0

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.min - tol) & (p <= self.max + tol), axis=-1)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle soup with per-face unit normals.

    Arrays are copied and made read-only on construction. Faces with zero
    area are kept; their stored normal is the zero vector and they are
    listed by :attr:`degenerate_faces`.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = ""
    face_normals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True)
        f = np.array(self.faces, dtype=np.int64, copy=True)
        if v.size == 0:
            v = v.reshape(0, 3)
        if f.size == 0:
            f = f.reshape(0, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshStructureError(f"vertices must be (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshStructureError(f"faces must be (F, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshStructureError("vertex coordinates must be finite")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            bad = int(np.argmax(np.any((f < 0) | (f >= len(v)), axis=1)))
            raise MeshStructureError(
                f"face {bad} references vertex {f[bad].tolist()} but mesh has {len(v)} vertices"
            )
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))
        cross = self._cross()
        norm = np.linalg.norm(cross, axis=1)
        normals = np.zeros_like(cross)
        ok = norm > _AREA_EPS
        normals[ok] = cross[ok] / norm[ok, None]
        object.__setattr__(self, "face_normals", _frozen(normals))

    def _cross(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def __len__(self):
        return len(self.faces)

    def __repr__(self):
        return f"TriangleMesh(name={self.name!r}, n_vertices={len(self.vertices)}, n_faces={len(self.faces)})"

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner positions."""
        return self.vertices[self.faces]

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _frozen(0.5 * np.linalg.norm(self._cross(), axis=1))

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def degenerate_faces(self) -> np.ndarray:
        return np.flatnonzero(~np.any(self.face_normals != 0.0, axis=1))

    @cached_property
    def bvh(self):
        from .bvh import Bvh

        return Bvh(self.triangles)

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces, with opposite direction."""
        if self.is_empty:
            return False
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts != 2):
            return False
        # consistent orientation: every directed edge appears once
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        return bool(np.all(dcounts == 1))

    def with_vertices(self, vertices) -> "TriangleMesh":
        return TriangleMesh(vertices, self.faces, name=self.name)

    def submesh(self, face_mask) -> "TriangleMesh":
        """Keep the selected faces and the vertices they reference."""
        faces = self.faces[np.asarray(face_mask)]
        used, inverse = np.unique(faces, return_inverse=True)
        return TriangleMesh(self.vertices[used], inverse.reshape(-1, 3), name=self.name)


def empty_mesh(name: str = "") -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), name=name)


def bounding_box(mesh: TriangleMesh) -> Aabb:
    if len(mesh.vertices) == 0:
        raise EmptyGeometryError("bounding box of a mesh without vertices")
    return Aabb(mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))


def normalize_to_unit_cube(mesh: TriangleMesh) -> Tuple[TriangleMesh, float, np.ndarray]:
    """Scale and translate so the bounding box is centered at the origin with longest side 1.

    Returns ``(normalized, scale, offset)`` with ``normalized.vertices == scale * v + offset``.
    """
    if len(mesh.vertices) == 0:
        raise EmptyGeometryError("cannot normalize a mesh without vertices")
    box = bounding_box(mesh)
    longest = float(box.extent.max())
    if not longest > 0.0:
        raise DegenerateGeometryError("all vertices coincide; mesh has zero extent")
    scale = 1.0 / longest
    offset = -box.center * scale
    return mesh.with_vertices(mesh.vertices * scale + offset), scale, offset


# --------------------------------------------------------------------------- I/O


@dataclass
class LoadReport:
    path: str
    n_vertices: int
    n_faces: int
    degenerate_faces: np.ndarray
    n_polygons_split: int = 0

    @property
    def n_degenerate(self) -> int:
        return len(self.degenerate_faces)


def _fmt(x: float, digits: int) -> str:
    return f"{x:.{digits}g}"


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(lines, path):
    verts, faces = [], []
    split = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshFormatError("vertex record needs 3 coordinates", path, lineno)
            try:
                verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshFormatError(f"bad vertex coordinate in {line!r}", path, lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshFormatError("face record needs at least 3 indices", path, lineno)
            poly = []
            for tok in parts[1:]:
                try:
                    idx = int(tok.split("/", 1)[0])
                except ValueError:
                    raise MeshFormatError(f"bad face index {tok!r}", path, lineno) from None
                if idx == 0:
                    raise MeshStructureError(f"{path}:{lineno}: OBJ indices are 1-based, got 0")
                # negative indices count back from the latest vertex
                poly.append(idx - 1 if idx > 0 else len(verts) + idx)
            if len(poly) > 3:
                split += 1
            faces.extend(_fan(poly))
    return verts, faces, split


def _parse_off(lines, path):
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    if not rows:
        raise MeshFormatError("empty OFF file", path, 1)
    lineno, head = rows[0]
    if not head.startswith("OFF"):
        raise MeshFormatError(f"expected 'OFF' header, got {head!r}", path, lineno)
    rest = head[3:].split()
    pos = 1
    if not rest:
        if len(rows) < 2:
            raise MeshFormatError("missing counts line", path, lineno)
        lineno, counts_line = rows[1]
        rest = counts_line.split()
        pos = 2
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshFormatError("bad counts line", path, lineno) from None
    if len(rows) < pos + nv + nf:
        raise MeshFormatError(
            f"expected {nv} vertices and {nf} faces, file ends early", path, rows[-1][0]
        )
    verts, faces = [], []
    split = 0
    for lineno, line in rows[pos : pos + nv]:
        parts = line.split()
        try:
            verts.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except (ValueError, IndexError):
            raise MeshFormatError(f"bad vertex line {line!r}", path, lineno) from None
    for lineno, line in rows[pos + nv : pos + nv + nf]:
        parts = line.split()
        try:
            k = int(parts[0])
            poly = [int(t) for t in parts[1 : 1 + k]]
        except ValueError:
            raise MeshFormatError(f"bad face line {line!r}", path, lineno) from None
        if len(poly) != k or k < 3:
            raise MeshFormatError(f"face line declares {k} indices: {line!r}", path, lineno)
        if k > 3:
            split += 1
        faces.extend(_fan(poly))
    return verts, faces, split


def _guess_format(path: Path, fmt: Optional[str]) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).upper()
    if fmt not in ("OBJ", "OFF"):
        raise MeshFormatError(f"unsupported mesh format {fmt!r}", path)
    return fmt


def load_mesh_report(path, format: Optional[str] = None) -> Tuple[TriangleMesh, LoadReport]:
    path = Path(path)
    fmt = _guess_format(path, format)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MeshFormatError(f"not a text file ({exc.reason})", path) from None
    lines = text.splitlines()
    parse = _parse_obj if fmt == "OBJ" else _parse_off
    verts, faces, split = parse(lines, path)
    try:
        mesh = TriangleMesh(
            np.array(verts, dtype=np.float64).reshape(-1, 3),
            np.array(faces, dtype=np.int64).reshape(-1, 3),
            name=path.stem,
        )
    except MeshStructureError as exc:
        raise MeshStructureError(f"{path}: {exc}") from None
    report = LoadReport(str(path), len(mesh.vertices), len(mesh.faces), mesh.degenerate_faces, split)
    if report.n_degenerate:
        logger.info("%s: %d zero-area faces retained", path, report.n_degenerate)
    return mesh, report


def load_mesh(path, format: Optional[str] = None) -> TriangleMesh:
    """Read an ASCII OBJ or OFF file. Polygons are fan-triangulated."""
    return load_mesh_report(path, format)[0]


def save_mesh(mesh: TriangleMesh, path, format: Optional[str] = None, digits: int = 9) -> None:
    path = Path(path)
    fmt = _guess_format(path, format)
    out = []
    if fmt == "OBJ":
        for x, y, z in mesh.vertices:
            out.append(f"v {_fmt(x, digits)} {_fmt(y, digits)} {_fmt(z, digits)}")
        for a, b, c in mesh.faces + 1:
            out.append(f"f {a} {b} {c}")
    else:
        out.append("OFF")
        out.append(f"{len(mesh.vertices)} {len(mesh.faces)} 0")
        for x, y, z in mesh.vertices:
            out.append(f"{_fmt(x, digits)} {_fmt(y, digits)} {_fmt(z, digits)}")
        for a, b, c in mesh.faces:
            out.append(f"3 {a} {b} {c}")
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
