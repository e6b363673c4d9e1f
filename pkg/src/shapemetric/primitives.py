"""Closed, outward-oriented primitive meshes and a small test corpus."""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriangleMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron: ``10 * 4**s + 2`` vertices, ``20 * 4**s`` faces."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    v = np.array(verts, dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(faces, dtype=np.int64)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        base = len(v)
        v = np.concatenate([v, mid])
        nf = len(f)
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab = base + inv[:nf]
        bc = base + inv[nf : 2 * nf]
        ca = base + inv[2 * nf :]
        f = np.concatenate(
            [
                np.stack([a, ab, ca], 1),
                np.stack([b, bc, ab], 1),
                np.stack([c, ca, bc], 1),
                np.stack([ab, bc, ca], 1),
            ]
        )
    return TriangleMesh(v * radius + np.asarray(center, dtype=np.float64), f, name=f"icosphere{subdivisions}")


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    sx, sy, sz = (np.asarray(size, dtype=np.float64) / 2.0).tolist()
    v = np.array(
        [
            (-sx, -sy, -sz), (sx, -sy, -sz), (sx, sy, -sz), (-sx, sy, -sz),
            (-sx, -sy, sz), (sx, -sy, sz), (sx, sy, sz), (-sx, sy, sz),
        ]
    )
    f = np.array(
        [
            (0, 2, 1), (0, 3, 2),  # -z
            (4, 5, 6), (4, 6, 7),  # +z
            (0, 1, 5), (0, 5, 4),  # -y
            (3, 7, 6), (3, 6, 2),  # +y
            (0, 4, 7), (0, 7, 3),  # -x
            (1, 2, 6), (1, 6, 5),  # +x
        ]
    )
    return TriangleMesh(v + np.asarray(center, dtype=np.float64), f, name="box")


def square(side: float = 1.0, z: float = 0.0, center=(0.0, 0.0)) -> TriangleMesh:
    """Open square in the plane ``z``, normal +Z, spanning ``center +- side/2``."""
    h = side / 2.0
    cx, cy = center
    v = np.array([(cx - h, cy - h, z), (cx + h, cy - h, z), (cx + h, cy + h, z), (cx - h, cy + h, z)])
    return TriangleMesh(v, [(0, 1, 2), (0, 2, 3)], name="square")


def _revolve(profile, segments: int, name: str) -> TriangleMesh:
    """Surface of revolution about +Y.

    ``profile`` is a list of (radius, y) from bottom to top; end points with
    radius 0 become poles, otherwise flat caps are added.
    """
    profile = [(float(r), float(y)) for r, y in profile]
    theta = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    verts, rings = [], []
    for r, y in profile:
        if r == 0.0:
            rings.append([len(verts)])
            verts.append((0.0, y, 0.0))
        else:
            idx = list(range(len(verts), len(verts) + segments))
            rings.append(idx)
            # theta measured from +Z toward +X keeps the winding outward below
            verts.extend(zip(r * np.sin(theta), np.full(segments, y), r * np.cos(theta)))
    faces = []

    def cap(ring, y, up):
        c = len(verts)
        verts.append((0.0, y, 0.0))
        for i in range(segments):
            a, b = ring[i], ring[(i + 1) % segments]
            faces.append((c, a, b) if up else (c, b, a))

    if len(rings[0]) > 1:
        cap(rings[0], profile[0][1], up=False)
    for lo, hi in zip(rings[:-1], rings[1:]):
        for i in range(segments):
            j = (i + 1) % segments
            if len(lo) == 1:
                faces.append((lo[0], hi[j], hi[i]))
            elif len(hi) == 1:
                faces.append((lo[i], lo[j], hi[0]))
            else:
                faces.append((lo[i], lo[j], hi[j]))
                faces.append((lo[i], hi[j], hi[i]))
    if len(rings[-1]) > 1:
        cap(rings[-1], profile[-1][1], up=True)
    return TriangleMesh(np.array(verts), np.array(faces), name=name)


def cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 64) -> TriangleMesh:
    h = height / 2.0
    return _revolve([(radius, -h), (radius, h)], segments, "cylinder")


def cone(radius: float = 0.5, height: float = 1.0, segments: int = 64) -> TriangleMesh:
    h = height / 2.0
    return _revolve([(radius, -h), (0.0, h)], segments, "cone")


def frustum(r_bottom: float, r_top: float, height: float = 1.0, segments: int = 64) -> TriangleMesh:
    h = height / 2.0
    return _revolve([(r_bottom, -h), (r_top, h)], segments, "frustum")


def capsule(radius: float = 0.25, length: float = 0.5, segments: int = 48, rings: int = 12) -> TriangleMesh:
    prof = []
    for k in range(rings + 1):
        a = -math.pi / 2 + (math.pi / 2) * k / rings
        prof.append((radius * math.cos(a), -length / 2 + radius * math.sin(a)))
    for k in range(rings + 1):
        a = (math.pi / 2) * k / rings
        prof.append((radius * math.cos(a), length / 2 + radius * math.sin(a)))
    prof[0] = (0.0, prof[0][1])
    prof[-1] = (0.0, prof[-1][1])
    return _revolve(prof, segments, "capsule")


def torus(major: float = 0.35, minor: float = 0.12, segments: int = 64, tube_segments: int = 32) -> TriangleMesh:
    u = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    w = np.linspace(0.0, 2.0 * math.pi, tube_segments, endpoint=False)
    uu, ww = np.meshgrid(u, w, indexing="ij")
    rr = major + minor * np.cos(ww)
    v = np.stack([rr * np.cos(uu), minor * np.sin(ww), rr * np.sin(uu)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(segments):
        i2 = (i + 1) % segments
        for j in range(tube_segments):
            j2 = (j + 1) % tube_segments
            a, b = i * tube_segments + j, i2 * tube_segments + j
            c, d = i2 * tube_segments + j2, i * tube_segments + j2
            faces.append((a, d, c))
            faces.append((a, c, b))
    return TriangleMesh(v, np.array(faces), name="torus")


def ellipsoid(radii=(0.5, 0.3, 0.2), subdivisions: int = 4) -> TriangleMesh:
    s = icosphere(subdivisions, 1.0)
    return TriangleMesh(s.vertices * np.asarray(radii), s.faces, name="ellipsoid")


def merge(*meshes: TriangleMesh, name: str = "merged") -> TriangleMesh:
    verts, faces, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + base)
        base += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces), name=name)


def translated(mesh: TriangleMesh, offset) -> TriangleMesh:
    return TriangleMesh(mesh.vertices + np.asarray(offset, dtype=np.float64), mesh.faces, name=mesh.name)


def primitive_corpus() -> list[tuple[str, TriangleMesh]]:
    """Twenty closed primitives of varied aspect ratio, used for sampling-floor checks."""
    items = [
        ("sphere", icosphere(4, 0.5)),
        ("sphere_coarse", icosphere(2, 0.5)),
        ("cube", box((1.0, 1.0, 1.0))),
        ("slab", box((1.0, 0.6, 0.15))),
        ("plank", box((1.0, 0.2, 0.2))),
        ("cylinder", cylinder(0.5, 1.0)),
        ("disc", cylinder(0.5, 0.1)),
        ("rod", cylinder(0.1, 1.0)),
        ("cone", cone(0.5, 1.0)),
        ("flat_cone", cone(0.5, 0.3)),
        ("frustum", frustum(0.5, 0.25, 0.8)),
        ("capsule", capsule(0.25, 0.5)),
        ("long_capsule", capsule(0.12, 0.75)),
        ("torus", torus(0.35, 0.12)),
        ("thin_torus", torus(0.4, 0.05)),
        ("ellipsoid", ellipsoid((0.5, 0.3, 0.2))),
        ("oblate", ellipsoid((0.5, 0.15, 0.5))),
        ("dumbbell", merge(icosphere(3, 0.2, (-0.3, 0, 0)), icosphere(3, 0.2, (0.3, 0, 0)),
                           name="dumbbell")),
        ("table", merge(box((1.0, 0.06, 0.6), (0, 0.3, 0)),
                        *[box((0.06, 0.6, 0.06), (x, 0.0, z)) for x in (-0.45, 0.45) for z in (-0.25, 0.25)],
                        name="table")),
        ("hex_prism", cylinder(0.5, 0.6, segments=6)),
    ]
    return [(name, TriangleMesh(m.vertices, m.faces, name=name)) for name, m in items]
