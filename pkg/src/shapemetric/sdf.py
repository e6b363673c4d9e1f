"""Signed distance to triangle meshes, training-point generation and SDF grids."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyGeometryError, GridDataError, ShapeMetricError
from .mesh import Aabb, TriangleMesh, bounding_box
from .sampling import make_rng, sample_surface, sample_volume_uniform

SDFG_MAGIC = b"SDFG"
SDFS_MAGIC = b"SDFS"

NEAR_BAND = 0.03
MID_BAND = 0.1
VOLUME_SIDE = 1.2
# near / mid / volume shares; "80% within 0.1" is read as cumulative over the 0.03 band
DEFAULT_FRACTIONS = (0.5, 0.3, 0.2)
WINDING_THRESHOLD = 0.5
# normalized meshes span [-0.5, 0.5]; allow for round-off in the caller's transform
_UNIT_CUBE_TOL = 1e-6


class Bucket(enum.IntEnum):
    NEAR_003 = 0
    NEAR_01 = 1
    VOLUME = 2


@dataclass(frozen=True, eq=False)
class SdfSampleSet:
    positions: np.ndarray
    sdf_values: np.ndarray
    bucket_tags: np.ndarray

    def __len__(self):
        return len(self.positions)

    def counts(self) -> dict:
        return {b.name: int(np.sum(self.bucket_tags == b)) for b in Bucket}


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Corner-aligned lattice: ``values[i, j, k]`` sits at ``domain.min + (i, j, k) * spacing``."""

    resolution: int
    domain: Aabb
    values: np.ndarray

    def __post_init__(self):
        if self.resolution < 2:
            raise GridDataError("grid resolution must be at least 2")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.resolution,) * 3:
            raise GridDataError(f"expected {(self.resolution,) * 3} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridDataError(f"{int(np.sum(~np.isfinite(v)))} grid values are not finite")
        object.__setattr__(self, "values", v)

    @property
    def spacing(self) -> np.ndarray:
        return self.domain.extent / (self.resolution - 1)

    def lattice_points(self) -> np.ndarray:
        """(R, R, R, 3) world positions of the lattice."""
        return lattice(self.resolution, self.domain)


@dataclass(frozen=True, eq=False)
class OccupancySet:
    positions: np.ndarray
    occupied: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "occupied", np.asarray(self.occupied, dtype=bool))
        if len(self.positions) != len(self.occupied):
            raise ValueError("positions and occupancy lengths differ")


def lattice(resolution: int, domain: Aabb) -> np.ndarray:
    axes = [np.linspace(domain.min[k], domain.max[k], resolution) for k in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _check_unit_cube(mesh: TriangleMesh) -> None:
    box = bounding_box(mesh)
    if np.any(box.min < -0.5 - _UNIT_CUBE_TOL) or np.any(box.max > 0.5 + _UNIT_CUBE_TOL):
        raise ShapeMetricError(
            f"mesh bounding box {box.min.tolist()}..{box.max.tolist()} exceeds the unit cube; "
            "normalize it first or pass require_unit_cube=False"
        )


def unsigned_distance(mesh: TriangleMesh, points) -> np.ndarray:
    if mesh.is_empty:
        raise EmptyGeometryError("distance to an empty mesh")
    return mesh.bvh.closest(points)[0]


def winding_number(mesh: TriangleMesh, points, method: str = "auto") -> np.ndarray:
    if mesh.is_empty:
        raise EmptyGeometryError("winding number of an empty mesh")
    return mesh.bvh.winding_number(points, method)


def signed_distance(mesh: TriangleMesh, points, require_unit_cube: bool = True, winding: str = "auto") -> np.ndarray:
    """Exact distance to the nearest triangle, negative where the winding number exceeds 0.5."""
    if mesh.is_empty:
        raise EmptyGeometryError("signed distance to an empty mesh")
    if require_unit_cube:
        _check_unit_cube(mesh)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dist = unsigned_distance(mesh, pts)
    inside = winding_number(mesh, pts, winding) > WINDING_THRESHOLD
    return np.where(inside, -dist, dist)


def occupancy_from_sdf(sdf_values, iso: float = 0.0) -> np.ndarray:
    return np.asarray(sdf_values) <= iso


def bucket_counts(n: int, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    near = int(np.floor(fractions[0] * n + 0.5))
    mid = int(np.floor(fractions[1] * n + 0.5))
    if near + mid > n:
        raise ValueError(f"fractions {fractions} leave no room for {n} points")
    return near, mid, n - near - mid


def _near_surface(mesh, n, band, rng, require_unit_cube, max_rounds=200):
    """Surface points pushed by isotropic Gaussian offsets (sigma = band / 2), kept when |sdf| <= band."""
    pos = np.zeros((0, 3))
    val = np.zeros(0)
    rounds = 0
    while len(pos) < n:
        rounds += 1
        if rounds > max_rounds:
            raise ShapeMetricError(f"could not fill the {band} band after {max_rounds} rounds")
        need = n - len(pos)
        m = need + need // 4 + 16
        base = sample_surface(mesh, m, rng).positions
        cand = base + rng.normal(scale=band / 2.0, size=base.shape)
        sd = signed_distance(mesh, cand, require_unit_cube=require_unit_cube)
        keep = np.abs(sd) <= band
        pos = np.concatenate([pos, cand[keep][:need]])
        val = np.concatenate([val, sd[keep][:need]])
    return pos, val


def generate_training_samples(
    mesh: TriangleMesh,
    n: int,
    rng_seed=0,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    require_unit_cube: bool = True,
) -> SdfSampleSet:
    """Near-surface and volume points with their exact signed distances.

    Bucket sizes are ``round(0.5 n)`` within 0.03 of the surface,
    ``round(0.3 n)`` within 0.1, and the rest uniform in the cube of side 1.2.
    """
    if n < 10:
        raise ValueError("need at least 10 training samples")
    if mesh.is_empty:
        raise EmptyGeometryError("cannot sample an empty mesh")
    if require_unit_cube:
        _check_unit_cube(mesh)
    n_near, n_mid, n_vol = bucket_counts(n, fractions)
    rng = make_rng(rng_seed)
    p0, s0 = _near_surface(mesh, n_near, NEAR_BAND, rng, require_unit_cube)
    p1, s1 = _near_surface(mesh, n_mid, MID_BAND, rng, require_unit_cube)
    p2 = sample_volume_uniform(np.zeros(3), VOLUME_SIDE, n_vol, rng)
    s2 = signed_distance(mesh, p2, require_unit_cube=require_unit_cube)
    tags = np.concatenate(
        [np.full(n_near, Bucket.NEAR_003), np.full(n_mid, Bucket.NEAR_01), np.full(n_vol, Bucket.VOLUME)]
    ).astype(np.uint8)
    return SdfSampleSet(np.concatenate([p0, p1, p2]), np.concatenate([s0, s1, s2]), tags)


def evaluate_grid(
    mesh: TriangleMesh, resolution: int, domain: Aabb | None = None, require_unit_cube: bool = True,
    chunk: int = 1 << 18,
) -> SdfGrid:
    if not 2 <= resolution <= 512:
        raise ValueError("resolution must lie in [2, 512]")
    domain = domain or Aabb.cube(VOLUME_SIDE)
    if np.any(domain.extent <= 0):
        raise ValueError("grid domain must have positive extent on every axis")
    pts = lattice(resolution, domain).reshape(-1, 3)
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        out[s : s + chunk] = signed_distance(mesh, pts[s : s + chunk], require_unit_cube=require_unit_cube)
    return SdfGrid(resolution, domain, out.reshape((resolution,) * 3))


def grid_from_function(fn: Callable[[np.ndarray], np.ndarray], resolution: int, domain: Aabb | None = None) -> SdfGrid:
    """Sample an analytic field ``fn(points[N, 3]) -> values[N]`` on the lattice."""
    domain = domain or Aabb.cube(VOLUME_SIDE)
    pts = lattice(resolution, domain)
    vals = np.asarray(fn(pts.reshape(-1, 3)), dtype=np.float64)
    return SdfGrid(resolution, domain, vals.reshape((resolution,) * 3))


def sphere_sdf(radius: float, center=(0.0, 0.0, 0.0)) -> Callable[[np.ndarray], np.ndarray]:
    c = np.asarray(center, dtype=np.float64)
    return lambda p: np.linalg.norm(np.asarray(p) - c, axis=-1) - radius


# --------------------------------------------------------------------------- files


def save_grid(grid: SdfGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(SDFG_MAGIC + struct.pack("<I", grid.resolution))
        fh.write(struct.pack("<6d", *grid.domain.min, *grid.domain.max))
        # x varies fastest on disk
        fh.write(grid.values.astype("<f4").ravel(order="F").tobytes())


def load_grid(path) -> SdfGrid:
    data = Path(path).read_bytes()
    if data[:4] != SDFG_MAGIC:
        raise GridDataError(f"{path}: not an SDFG grid file")
    (r,) = struct.unpack_from("<I", data, 4)
    corners = struct.unpack_from("<6d", data, 8)
    vals = np.frombuffer(data, dtype="<f4", count=r**3, offset=56)
    return SdfGrid(r, Aabb(corners[:3], corners[3:]), vals.astype(np.float64).reshape((r, r, r), order="F"))


_SDFS_DTYPE = np.dtype([("pos", "<f4", 3), ("sdf", "<f4"), ("bucket", "u1")])


def save_samples(samples: SdfSampleSet, path) -> None:
    rec = np.zeros(len(samples), dtype=_SDFS_DTYPE)
    rec["pos"] = samples.positions
    rec["sdf"] = samples.sdf_values
    rec["bucket"] = samples.bucket_tags
    with open(path, "wb") as fh:
        fh.write(SDFS_MAGIC + struct.pack("<I", len(samples)))
        fh.write(rec.tobytes())


def load_samples(path) -> SdfSampleSet:
    data = Path(path).read_bytes()
    if data[:4] != SDFS_MAGIC:
        raise ShapeMetricError(f"{path}: not an SDFS sample file")
    (n,) = struct.unpack_from("<I", data, 4)
    rec = np.frombuffer(data, dtype=_SDFS_DTYPE, count=n, offset=8)
    return SdfSampleSet(rec["pos"].astype(np.float64), rec["sdf"].astype(np.float64), rec["bucket"].copy())
