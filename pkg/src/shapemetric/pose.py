"""Rigid poses for the object-centered and viewer-centered regimes.

Axis convention: Y is up and the camera sits on +Z looking at the origin.
Azimuth spins the object about +Y; elevation then tilts it about +X, the
camera-right axis, so a positive elevation shows more of the object's top.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyGeometryError
from .mesh import TriangleMesh, bounding_box

ELEVATION_RANGE_DEG = (-50.0, 50.0)
AZIMUTH_RANGE_DEG = (0.0, 360.0)
UP_AXIS = np.array([0.0, 1.0, 0.0])
RIGHT_AXIS = np.array([1.0, 0.0, 0.0])


class DofTag(str, enum.Enum):
    OC = "OC"
    VC2 = "VC2"
    VC3 = "VC3"


class PivotMode(str, enum.Enum):
    BBOX_CENTER = "BBOX_CENTER"
    FILE_ORIGIN = "FILE_ORIGIN"


@dataclass(frozen=True, eq=False)
class RigidPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dof_tag: DofTag = DofTag.OC

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        p = np.array(self.pivot, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "pivot", p)
        object.__setattr__(self, "dof_tag", DofTag(self.dof_tag))

    def apply(self, points) -> np.ndarray:
        """``R (p - pivot) + pivot`` for each row."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.pivot) @ self.rotation.T + self.pivot

    def to_dict(self) -> dict:
        return {
            "dof": self.dof_tag.value,
            "rotation": self.rotation.tolist(),
            "pivot": self.pivot.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidPose":
        return cls(np.array(d["rotation"]), np.array(d.get("pivot", [0, 0, 0])), DofTag(d["dof"]))


def identity_pose() -> RigidPose:
    return RigidPose(dof_tag=DofTag.OC)


def axis_rotation(axis, angle_rad: float) -> np.ndarray:
    """Right-handed rotation matrix about ``axis`` (Rodrigues)."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)


def view_rotation(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    r_az = axis_rotation(UP_AXIS, math.radians(azimuth_deg))
    r_el = axis_rotation(RIGHT_AXIS, math.radians(elevation_deg))
    return r_el @ r_az


def view_angles(rotation) -> tuple[float, float]:
    """Recover ``(azimuth_deg, elevation_deg)`` from a :func:`view_rotation` matrix.

    Azimuth is returned in [0, 360).
    """
    r = np.asarray(rotation)
    elevation = math.degrees(math.atan2(r[2, 1], r[1, 1]))
    azimuth = math.degrees(math.atan2(r[0, 2], r[0, 0])) % 360.0
    return azimuth, elevation


def pose_from_angles(azimuth_deg: float, elevation_deg: float) -> RigidPose:
    return RigidPose(view_rotation(azimuth_deg, elevation_deg), dof_tag=DofTag.VC2)


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _draw_view(rng) -> np.ndarray:
    azimuth = rng.uniform(*AZIMUTH_RANGE_DEG)
    lo, hi = ELEVATION_RANGE_DEG
    # closed interval: nextafter keeps the upper endpoint reachable
    elevation = rng.uniform(lo, np.nextafter(hi, np.inf))
    return view_rotation(azimuth, elevation)


def sample_pose_2dof(rng_seed: int, view: int = 0) -> RigidPose:
    """Azimuth uniform in [0, 360), elevation uniform in [-50, 50] degrees."""
    return RigidPose(_draw_view(_rng(rng_seed, 1, view)), dof_tag=DofTag.VC2)


def random_rotation(rng) -> np.ndarray:
    """Haar-uniform rotation from a uniform unit quaternion (Shoemake's method)."""
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    w = a * math.sin(2.0 * math.pi * u2)
    x = a * math.cos(2.0 * math.pi * u2)
    y = b * math.sin(2.0 * math.pi * u3)
    z = b * math.cos(2.0 * math.pi * u3)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def object_rotation(rng_seed: int) -> np.ndarray:
    """The per-object SO(3) pre-rotation used by the 3-DOF regime."""
    return random_rotation(_rng(rng_seed, 0))


def sample_pose_3dof(rng_seed: int, view: int = 0) -> RigidPose:
    """A 2-DOF view composed after a uniform random object rotation.

    The SO(3) part depends only on ``rng_seed`` so every ``view`` of one object
    shares it; the azimuth/elevation part differs per view.
    """
    r = _draw_view(_rng(rng_seed, 1, view)) @ object_rotation(rng_seed)
    return RigidPose(r, dof_tag=DofTag.VC3)


def sample_pose(dof, rng_seed: int, view: int = 0) -> RigidPose:
    dof = DofTag(dof)
    if dof is DofTag.OC:
        return identity_pose()
    if dof is DofTag.VC2:
        return sample_pose_2dof(rng_seed, view)
    return sample_pose_3dof(rng_seed, view)


def rotation_angle(rotation) -> float:
    """Angle in radians of a rotation matrix, in [0, pi]."""
    c = (np.trace(rotation) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


def apply_pose(mesh: TriangleMesh, pose: RigidPose, pivot_mode=PivotMode.BBOX_CENTER) -> TriangleMesh:
    """Rotate ``mesh`` about its bounding-box center or the file origin."""
    if len(mesh.vertices) == 0:
        raise EmptyGeometryError("cannot pose an empty mesh")
    if PivotMode(pivot_mode) is PivotMode.BBOX_CENTER:
        pose = replace(pose, pivot=bounding_box(mesh).center)
    else:
        pose = replace(pose, pivot=np.zeros(3))
    return mesh.with_vertices(pose.apply(mesh.vertices))
