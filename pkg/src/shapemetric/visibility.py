"""Pinhole camera rig, ray-cast depth/normal/silhouette maps, and the
visible / self-occluded split of surface samples.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EvalConfig, Occluder
from .errors import EmptyGeometryError, DegenerateGeometryError, ShapeMetricError
from .metrics import MetricReport, correspondence_metrics, prepare_pair
from .mesh import TriangleMesh
from .pose import RigidPose, identity_pose
from .sampling import SurfacePointSet

DNMP_MAGIC = b"DNMP"


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Camera on +Z of ``pose``'s frame, looking at the origin with +Y up.

    Distances are in normalized model units, lens values in millimetres.
    """

    distance: float = 2.2
    focal_length: float = 50.0
    sensor_width: float = 32.0
    resolution: int = 256
    pose: RigidPose = field(default_factory=identity_pose)

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("camera distance must be positive")
        if self.resolution < 1 or self.focal_length <= 0 or self.sensor_width <= 0:
            raise ValueError("invalid camera intrinsics")

    @property
    def half_fov(self) -> float:
        return math.atan(self.sensor_width / 2.0 / self.focal_length)

    @property
    def rotation(self) -> np.ndarray:
        """Columns are the camera right, up and backward axes in world coordinates."""
        return self.pose.rotation

    @property
    def position(self) -> np.ndarray:
        return self.rotation @ np.array([0.0, 0.0, self.distance])

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) unit world directions through pixel centers; row 0 is the top."""
        n = self.resolution
        tan_h = self.sensor_width / 2.0 / self.focal_length
        c = (np.arange(n) + 0.5) / n
        x = (2.0 * c - 1.0) * tan_h
        y = (1.0 - 2.0 * c) * tan_h
        xx, yy = np.meshgrid(x, y)
        d = np.stack([xx, yy, -np.ones_like(xx)], axis=-1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ self.rotation.T


@dataclass(frozen=True, eq=False)
class DepthNormalMaps:
    depth: np.ndarray
    normals: np.ndarray
    silhouette: np.ndarray

    @property
    def shape(self):
        return self.depth.shape


def render_maps(mesh: TriangleMesh, cam: CameraRig) -> DepthNormalMaps:
    """One ray per pixel center; depth is the Euclidean distance along the ray."""
    n = cam.resolution
    if mesh.is_empty:
        return DepthNormalMaps(np.full((n, n), np.inf), np.zeros((n, n, 3)), np.zeros((n, n), dtype=bool))
    dirs = cam.pixel_rays().reshape(-1, 3)
    t, face = mesh.bvh.first_hit(cam.position, dirs)
    hit = face >= 0
    normals = np.zeros((len(dirs), 3))
    nw = mesh.face_normals[face[hit]]
    # flip toward the viewer, then express in camera axes
    flip = np.einsum("ij,ij->i", nw, dirs[hit]) > 0
    nw[flip] *= -1.0
    normals[hit] = nw @ cam.rotation
    depth = np.where(hit, t, np.inf)
    return DepthNormalMaps(depth.reshape(n, n), normals.reshape(n, n, 3), hit.reshape(n, n))


def classify_visibility(samples, mesh: TriangleMesh, cam: CameraRig, eps: float = 1e-4) -> np.ndarray:
    """True where the camera ray toward a sample first meets the mesh within ``eps`` of it."""
    pts = samples.positions if isinstance(samples, SurfacePointSet) else np.asarray(samples, dtype=np.float64)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    if mesh.is_empty:
        return np.ones(len(pts), dtype=bool)
    origin = cam.position
    delta = pts - origin
    dist = np.linalg.norm(delta, axis=1)
    t, _ = mesh.bvh.first_hit(origin, delta / dist[:, None])
    return t >= dist - eps


def _partition_report(s_pred: SurfacePointSet, s_gt: SurfacePointSet, thresholds, which: str) -> MetricReport:
    if len(s_pred) == 0 or len(s_gt) == 0:
        side = "prediction" if len(s_pred) == 0 else "ground truth"
        return MetricReport(
            status="missing",
            error=f"no {which} points on the {side}",
            n_pred_points=len(s_pred),
            n_gt_points=len(s_gt),
        )
    return correspondence_metrics(s_pred, s_gt, thresholds)


def evaluate_decomposed(pred: TriangleMesh, gt: TriangleMesh, cam: CameraRig | None = None,
                        cfg: EvalConfig | None = None) -> tuple[MetricReport, MetricReport]:
    """CD/NC/F-score restricted to the visible and to the self-occluded surface.

    Ground-truth samples are split against the ground-truth mesh; predicted
    samples against the predicted mesh (or the ground truth when
    ``cfg.pred_occluder`` is GT). IoU is never reported for a partition.
    """
    cam = cam or CameraRig()
    cfg = cfg or EvalConfig()
    if pred.is_empty or not pred.area > 0.0:
        reports = tuple(MetricReport(empty_prediction=True, status="empty", error="empty prediction")
                        for _ in range(2))
        return reports
    try:
        pred, gt, s_pred, s_gt = prepare_pair(pred, gt, cfg)
    except (EmptyGeometryError, DegenerateGeometryError) as exc:
        return MetricReport(status="error", error=str(exc)), MetricReport(status="error", error=str(exc))
    occluder = gt if cfg.pred_occluder is Occluder.GT else pred
    vis_gt = classify_visibility(s_gt, gt, cam, cfg.visibility_eps)
    vis_pred = classify_visibility(s_pred, occluder, cam, cfg.visibility_eps)
    visible = _partition_report(s_pred.subset(vis_pred), s_gt.subset(vis_gt), cfg.fs_thresholds, "visible")
    occluded = _partition_report(s_pred.subset(~vis_pred), s_gt.subset(~vis_gt), cfg.fs_thresholds, "occluded")
    visible.split, occluded.split = "visible", "occluded"
    return visible, occluded


# --------------------------------------------------------------------------- files


def save_maps(maps: DepthNormalMaps, path) -> None:
    """Binary DNMP: u32 H, u32 W, H*W f32 depth, H*W*3 f32 normals, H*W u8 silhouette."""
    h, w = maps.depth.shape
    with open(path, "wb") as fh:
        fh.write(DNMP_MAGIC + struct.pack("<II", h, w))
        fh.write(maps.depth.astype("<f4").tobytes())
        fh.write(maps.normals.astype("<f4").tobytes())
        fh.write(maps.silhouette.astype(np.uint8).tobytes())


def load_maps(path) -> DepthNormalMaps:
    data = Path(path).read_bytes()
    if data[:4] != DNMP_MAGIC:
        raise ShapeMetricError(f"{path}: not a DNMP file")
    h, w = struct.unpack_from("<II", data, 4)
    off = 12
    depth = np.frombuffer(data, "<f4", h * w, off).reshape(h, w).astype(np.float64)
    off += 4 * h * w
    normals = np.frombuffer(data, "<f4", 3 * h * w, off).reshape(h, w, 3).astype(np.float64)
    off += 12 * h * w
    if len(data) >= off + h * w:
        sil = np.frombuffer(data, np.uint8, h * w, off).reshape(h, w).astype(bool)
    else:
        sil = np.isfinite(depth)
    return DepthNormalMaps(depth, normals, sil)


def save_map_pngs(maps: DepthNormalMaps, prefix, depth_range=(0.0, 4.0)) -> list[Path]:
    """16-bit depth and normal PNGs plus an 8-bit silhouette mask.

    Depth is scaled linearly so ``depth_range`` covers 1..65535 (0 is
    background); normals map [-1, 1] to [0, 65535] per channel.
    """
    from PIL import Image

    prefix = Path(prefix)
    lo, hi = depth_range
    d = np.clip((maps.depth - lo) / (hi - lo), 0.0, 1.0)
    d16 = np.where(maps.silhouette, 1 + np.round(d * 65534), 0).astype(np.uint16)
    n16 = np.round((maps.normals + 1.0) / 2.0 * 65535).astype(np.uint16)
    n16[~maps.silhouette] = 0
    paths = [prefix.with_name(prefix.name + suffix) for suffix in
             ("_depth.png", "_normal_x.png", "_normal_y.png", "_normal_z.png", "_mask.png")]
    Image.fromarray(d16).save(paths[0])
    for k in range(3):
        Image.fromarray(np.ascontiguousarray(n16[..., k])).save(paths[1 + k])
    Image.fromarray(maps.silhouette.astype(np.uint8) * 255).save(paths[4])
    return paths
