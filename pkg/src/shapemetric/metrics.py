"""Chamfer distance, normal consistency, F-score and point-occupancy IoU.

All correspondence metrics match every point to its Euclidean nearest
neighbour in the other set. Distances are plain L2 (not squared).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ._parallel import max_threads
from .config import EvalConfig, IouMode
from .errors import DegenerateGeometryError, EmptyGeometryError, ShapeMetricError
from .mesh import TriangleMesh, normalize_to_unit_cube
from .sampling import SurfacePointSet, sample_surface
from .sdf import OccupancySet, generate_training_samples, occupancy_from_sdf, signed_distance

# seed streams spawned from EvalConfig.rng_seed
PRED_STREAM, GT_STREAM, IOU_STREAM = 1, 2, 3


class NnIndex:
    """Exact nearest-neighbour lookup over a fixed point set.

    Ties are resolved toward the lowest point index.
    """

    def __init__(self, points, normals=None):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise EmptyGeometryError("nearest-neighbour index over zero points")
        self.normals = None if normals is None else np.asarray(normals, dtype=np.float64)
        self.tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, queries):
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        workers = max_threads()
        if len(self.points) == 1:
            d = np.linalg.norm(q - self.points[0], axis=1)
            return d, np.zeros(len(q), dtype=np.int64)
        d, idx = self.tree.query(q, k=2, workers=workers)
        dist, nn = d[:, 0].copy(), idx[:, 0].astype(np.int64)
        for row in np.flatnonzero(d[:, 0] == d[:, 1]):
            cand = np.asarray(self.tree.query_ball_point(q[row], dist[row] * (1 + 1e-12) + 1e-300), dtype=np.int64)
            cd = np.sqrt(((self.points[cand] - q[row]) ** 2).sum(axis=1))
            best = cd.min()
            nn[row] = cand[cd == best].min()
            dist[row] = best
        return dist, nn


def _points(s) -> np.ndarray:
    if isinstance(s, SurfacePointSet):
        return s.positions
    return np.asarray(s, dtype=np.float64).reshape(-1, 3)


def _normals(s) -> np.ndarray:
    if isinstance(s, SurfacePointSet):
        return s.normals
    raise TypeError("normal consistency needs SurfacePointSet inputs")


@dataclass(frozen=True, eq=False)
class Correspondence:
    """Nearest neighbours in both directions between two point sets."""

    d12: np.ndarray
    i12: np.ndarray
    d21: np.ndarray
    i21: np.ndarray


def match(s1, s2) -> Correspondence:
    p1, p2 = _points(s1), _points(s2)
    if len(p1) == 0 or len(p2) == 0:
        raise EmptyGeometryError("cannot match an empty point set")
    d12, i12 = NnIndex(p2).query(p1)
    d21, i21 = NnIndex(p1).query(p2)
    return Correspondence(d12, i12, d21, i21)


def chamfer_from(c: Correspondence) -> float:
    return float(c.d12.mean() + c.d21.mean())


def normal_consistency_from(c: Correspondence, n1, n2) -> float:
    a = np.abs(np.einsum("ij,ij->i", n1, n2[c.i12]))
    b = np.abs(np.einsum("ij,ij->i", n2, n1[c.i21]))
    return float(0.5 * a.mean() + 0.5 * b.mean())


def fscore_from(c: Correspondence, d_percent: float) -> tuple[float, float, float]:
    if not d_percent > 0:
        raise ValueError("F-score threshold must be positive")
    t = d_percent / 100.0
    precision = float(np.mean(c.d12 < t))
    recall = float(np.mean(c.d21 < t))
    if precision + recall == 0.0:
        return 0.0, precision, recall
    return 2.0 * precision * recall / (precision + recall), precision, recall


def chamfer(s1, s2) -> float:
    """Mean nearest distance from ``s1`` to ``s2`` plus the mean from ``s2`` to ``s1``."""
    return chamfer_from(match(s1, s2))


def normal_consistency(s1: SurfacePointSet, s2: SurfacePointSet) -> float:
    """Average ``|<n_x, n_nn(x)>|`` over both directions, each weighted one half."""
    return normal_consistency_from(match(s1, s2), _normals(s1), _normals(s2))


def fscore(s1, s2, d_percent: float) -> tuple[float, float, float]:
    """``(fs, precision, recall)`` at a threshold of ``d_percent`` % of the unit side.

    Precision counts points of ``s1`` (the prediction) strictly closer than
    the threshold to ``s2``; recall the converse.
    """
    return fscore_from(match(s1, s2), d_percent)


def iou_points(occ1, occ2) -> float:
    o1 = occ1.occupied if isinstance(occ1, OccupancySet) else np.asarray(occ1, dtype=bool)
    o2 = occ2.occupied if isinstance(occ2, OccupancySet) else np.asarray(occ2, dtype=bool)
    if o1.shape != o2.shape:
        raise ValueError(f"occupancy lengths differ: {o1.shape} vs {o2.shape}")
    if isinstance(occ1, OccupancySet) and isinstance(occ2, OccupancySet):
        if not np.array_equal(occ1.positions, occ2.positions):
            raise ValueError("occupancies were evaluated at different points")
    union = np.count_nonzero(o1 | o2)
    if union == 0:
        return 1.0
    return np.count_nonzero(o1 & o2) / union


# --------------------------------------------------------------------------- reports


def threshold_key(d: float) -> str:
    return f"{d:g}"


@dataclass
class MetricReport:
    cd: Optional[float] = None
    iou: Optional[float] = None
    nc: Optional[float] = None
    fs: dict = field(default_factory=dict)
    precision: dict = field(default_factory=dict)
    recall: dict = field(default_factory=dict)
    empty_prediction: bool = False
    n_pred_points: int = 0
    n_gt_points: int = 0
    mesh_id: str = ""
    class_label: str = ""
    split: str = ""
    status: str = "ok"
    error: str = ""

    @property
    def scored(self) -> bool:
        return self.status == "ok"

    def to_record(self) -> str:
        """One JSON line."""
        return json.dumps(
            {
                "mesh_id": self.mesh_id,
                "class": self.class_label,
                "split": self.split,
                "status": self.status,
                "cd": self.cd,
                "iou": self.iou,
                "nc": self.nc,
                "fs": self.fs,
                "precision": self.precision,
                "recall": self.recall,
                "empty": self.empty_prediction,
                "n_pred": self.n_pred_points,
                "n_gt": self.n_gt_points,
                "error": self.error,
            },
            sort_keys=False,
        )


def csv_columns(thresholds: Sequence[float]) -> list[str]:
    keys = [threshold_key(t) for t in thresholds]
    return (
        ["mesh_id", "class", "split", "status", "cd", "iou", "nc"]
        + [f"fs@{k}" for k in keys]
        + [f"precision@{k}" for k in keys]
        + [f"recall@{k}" for k in keys]
        + ["empty", "n_pred", "n_gt", "error"]
    )


def _fmt(x) -> str:
    # repr round-trips float64 exactly
    return "" if x is None else repr(float(x))


def _parse(x: str):
    return None if x == "" else float(x)


def report_to_row(r: MetricReport, thresholds: Sequence[float]) -> dict:
    row = {
        "mesh_id": r.mesh_id,
        "class": r.class_label,
        "split": r.split,
        "status": r.status,
        "cd": _fmt(r.cd),
        "iou": _fmt(r.iou),
        "nc": _fmt(r.nc),
    }
    keys = [threshold_key(t) for t in thresholds]
    for name in ("fs", "precision", "recall"):
        for k in keys:
            row[f"{name}@{k}"] = _fmt(getattr(r, name).get(k))
    row["empty"] = "1" if r.empty_prediction else "0"
    row["n_pred"] = str(r.n_pred_points)
    row["n_gt"] = str(r.n_gt_points)
    row["error"] = r.error
    return row


def report_from_row(row: dict) -> MetricReport:
    r = MetricReport(
        cd=_parse(row["cd"]),
        iou=_parse(row["iou"]),
        nc=_parse(row["nc"]),
        empty_prediction=row["empty"] == "1",
        n_pred_points=int(row["n_pred"]),
        n_gt_points=int(row["n_gt"]),
        mesh_id=row["mesh_id"],
        class_label=row["class"],
        split=row.get("split", ""),
        status=row.get("status", "ok"),
        error=row.get("error", ""),
    )
    for col, val in row.items():
        if "@" not in col:
            continue
        name, k = col.split("@", 1)
        v = _parse(val)
        if v is None:
            continue
        getattr(r, name)[k] = v
    return r


# --------------------------------------------------------------------------- pair evaluation


def stream_seed(seed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(stream,))


def correspondence_metrics(s_pred: SurfacePointSet, s_gt: SurfacePointSet, thresholds: Sequence[float]) -> MetricReport:
    """CD, NC and F-scores between two sampled sets (no IoU)."""
    c = match(s_pred, s_gt)
    r = MetricReport(
        cd=chamfer_from(c),
        nc=normal_consistency_from(c, s_pred.normals, s_gt.normals),
        n_pred_points=len(s_pred),
        n_gt_points=len(s_gt),
    )
    for t in thresholds:
        k = threshold_key(t)
        r.fs[k], r.precision[k], r.recall[k] = fscore_from(c, t)
    return r


def empty_report(reason: str = "empty prediction") -> MetricReport:
    return MetricReport(empty_prediction=True, status="empty", error=reason)


def iou_between(pred: TriangleMesh, gt: TriangleMesh, n: int, seed, require_unit_cube: bool = True) -> float:
    """Point-occupancy IoU at GT-centred near-surface plus uniform volume points."""
    pts = generate_training_samples(gt, n, seed, require_unit_cube=require_unit_cube)
    occ_gt = OccupancySet(pts.positions, occupancy_from_sdf(pts.sdf_values, 0.0))
    occ_pred = OccupancySet(
        pts.positions, occupancy_from_sdf(signed_distance(pred, pts.positions, require_unit_cube=require_unit_cube))
    )
    return iou_points(occ_pred, occ_gt)


def prepare_pair(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig):
    """Normalize (per ``cfg``) and sample both meshes; raises on unusable input."""
    if gt.is_empty:
        raise EmptyGeometryError("ground-truth mesh is empty")
    if cfg.normalize:
        gt = normalize_to_unit_cube(gt)[0]
        pred = normalize_to_unit_cube(pred)[0]
    s_pred = sample_surface(pred, cfg.n_pred, stream_seed(cfg.rng_seed, PRED_STREAM))
    s_gt = sample_surface(gt, cfg.n_gt, stream_seed(cfg.rng_seed, GT_STREAM))
    return pred, gt, s_pred, s_gt


def evaluate_pair(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig | None = None) -> MetricReport:
    """Full metric report for one predicted mesh against its ground truth.

    An empty (or zero-area) prediction yields ``empty_prediction=True`` with
    the metric fields left missing. Other unusable input produces a report
    with ``status="error"`` instead of raising.
    """
    cfg = cfg or EvalConfig()
    if pred.is_empty or not pred.area > 0.0:
        return empty_report("empty prediction" if pred.is_empty else "prediction has zero area")
    try:
        pred, gt, s_pred, s_gt = prepare_pair(pred, gt, cfg)
    except (EmptyGeometryError, DegenerateGeometryError) as exc:
        return MetricReport(status="error", error=str(exc))
    report = correspondence_metrics(s_pred, s_gt, cfg.fs_thresholds)
    want_iou = cfg.iou_mode is IouMode.ALWAYS or (
        cfg.iou_mode is IouMode.AUTO and pred.is_watertight() and gt.is_watertight()
    )
    if want_iou:
        try:
            report.iou = float(
                iou_between(pred, gt, cfg.n_iou, stream_seed(cfg.rng_seed, IOU_STREAM),
                            require_unit_cube=cfg.normalize)
            )
        except ShapeMetricError as exc:
            report.error = f"iou skipped: {exc}"
    return report
