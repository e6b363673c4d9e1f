"""Dataset manifests, batch evaluation and per-class aggregation."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._parallel import apply_thread_cap
from .config import EmptyPolicy, EvalConfig
from .errors import ManifestError, ShapeMetricError
from .mesh import load_mesh
from .metrics import (
    MetricReport,
    csv_columns,
    empty_report,
    evaluate_pair,
    report_from_row,
    report_to_row,
    threshold_key,
)
from .pose import DofTag, apply_pose, sample_pose
from .visibility import CameraRig, evaluate_decomposed

MANIFEST_COLUMNS = ("mesh_id", "class", "path", "split", "seed")
MESH_SUFFIXES = (".obj", ".off")
METRICS = ("cd", "iou", "nc")
# largest possible CD between two point sets inside the unit cube: 2 * sqrt(3)
WORST_CD = 2.0 * math.sqrt(3.0)


class Split(str, enum.Enum):
    SEEN = "SEEN"
    UNSEEN = "UNSEEN"
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


@dataclass(frozen=True)
class ManifestEntry:
    mesh_id: str
    class_label: str
    path: Path
    split: Split
    seed: Optional[int] = None


@dataclass
class DatasetManifest:
    entries: list

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """CSV with header ``mesh_id,class,path,split,seed``; relative paths resolve against the manifest."""
    path = Path(path)
    base = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS[:4] if c not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError(f"{path}: missing columns {missing}")
        entries, seen = [], set()
        for lineno, row in enumerate(reader, start=2):
            mid = row["mesh_id"].strip()
            if not mid:
                raise ManifestError(f"{path}:{lineno}: empty mesh_id")
            if mid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate mesh_id {mid!r}")
            seen.add(mid)
            try:
                split = Split(row["split"].strip().upper())
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: unknown split {row['split']!r}") from None
            p = Path(row["path"].strip())
            if not p.is_absolute():
                p = base / p
            if check_paths and not p.exists():
                raise ManifestError(f"{path}:{lineno}: mesh file {p} not found")
            raw_seed = (row.get("seed") or "").strip()
            entries.append(ManifestEntry(mid, row["class"].strip(), p, split, int(raw_seed) if raw_seed else None))
    return DatasetManifest(entries)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in manifest:
            p = e.path
            try:
                p = p.relative_to(path.parent)
            except ValueError:
                pass
            w.writerow([e.mesh_id, e.class_label, p.as_posix(), e.split.value, "" if e.seed is None else e.seed])


def manifest_from_tree(root, split=Split.TEST, pattern: str = "*/*/model.obj") -> DatasetManifest:
    """Entries for a ``class/instance/model.obj`` tree; ids are ``class/instance``."""
    root = Path(root)
    entries = []
    for p in sorted(root.glob(pattern)):
        rel = p.relative_to(root).parts
        cls, inst = rel[0], rel[1]
        entries.append(ManifestEntry(f"{cls}/{inst}", cls, p, Split(split)))
    return DatasetManifest(entries)


def find_prediction(pred_dir, mesh_id: str) -> Optional[Path]:
    for suffix in MESH_SUFFIXES:
        p = Path(pred_dir) / f"{mesh_id}{suffix}"
        if p.exists():
            return p
    return None


def entry_seed(cfg: EvalConfig, entry: ManifestEntry) -> int:
    """Stable per-entry sampling seed derived from the run seed and the mesh id."""
    return int(np.random.SeedSequence([cfg.rng_seed, zlib.crc32(entry.mesh_id.encode("utf-8"))]).generate_state(1)[0])


def entry_pose(cfg: EvalConfig, entry: ManifestEntry):
    seed = entry.seed if entry.seed is not None else zlib.crc32(entry.mesh_id.encode("utf-8"))
    return sample_pose(cfg.dof_mode, seed)


def _label(report: MetricReport, entry: ManifestEntry) -> MetricReport:
    report.mesh_id = entry.mesh_id
    report.class_label = entry.class_label
    report.split = entry.split.value
    return report


def _load_pair(entry: ManifestEntry, pred_dir, cfg: EvalConfig):
    """``(pred, gt)`` meshes, or a finished report when the entry cannot be scored."""
    try:
        gt = load_mesh(entry.path)
    except (OSError, ShapeMetricError) as exc:
        return None, MetricReport(status="error", error=f"ground truth: {exc}")
    if cfg.dof_mode is not DofTag.OC and not gt.is_empty:
        gt = apply_pose(gt, entry_pose(cfg, entry), cfg.pivot_mode)
    pred_path = find_prediction(pred_dir, entry.mesh_id)
    if pred_path is None:
        return None, empty_report("missing prediction")
    try:
        pred = load_mesh(pred_path)
    except (OSError, ShapeMetricError) as exc:
        return None, MetricReport(status="error", error=f"prediction: {exc}")
    return (pred, gt), None


def evaluate_entry(entry: ManifestEntry, pred_dir, cfg: EvalConfig) -> MetricReport:
    meshes, report = _load_pair(entry, pred_dir, cfg)
    if report is None:
        report = evaluate_pair(*meshes, cfg.replace(rng_seed=entry_seed(cfg, entry)))
    return _label(report, entry)


def decompose_entry(entry: ManifestEntry, pred_dir, cfg: EvalConfig, cam: CameraRig | None = None):
    meshes, report = _load_pair(entry, pred_dir, cfg)
    if report is not None:
        return _label(report, entry), _label(dataclasses.replace(report), entry)
    vis, occ = evaluate_decomposed(*meshes, cam, cfg.replace(rng_seed=entry_seed(cfg, entry)))
    return _label(vis, entry), _label(occ, entry)


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------- aggregation


@dataclass
class GroupStats:
    n_rows: int = 0
    n_scored: int = 0
    n_empty: int = 0
    n_failed: int = 0
    means: dict = field(default_factory=dict)


@dataclass
class AggregateReport:
    """Per split: per-class stats plus class-mean and instance-mean averages.

    ``avg_class`` is the unweighted mean of class means; ``avg_instance``
    the mean over all scored rows.
    """

    thresholds: tuple
    empty_policy: str
    splits: dict = field(default_factory=dict)  # split -> {"classes": {cls: GroupStats}, "avg_class": {...}, "avg_instance": GroupStats}

    @property
    def is_empty(self) -> bool:
        return not self.splits

    def overall(self, split: str | None = None) -> dict:
        split = split or next(iter(self.splits))
        return self.splits[split]["avg_class"]

    def metric_names(self) -> list[str]:
        keys = [threshold_key(t) for t in self.thresholds]
        return list(METRICS) + [f"fs@{k}" for k in keys]

    def to_table(self) -> str:
        names = self.metric_names()
        out = io.StringIO()
        for split, block in self.splits.items():
            out.write(f"[{split}]\n")
            out.write(f"{'class':<20}{'n':>6}{'empty':>7}{'fail':>6}" + "".join(f"{n:>12}" for n in names) + "\n")
            rows = list(block["classes"].items()) + [("Avg (class)", None), ("Avg (instance)", block["avg_instance"])]
            for cls, st in rows:
                if st is None:
                    means = block["avg_class"]
                    counts = (sum(s.n_rows for s in block["classes"].values()),
                              sum(s.n_empty for s in block["classes"].values()),
                              sum(s.n_failed for s in block["classes"].values()))
                else:
                    means = st.means
                    counts = (st.n_rows, st.n_empty, st.n_failed)
                vals = "".join(f"{_cell(means.get(n)):>12}" for n in names)
                out.write(f"{cls:<20}{counts[0]:>6}{counts[1]:>7}{counts[2]:>6}{vals}\n")
        return out.getvalue()


def _cell(x) -> str:
    return "-" if x is None else f"{x:.4f}"


def _row_values(r: MetricReport, names, policy: EmptyPolicy):
    """Metric values a row contributes, or None when it is left out of the means."""
    if r.status == "ok":
        vals = {"cd": r.cd, "iou": r.iou, "nc": r.nc}
        vals.update({f"fs@{k}": v for k, v in r.fs.items()})
        return {n: vals.get(n) for n in names}
    if r.empty_prediction and policy is EmptyPolicy.ZERO:
        return {n: (WORST_CD if n == "cd" else 0.0) for n in names}
    return None


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def aggregate_by_class(rows: Sequence[MetricReport], thresholds=None, empty_policy=EmptyPolicy.EXCLUDE) -> AggregateReport:
    """Class means, their unweighted mean, and the instance-weighted mean, per split.

    Under EXCLUDE, empty predictions are counted but left out of the means;
    under ZERO they score 0 for IoU/NC/FS and the worst possible CD.
    Failed rows never contribute to means.
    """
    empty_policy = EmptyPolicy(empty_policy)
    if thresholds is None:
        keys = []
        for r in rows:
            for k in r.fs:
                if k not in keys:
                    keys.append(k)
        thresholds = tuple(float(k) for k in keys)
    agg = AggregateReport(tuple(float(t) for t in thresholds), empty_policy.value)
    names = agg.metric_names()
    by_split: dict = {}
    for r in rows:
        by_split.setdefault(r.split or "", {}).setdefault(r.class_label, []).append(r)
    for split, classes in by_split.items():
        class_stats = {}
        inst_vals = {n: [] for n in names}
        inst = GroupStats()
        for cls, rs in classes.items():
            st = GroupStats(n_rows=len(rs))
            per = {n: [] for n in names}
            for r in rs:
                if r.empty_prediction:
                    st.n_empty += 1
                elif r.status != "ok":
                    st.n_failed += 1
                else:
                    st.n_scored += 1
                vals = _row_values(r, names, empty_policy)
                if vals is None:
                    continue
                for n in names:
                    per[n].append(vals[n])
                    inst_vals[n].append(vals[n])
            st.means = {n: _mean(per[n]) for n in names}
            class_stats[cls] = st
            inst.n_rows += st.n_rows
            inst.n_scored += st.n_scored
            inst.n_empty += st.n_empty
            inst.n_failed += st.n_failed
        inst.means = {n: _mean(inst_vals[n]) for n in names}
        avg_class = {n: _mean([s.means[n] for s in class_stats.values()]) for n in names}
        agg.splits[split] = {"classes": class_stats, "avg_class": avg_class, "avg_instance": inst}
    return agg


# --------------------------------------------------------------------------- CSV


def rows_to_csv(rows: Sequence[MetricReport], thresholds) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=csv_columns(thresholds), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(report_to_row(r, thresholds))
    return buf.getvalue()


def write_rows_csv(rows: Sequence[MetricReport], thresholds, path) -> None:
    Path(path).write_text(rows_to_csv(rows, thresholds), encoding="utf-8", newline="\n")


def read_rows_csv(path) -> list[MetricReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [report_from_row(row) for row in csv.DictReader(fh)]


def thresholds_from_csv(path) -> tuple:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return tuple(float(c.split("@", 1)[1]) for c in header if c.startswith("fs@"))


# --------------------------------------------------------------------------- runs


@dataclass
class EvalRun:
    rows: list
    aggregate: AggregateReport
    visible_rows: list = field(default_factory=list)
    occluded_rows: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r.status == "error")

    @property
    def exit_code(self) -> int:
        return 1 if self.n_failed else 0


def run_eval(manifest: DatasetManifest, pred_dir, cfg: EvalConfig | None = None, decompose: bool = False,
             cam: CameraRig | None = None, threads: int | None = None) -> EvalRun:
    """Score every manifest entry; rows come back in manifest order.

    A missing prediction counts as an empty prediction; an unreadable file
    gives a row with ``status="error"`` and the run continues. The aggregate
    is computed from the CSV-serialized rows, so re-aggregating the written
    file reproduces it exactly.
    """
    cfg = cfg or EvalConfig()
    threads = threads or apply_thread_cap()
    entries = list(manifest)
    rows = _map_ordered(lambda e: evaluate_entry(e, pred_dir, cfg), entries, threads)
    rows = [report_from_row(report_to_row(r, cfg.fs_thresholds)) for r in rows]
    run = EvalRun(rows, aggregate_by_class(rows, cfg.fs_thresholds, cfg.empty_policy))
    if decompose:
        pairs = _map_ordered(lambda e: decompose_entry(e, pred_dir, cfg, cam), entries, threads)
        run.visible_rows = [report_from_row(report_to_row(v, cfg.fs_thresholds)) for v, _ in pairs]
        run.occluded_rows = [report_from_row(report_to_row(o, cfg.fs_thresholds)) for _, o in pairs]
    return run


def rerun_spread(manifest: DatasetManifest, pred_dir, cfg: EvalConfig, reps: int = 3) -> dict:
    """Standard deviation of each overall class-mean metric across ``reps`` reruns with different seeds."""
    overall = []
    for k in range(reps):
        run = run_eval(manifest, pred_dir, cfg.replace(rng_seed=cfg.rng_seed + k))
        first = next(iter(run.aggregate.splits.values()))
        overall.append(first["avg_class"])
    out = {}
    for name in overall[0]:
        vals = [o[name] for o in overall if o[name] is not None]
        out[name] = float(np.std(vals)) if vals else None
    return out
