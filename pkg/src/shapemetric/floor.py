"""Sampling-floor study: every mesh compared against itself under finite sampling."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeMetricError
from .mesh import TriangleMesh, normalize_to_unit_cube
from .metrics import chamfer_from, fscore_from, match, normal_consistency_from
from .sampling import sample_surface

DEFAULT_COUNTS = (10_000, 30_000, 100_000, 300_000, 1_000_000)
DEFAULT_THRESHOLDS = (0.25, 0.5, 1.0, 1.5, 2.0)
# higher is better for these; CD is a distance
_HIGHER_IS_BETTER = {"CD": False, "NC": True, "FS": True}


@dataclass
class FloorCurve:
    metric: str
    threshold: float | None
    sample_counts: list
    mean: list = field(default_factory=list)
    std: list = field(default_factory=list)
    worst: list = field(default_factory=list)
    worst_mesh_ids: list = field(default_factory=list)
    excluded_mesh_ids: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return self.metric if self.threshold is None else f"{self.metric}@{self.threshold:g}"


def _named(meshes) -> list[tuple[str, TriangleMesh]]:
    out = []
    for i, m in enumerate(meshes):
        if isinstance(m, tuple):
            out.append((str(m[0]), m[1]))
        else:
            out.append((m.name or f"mesh{i}", m))
    return out


def self_compare(mesh: TriangleMesh, count: int, thresholds: Sequence[float], seed_a, seed_b) -> dict:
    """Metrics between two independent ``count``-point draws from the same mesh."""
    a = sample_surface(mesh, count, seed_a)
    b = sample_surface(mesh, count, seed_b)
    c = match(a, b)
    out = {"CD": chamfer_from(c), "NC": normal_consistency_from(c, a.normals, b.normals)}
    for t in thresholds:
        out[("FS", float(t))] = fscore_from(c, t)[0]
    return out


def sampling_floor(
    meshes: Iterable,
    counts: Sequence[int] = DEFAULT_COUNTS,
    fs_thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    rng_seed: int = 0,
    reps: int = 1,
    normalize: bool = True,
) -> list[FloorCurve]:
    """Average and worst-case self-comparison curves over a mesh collection.

    ``meshes`` holds meshes or ``(mesh_id, mesh)`` pairs. Each mesh is
    normalized to the unit cube first (unless ``normalize`` is false). A mesh
    that cannot be sampled is excluded with a warning.
    """
    named = _named(meshes)
    counts = [int(c) for c in counts]
    if any(c < 100 for c in counts):
        raise ValueError("sample counts must be at least 100")
    thresholds = [float(t) for t in fs_thresholds]
    keys = ["CD", "NC"] + [("FS", t) for t in thresholds]
    # values[key][count_index] -> list of (mesh_id, value)
    values = {k: [[] for _ in counts] for k in keys}
    excluded = []
    for mi, (mesh_id, mesh) in enumerate(named):
        try:
            if normalize:
                mesh = normalize_to_unit_cube(mesh)[0]
            for ci, count in enumerate(counts):
                acc = {k: 0.0 for k in keys}
                for rep in range(reps):
                    seeds = [np.random.SeedSequence(entropy=rng_seed, spawn_key=(mi, ci, rep, draw)) for draw in (0, 1)]
                    res = self_compare(mesh, count, thresholds, *seeds)
                    for k in keys:
                        acc[k] += res[k] / reps
                for k in keys:
                    values[k][ci].append((mesh_id, acc[k]))
        except ShapeMetricError as exc:
            warnings.warn(f"sampling floor: skipping {mesh_id}: {exc}", stacklevel=2)
            excluded.append(mesh_id)
            for k in keys:
                for lst in values[k]:
                    if lst and lst[-1][0] == mesh_id:
                        lst.pop()
    curves = []
    for k in keys:
        metric, th = (k, None) if isinstance(k, str) else k
        curve = FloorCurve(metric, th, list(counts), excluded_mesh_ids=list(excluded))
        better_high = _HIGHER_IS_BETTER[metric]
        for per_count in values[k]:
            if not per_count:
                curve.mean.append(float("nan"))
                curve.std.append(float("nan"))
                curve.worst.append(float("nan"))
                curve.worst_mesh_ids.append("")
                continue
            ids = [m for m, _ in per_count]
            v = np.array([x for _, x in per_count])
            w = int(np.argmin(v) if better_high else np.argmax(v))
            curve.mean.append(float(v.mean()))
            curve.std.append(float(v.std()))
            curve.worst.append(float(v[w]))
            curve.worst_mesh_ids.append(ids[w])
        curves.append(curve)
    return curves


def find_curve(curves: Sequence[FloorCurve], metric: str, threshold: float | None = None) -> FloorCurve:
    for c in curves:
        if c.metric == metric and (threshold is None or c.threshold == float(threshold)):
            return c
    raise KeyError(f"no {metric} curve at threshold {threshold}")


def write_curve_csv(curve: FloorCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["count", "mean", "std", "worst", "worst_mesh_id"])
        for row in zip(curve.sample_counts, curve.mean, curve.std, curve.worst, curve.worst_mesh_ids):
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), row[4]])


def write_curves(curves: Sequence[FloorCurve], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in curves:
        p = out_dir / f"floor_{c.label.replace('@', '_at_')}.csv"
        write_curve_csv(c, p)
        paths.append(p)
    return paths


def plot_curves(curves: Sequence[FloorCurve], path, metric: str = "FS") -> Path:
    """SVG chart: mean curves with std error bars and dashed worst-case curves.

    For FS the x axis is the threshold with one line per sample count;
    for CD and NC it is the sample count.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if metric == "FS":
        fs = sorted((c for c in curves if c.metric == "FS"), key=lambda c: c.threshold)
        if not fs:
            raise ValueError("no FS curves to plot")
        th = [c.threshold for c in fs]
        for ci, count in enumerate(fs[0].sample_counts):
            mean = [c.mean[ci] for c in fs]
            std = [c.std[ci] for c in fs]
            line = ax.errorbar(th, mean, yerr=std, capsize=3, label=f"avg {count:,}")
            ax.plot(th, [c.worst[ci] for c in fs], "--", color=line[0].get_color(), label=f"min {count:,}")
        ax.set_xlabel("threshold d (% of unit side)")
        ax.set_ylabel("F-score")
    else:
        c = find_curve(curves, metric)
        ax.errorbar(c.sample_counts, c.mean, yerr=c.std, capsize=3, label="average")
        ax.plot(c.sample_counts, c.worst, "--", label="worst case")
        ax.set_xscale("log")
        ax.set_xlabel("number of sampled points")
        ax.set_ylabel(metric)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)
