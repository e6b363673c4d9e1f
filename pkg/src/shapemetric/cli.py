"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (flat ``key=value``). Values in the
file become defaults; flags given on the command line win. Exit codes: 0
success, 1 partial (some entries failed or nothing to report), 2 fatal.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import EvalConfig, parse_bool, parse_float_list, parse_int_list, read_config_file
from .errors import ShapeMetricError
from .floor import plot_curves, sampling_floor, write_curves
from .harness import (
    Split,
    aggregate_by_class,
    load_manifest,
    manifest_from_tree,
    read_rows_csv,
    rerun_spread,
    run_eval,
    thresholds_from_csv,
    write_manifest,
    write_rows_csv,
)
from .isosurface import marching_cubes
from .mesh import load_mesh, normalize_to_unit_cube, save_mesh
from .metrics import csv_columns, report_to_row
from .pose import DofTag, PivotMode, apply_pose, rotation_angle, sample_pose, view_angles
from .sampling import sample_surface, sample_volume_uniform, save_points, save_points_xyz
from .sdf import VOLUME_SIDE, Bucket, SdfSampleSet, evaluate_grid, generate_training_samples, load_grid, save_grid, save_samples, signed_distance
from .visibility import CameraRig, evaluate_decomposed, render_maps, save_map_pngs, save_maps

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2

# flags that map straight onto EvalConfig fields
_CFG_FLAGS = {
    "n_pred": "n_pred",
    "n_gt": "n_gt",
    "n_iou": "n_iou",
    "fs": "fs_thresholds",
    "iso": "iso",
    "seed": "rng_seed",
    "dof": "dof_mode",
    "pivot": "pivot_mode",
    "empty_policy": "empty_policy",
    "normalize": "normalize",
}


def _upper(s: str) -> str:
    return s.strip().upper()


def _flag(s: str) -> bool:
    return parse_bool(s) if isinstance(s, str) else bool(s)


def _add_bool(p, name, help_text):
    p.add_argument(name, type=_flag, nargs="?", const=True, default=None, help=help_text)


def _add_eval_opts(p):
    p.add_argument("--n-pred", type=int, default=None, help="points sampled on the prediction (100000)")
    p.add_argument("--n-gt", type=int, default=None, help="points sampled on the ground truth (300000)")
    p.add_argument("--n-iou", type=int, default=None, help="volume points for IoU (100000)")
    p.add_argument("--fs", type=parse_float_list, default=None, help="F-score thresholds in %% of unit side, e.g. 0.5,1,2")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dof", type=_upper, choices=[d.value for d in DofTag], default=None)
    p.add_argument("--pivot", type=_upper, choices=[m.value for m in PivotMode], default=None)
    p.add_argument("--empty-policy", type=_upper, choices=["EXCLUDE", "ZERO"], default=None)
    _add_bool(p, "--normalize", "normalize both meshes to the unit cube (default true)")


def _add_camera_opts(p):
    p.add_argument("--distance", type=float, default=2.2, help="camera distance from the origin")
    p.add_argument("--focal", type=float, default=50.0, help="focal length in mm")
    p.add_argument("--sensor", type=float, default=32.0, help="sensor width in mm")
    p.add_argument("--resolution", type=int, default=256)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapemetric", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, default=None, help="key=value file with defaults for any flag")
        return p

    p = command("sample", "sample surface points, uniform volume points or SDF training points")
    p.add_argument("--mesh", type=Path, required=True)
    p.add_argument("--kind", choices=["surface", "volume", "sdf"], default="surface")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["spts", "xyz"], default="spts", help="surface output format")
    _add_bool(p, "--normalize", "normalize the mesh to the unit cube first (default true)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sample)

    p = command("sdf-grid", "evaluate the signed distance on a regular lattice")
    p.add_argument("--mesh", type=Path, required=True)
    p.add_argument("--resolution", type=int, default=64)
    _add_bool(p, "--normalize", "normalize the mesh to the unit cube first (default true)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sdf_grid)

    p = command("extract", "extract an isosurface mesh from an SDF grid")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--iso", type=float, default=None, help="isovalue (0.25)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_extract)

    p = command("eval", "score predictions against a manifest of ground-truth meshes")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True, help="directory holding <mesh_id>.obj|.off")
    _add_eval_opts(p)
    p.add_argument("--reps", type=int, default=1, help="reruns with shifted seeds to measure metric spread")
    _add_bool(p, "--decompose", "also score the visible and self-occluded parts")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("eval_out"))
    p.set_defaults(func=cmd_eval)

    p = command("decompose", "visible / self-occluded scores for one mesh pair")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    _add_eval_opts(p)
    _add_camera_opts(p)
    p.add_argument("--out", type=Path, default=None, help="CSV with the two rows")
    p.set_defaults(func=cmd_decompose)

    p = command("floor", "sampling-floor curves from self-comparison")
    p.add_argument("--meshes", type=Path, nargs="*", default=None,
                   help="mesh files or directories; defaults to the built-in primitive corpus")
    p.add_argument("--counts", type=parse_int_list, default=(10_000, 30_000, 100_000, 300_000, 1_000_000))
    p.add_argument("--fs", type=parse_float_list, default=(0.25, 0.5, 1.0, 1.5, 2.0))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("floor_out"))
    p.set_defaults(func=cmd_floor)

    p = command("pose", "write sampled poses as JSON lines")
    p.add_argument("--dof", type=_upper, choices=[d.value for d in DofTag], default="VC2")
    p.add_argument("--seeds", type=parse_int_list, default=(0,), help="comma-separated object seeds")
    p.add_argument("--views", type=int, default=1, help="views per seed")
    p.add_argument("--out", type=Path, default=None, help="defaults to stdout")
    p.set_defaults(func=cmd_pose)

    p = command("render", "ray-cast depth, normal and silhouette maps")
    p.add_argument("--mesh", type=Path, required=True)
    p.add_argument("--dof", type=_upper, choices=[d.value for d in DofTag], default="OC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--view", type=int, default=0)
    _add_camera_opts(p)
    _add_bool(p, "--normalize", "normalize the mesh to the unit cube first (default true)")
    _add_bool(p, "--png", "also write 16-bit PNGs")
    p.add_argument("--out", type=Path, required=True, help="output .dnmp path; PNGs share its stem")
    p.set_defaults(func=cmd_render)

    p = command("manifest-init", "manifest for a class/instance/model.obj tree")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--split", type=_upper, choices=[s.value for s in Split], default="TEST")
    p.add_argument("--pattern", default="*/*/model.obj")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_manifest_init)

    p = command("aggregate", "recompute per-class aggregates from a per-mesh CSV")
    p.add_argument("--rows", type=Path, required=True)
    p.add_argument("--empty-policy", type=_upper, choices=["EXCLUDE", "ZERO"], default="EXCLUDE")
    p.add_argument("--out", type=Path, default=None, help="write the table here as well as to stdout")
    p.set_defaults(func=cmd_aggregate)
    return parser


# --------------------------------------------------------------------------- helpers


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser | None:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def _apply_config_defaults(parser, argv) -> dict:
    """Load ``--config`` (if given) and install its values as subcommand defaults.

    Returns the full mapping so EvalConfig fields without a flag can still be read.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    if known.config is None or known.command is None:
        return {}
    sp = _subparser(parser, known.command)
    if sp is None:
        return {}
    values = read_config_file(known.config)
    dests = {a.dest for a in sp._actions}
    unknown = [k for k in values if k not in dests and k not in _eval_fields()]
    if unknown:
        print(f"warning: ignoring unknown config keys {unknown}", file=sys.stderr)
    for action in sp._actions:
        if action.dest in values:
            action.required = False
    # argparse converts string defaults with the option's type
    sp.set_defaults(**{k: v for k, v in values.items() if k in dests and k != "config"})
    return values


def _eval_fields():
    import dataclasses

    return {f.name for f in dataclasses.fields(EvalConfig)}


def _eval_config(args, file_values: dict) -> EvalConfig:
    cfg = EvalConfig.from_mapping({k: v for k, v in file_values.items() if k in _eval_fields()})
    overrides = {}
    for flag, field_name in _CFG_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[field_name] = v
    return cfg.replace(**overrides)


def _maybe_normalize(mesh, flag):
    return normalize_to_unit_cube(mesh)[0] if flag in (None, True) else mesh


def _camera(args) -> CameraRig:
    return CameraRig(distance=args.distance, focal_length=args.focal, sensor_width=args.sensor,
                     resolution=args.resolution)


def _collect_meshes(paths):
    files = []
    for p in paths:
        if p.is_dir():
            files += sorted(q for q in p.rglob("*") if q.suffix.lower() in (".obj", ".off"))
        else:
            files.append(p)
    return files


# --------------------------------------------------------------------------- commands


def cmd_sample(args, file_values) -> int:
    mesh = _maybe_normalize(load_mesh(args.mesh), args.normalize)
    if args.kind == "surface":
        pts = sample_surface(mesh, args.n, args.seed)
        (save_points_xyz if args.format == "xyz" else save_points)(pts, args.out)
    elif args.kind == "volume":
        pos = sample_volume_uniform(np.zeros(3), VOLUME_SIDE, args.n, args.seed)
        sdf = signed_distance(mesh, pos, require_unit_cube=False)
        buckets = np.full(args.n, Bucket.VOLUME, dtype=np.uint8)
        save_samples(SdfSampleSet(pos, sdf, buckets), args.out)
    else:
        save_samples(generate_training_samples(mesh, args.n, args.seed), args.out)
    print(f"wrote {args.n} {args.kind} points to {args.out}")
    return EXIT_OK


def cmd_sdf_grid(args, file_values) -> int:
    mesh = _maybe_normalize(load_mesh(args.mesh), args.normalize)
    grid = evaluate_grid(mesh, args.resolution)
    save_grid(grid, args.out)
    print(f"wrote {args.resolution}^3 grid to {args.out}")
    return EXIT_OK


def cmd_extract(args, file_values) -> int:
    iso = args.iso if args.iso is not None else _eval_config(args, file_values).iso
    mesh = marching_cubes(load_grid(args.grid), iso)
    save_mesh(mesh, args.out)
    print(f"wrote {len(mesh.vertices)} vertices, {len(mesh.faces)} faces to {args.out}")
    return EXIT_OK if not mesh.is_empty else EXIT_PARTIAL


def cmd_eval(args, file_values) -> int:
    cfg = _eval_config(args, file_values)
    manifest = load_manifest(args.manifest)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    run = run_eval(manifest, args.pred, cfg, decompose=bool(args.decompose), threads=args.threads)
    write_rows_csv(run.rows, cfg.fs_thresholds, out / "per_mesh.csv")
    table = run.aggregate.to_table()
    (out / "aggregate.txt").write_text(table, encoding="utf-8", newline="\n")
    print(table, end="")
    if args.decompose:
        write_rows_csv(run.visible_rows, cfg.fs_thresholds, out / "per_mesh_visible.csv")
        write_rows_csv(run.occluded_rows, cfg.fs_thresholds, out / "per_mesh_occluded.csv")
        for name, rows in (("visible", run.visible_rows), ("occluded", run.occluded_rows)):
            agg = aggregate_by_class(rows, cfg.fs_thresholds, cfg.empty_policy)
            (out / f"aggregate_{name}.txt").write_text(agg.to_table(), encoding="utf-8", newline="\n")
    if args.reps > 1:
        spread = rerun_spread(manifest, args.pred, cfg, args.reps)
        with open(out / "rerun_std.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "std"])
            for k, v in spread.items():
                w.writerow([k, "" if v is None else repr(v)])
        print("rerun std: " + ", ".join(f"{k}={v:.2e}" for k, v in spread.items() if v is not None))
    n_scored = sum(1 for r in run.rows if r.status == "ok")
    print(f"{len(run.rows)} entries: {n_scored} scored, "
          f"{sum(r.empty_prediction for r in run.rows)} empty, {run.n_failed} failed")
    if not run.rows:
        return EXIT_PARTIAL
    return run.exit_code


def cmd_decompose(args, file_values) -> int:
    cfg = _eval_config(args, file_values)
    vis, occ = evaluate_decomposed(load_mesh(args.pred), load_mesh(args.gt), _camera(args), cfg)
    vis.mesh_id = occ.mesh_id = args.gt.stem
    rows = [report_to_row(r, cfg.fs_thresholds) for r in (vis, occ)]
    cols = csv_columns(cfg.fs_thresholds)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    for r in (vis, occ):
        fs = " ".join(f"fs@{k}={v:.4f}" for k, v in r.fs.items())
        print(f"{r.split:<9} {r.status:<8} cd={r.cd if r.cd is None else format(r.cd, '.5f')} "
              f"nc={r.nc if r.nc is None else format(r.nc, '.4f')} {fs}")
    return EXIT_OK if vis.status == occ.status == "ok" else EXIT_PARTIAL


def cmd_floor(args, file_values) -> int:
    if args.meshes:
        meshes = [(p.stem, load_mesh(p)) for p in _collect_meshes(args.meshes)]
    else:
        from .primitives import primitive_corpus

        meshes = primitive_corpus()
    if not meshes:
        print("no meshes found", file=sys.stderr)
        return EXIT_PARTIAL
    curves = sampling_floor(meshes, args.counts, args.fs, rng_seed=args.seed, reps=args.reps)
    paths = write_curves(curves, args.out)
    paths.append(plot_curves(curves, args.out / "floor_fs.svg", "FS"))
    paths.append(plot_curves(curves, args.out / "floor_cd.svg", "CD"))
    for c in curves:
        print(f"{c.label:<8} " + " ".join(f"{n}:{m:.4f}" for n, m in zip(c.sample_counts, c.mean)))
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_PARTIAL if curves[0].excluded_mesh_ids else EXIT_OK


def cmd_pose(args, file_values) -> int:
    lines = []
    for seed in args.seeds:
        for view in range(args.views):
            pose = sample_pose(args.dof, seed, view)
            rec = {"seed": seed, "view": view, **pose.to_dict()}
            if pose.dof_tag is DofTag.VC2:
                az, el = view_angles(pose.rotation)
                rec.update(azimuth_deg=float(az), elevation_deg=float(el))
            rec.update(angle_deg=float(np.degrees(rotation_angle(pose.rotation))))
            lines.append(json.dumps(rec))
    text = "\n".join(lines) + "\n"
    if args.out:
        args.out.write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args, file_values) -> int:
    mesh = _maybe_normalize(load_mesh(args.mesh), args.normalize)
    pose = sample_pose(args.dof, args.seed, args.view)
    if args.dof != DofTag.OC.value:
        mesh = apply_pose(mesh, pose)
    maps = render_maps(mesh, _camera(args))
    save_maps(maps, args.out)
    if args.png:
        save_map_pngs(maps, args.out.with_suffix(""))
    print(f"rendered {maps.silhouette.sum()} foreground pixels to {args.out}")
    return EXIT_OK


def cmd_manifest_init(args, file_values) -> int:
    manifest = manifest_from_tree(args.root, args.split, args.pattern)
    write_manifest(manifest, args.out)
    print(f"wrote {len(manifest)} entries to {args.out}")
    return EXIT_OK if len(manifest) else EXIT_PARTIAL


def cmd_aggregate(args, file_values) -> int:
    rows = read_rows_csv(args.rows)
    agg = aggregate_by_class(rows, thresholds_from_csv(args.rows), args.empty_policy)
    table = agg.to_table()
    if args.out:
        args.out.write_text(table, encoding="utf-8", newline="\n")
    print(table, end="")
    if agg.is_empty:
        print("no rows to aggregate", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        file_values = _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    try:
        return args.func(args, file_values)
    except (ShapeMetricError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
