import json

import numpy as np
import pytest

from shapemetric.cli import main
from shapemetric.harness import read_rows_csv
from shapemetric.mesh import load_mesh, save_mesh
from shapemetric.primitives import icosphere
from shapemetric.sampling import load_points
from shapemetric.sdf import Bucket, load_grid, load_samples
from shapemetric.visibility import load_maps

from datasets import make_dataset

SMALL = ["--n-pred", "3000", "--n-gt", "3000", "--n-iou", "1000"]


@pytest.fixture
def sphere_obj(tmp_path):
    p = tmp_path / "sphere.obj"
    save_mesh(icosphere(3, 0.5), p)
    return p


def test_sample_kinds(tmp_path, sphere_obj):
    assert main(["sample", "--mesh", str(sphere_obj), "--n", "500", "--out", str(tmp_path / "s.spts")]) == 0
    assert len(load_points(tmp_path / "s.spts")) == 500
    assert main(["sample", "--mesh", str(sphere_obj), "--kind", "sdf", "--n", "1000",
                 "--out", str(tmp_path / "t.sdfs")]) == 0
    assert len(load_samples(tmp_path / "t.sdfs").positions) == 1000
    assert main(["sample", "--mesh", str(sphere_obj), "--kind", "volume", "--n", "200",
                 "--out", str(tmp_path / "v.sdfs")]) == 0
    assert np.all(load_samples(tmp_path / "v.sdfs").bucket_tags == Bucket.VOLUME)
    assert main(["sample", "--mesh", str(sphere_obj), "--n", "10", "--format", "xyz",
                 "--out", str(tmp_path / "s.xyz")]) == 0
    assert len((tmp_path / "s.xyz").read_text().splitlines()) == 10


def test_grid_then_extract(tmp_path, sphere_obj):
    grid, mesh = tmp_path / "g.sdfg", tmp_path / "m.obj"
    assert main(["sdf-grid", "--mesh", str(sphere_obj), "--resolution", "24", "--out", str(grid)]) == 0
    assert load_grid(grid).values.shape == (24, 24, 24)
    assert main(["extract", "--grid", str(grid), "--iso", "0", "--out", str(mesh)]) == 0
    assert load_mesh(mesh).is_watertight()
    # an isovalue outside the field gives an empty mesh and exit code 1
    assert main(["extract", "--grid", str(grid), "--iso", "5", "--out", str(mesh)]) == 1


def test_eval_outputs_and_exit_codes(tmp_path):
    manifest, pred, corrupted, _ = make_dataset(tmp_path / "d", 6, corrupt=1)
    out = tmp_path / "out"
    code = main(["eval", "--manifest", str(manifest), "--pred", str(pred), "--out", str(out), *SMALL])
    assert code == 1
    rows = read_rows_csv(out / "per_mesh.csv")
    assert [r.mesh_id for r in rows if r.status == "error"] == corrupted
    assert "Avg (class)" in (out / "aggregate.txt").read_text()
    # aggregate subcommand reproduces the table byte for byte
    assert main(["aggregate", "--rows", str(out / "per_mesh.csv"), "--out", str(tmp_path / "agg.txt")]) == 0
    assert (tmp_path / "agg.txt").read_bytes() == (out / "aggregate.txt").read_bytes()


def test_eval_clean_run_with_decompose_and_reps(tmp_path):
    manifest, pred, _, _ = make_dataset(tmp_path / "d", 2)
    out = tmp_path / "out"
    code = main(["eval", "--manifest", str(manifest), "--pred", str(pred), "--out", str(out),
                 "--decompose", "--reps", "2", *SMALL])
    assert code == 0
    for name in ("per_mesh.csv", "per_mesh_visible.csv", "per_mesh_occluded.csv",
                 "aggregate_visible.txt", "aggregate_occluded.txt", "rerun_std.csv"):
        assert (out / name).exists(), name


def test_config_file_and_flag_override(tmp_path):
    manifest, pred, _, _ = make_dataset(tmp_path / "d", 2)
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"manifest = {manifest}\npred = {pred}\nn_pred = 2000\nn-gt = 2000\nn_iou = 500\n"
                   "fs = 1,2\n# comment\n")
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["eval", "--config", str(cfg), "--out", str(out1)]) == 0
    rows = read_rows_csv(out1 / "per_mesh.csv")
    assert rows[0].n_pred_points == 2000 and set(rows[0].fs) == {"1", "2"}
    assert main(["eval", "--config", str(cfg), "--out", str(out2), "--n-pred", "2500", "--fs", "0.5"]) == 0
    rows = read_rows_csv(out2 / "per_mesh.csv")
    assert rows[0].n_pred_points == 2500 and set(rows[0].fs) == {"0.5"}


def test_decompose_pair(tmp_path, sphere_obj):
    out = tmp_path / "d.csv"
    assert main(["decompose", "--pred", str(sphere_obj), "--gt", str(sphere_obj), "--out", str(out),
                 "--resolution", "16", *SMALL]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_pose_lines(tmp_path):
    out = tmp_path / "poses.jsonl"
    assert main(["pose", "--dof", "vc2", "--seeds", "0,1", "--views", "3", "--out", str(out)]) == 0
    recs = [json.loads(s) for s in out.read_text().splitlines()]
    assert len(recs) == 6
    assert all(-50.0 <= r["elevation_deg"] <= 50.0 for r in recs)


def test_render(tmp_path, sphere_obj):
    out = tmp_path / "r.dnmp"
    assert main(["render", "--mesh", str(sphere_obj), "--resolution", "32", "--dof", "VC3", "--png",
                 "--out", str(out)]) == 0
    maps = load_maps(out)
    assert maps.shape == (32, 32) and maps.silhouette.any()
    assert (tmp_path / "r_depth.png").exists() and (tmp_path / "r_mask.png").exists()


def test_floor_and_manifest_init(tmp_path, sphere_obj):
    out = tmp_path / "floor"
    assert main(["floor", "--meshes", str(sphere_obj), "--counts", "500,2000", "--fs", "1,2",
                 "--out", str(out)]) == 0
    assert (out / "floor_CD.csv").exists() and (out / "floor_fs.svg").exists()
    (tmp_path / "tree" / "cls" / "i1").mkdir(parents=True)
    save_mesh(icosphere(1), tmp_path / "tree" / "cls" / "i1" / "model.obj")
    assert main(["manifest-init", "--root", str(tmp_path / "tree"), "--out", str(tmp_path / "m.csv")]) == 0
    assert "cls/i1" in (tmp_path / "m.csv").read_text()


def test_usage_and_input_errors(tmp_path, capsys):
    assert main(["eval", "--no-such-flag"]) == 2
    assert main(["sample", "--mesh", str(tmp_path / "missing.obj"), "--out", str(tmp_path / "x")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("mesh_id,class\n")
    assert main(["eval", "--manifest", str(bad), "--pred", str(tmp_path)]) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["aggregate", "--rows", str(empty)]) == 1
    assert main(["--version"]) == 0
