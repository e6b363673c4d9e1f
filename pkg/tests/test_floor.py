import warnings

import numpy as np
import pytest

from shapemetric.floor import find_curve, plot_curves, sampling_floor, self_compare, write_curves
from shapemetric.mesh import TriangleMesh
from shapemetric.primitives import box, icosphere, primitive_corpus


@pytest.fixture(scope="module")
def small_curves():
    meshes = primitive_corpus()[:4]
    return sampling_floor(meshes, counts=(1000, 3000, 10_000), fs_thresholds=(0.5, 1.0, 2.0), rng_seed=1)


def test_curve_shapes(small_curves):
    labels = [c.label for c in small_curves]
    assert labels == ["CD", "NC", "FS@0.5", "FS@1", "FS@2"]
    for c in small_curves:
        assert len(c.mean) == len(c.std) == len(c.worst) == len(c.worst_mesh_ids) == 3
        if c.metric in ("FS", "NC"):
            assert all(0 <= m <= 1 for m in c.mean)
        else:
            assert all(m >= 0 for m in c.mean)


def test_fs_monotone_in_threshold(small_curves):
    fs = [find_curve(small_curves, "FS", d) for d in (0.5, 1.0, 2.0)]
    for i in range(3):
        assert fs[0].mean[i] <= fs[1].mean[i] <= fs[2].mean[i]


def test_fs_grows_and_cd_shrinks_with_count(small_curves):
    fs1 = find_curve(small_curves, "FS", 1.0)
    cd = find_curve(small_curves, "CD")
    assert fs1.mean[0] <= fs1.mean[1] <= fs1.mean[2]
    assert cd.mean[0] > cd.mean[1] > cd.mean[2]


def test_worst_never_better_than_mean(small_curves):
    for c in small_curves:
        for m, w in zip(c.mean, c.worst):
            if c.metric == "CD":
                assert w >= m
            else:
                assert w <= m


def test_worst_mesh_id_is_the_extreme_one():
    meshes = [("fine", icosphere(4, 0.5)), ("thin", box((1.0, 0.05, 0.05)))]
    curves = sampling_floor(meshes, counts=(2000,), fs_thresholds=(1.0,))
    fs = find_curve(curves, "FS", 1.0)
    direct = [self_compare(m, 2000, (1.0,), np.random.SeedSequence(0, spawn_key=(i, 0, 0, 0)),
                           np.random.SeedSequence(0, spawn_key=(i, 0, 0, 1)))[("FS", 1.0)]
              for i, (_, m) in enumerate(meshes)]
    # the floor study normalizes first; both meshes already fit the unit cube with longest side 1
    assert fs.worst[0] == pytest.approx(min(direct), abs=1e-12)
    assert fs.worst_mesh_ids[0] == meshes[int(np.argmin(direct))][0]


def test_deterministic_per_seed():
    m = primitive_corpus()[:2]
    a = sampling_floor(m, (500,), (1.0,), rng_seed=3)
    b = sampling_floor(m, (500,), (1.0,), rng_seed=3)
    assert [c.mean for c in a] == [c.mean for c in b]


def test_failed_mesh_is_excluded_with_warning():
    flat = TriangleMesh(np.zeros((3, 3)) + [[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        curves = sampling_floor([("ok", icosphere(2, 0.5)), ("flat", flat)], (500,), (1.0,))
    assert any("flat" in str(w.message) for w in rec)
    assert curves[0].excluded_mesh_ids == ["flat"]
    assert curves[0].worst_mesh_ids == ["ok"]


def test_count_validation():
    with pytest.raises(ValueError):
        sampling_floor([icosphere(1)], (50,))


def test_outputs(tmp_path, small_curves):
    paths = write_curves(small_curves, tmp_path)
    assert len(paths) == 5
    lines = (tmp_path / "floor_FS_at_1.csv").read_text().splitlines()
    assert lines[0] == "count,mean,std,worst,worst_mesh_id"
    assert len(lines) == 4
    svg = plot_curves(small_curves, tmp_path / "fs.svg", "FS")
    assert svg.read_text().lstrip().startswith("<?xml")
    plot_curves(small_curves, tmp_path / "cd.svg", "CD")
