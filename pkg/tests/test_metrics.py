import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapemetric.config import EvalConfig, IouMode
from shapemetric.mesh import empty_mesh
from shapemetric.metrics import (
    MetricReport,
    NnIndex,
    chamfer,
    csv_columns,
    evaluate_pair,
    fscore,
    iou_points,
    normal_consistency,
    report_from_row,
    report_to_row,
)
from shapemetric.pose import sample_pose
from shapemetric.primitives import box, icosphere, square
from shapemetric.sampling import SurfacePointSet, sample_volume_uniform
from shapemetric.sdf import OccupancySet, occupancy_from_sdf, signed_distance

from oracles import brute_nn


def pts(p, n=None):
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    n = np.tile([0.0, 0.0, 1.0], (len(p), 1)) if n is None else np.asarray(n, dtype=float).reshape(-1, 3)
    return SurfacePointSet(p, n, np.zeros(len(p), dtype=np.int64))


def sphere_points(r, n, seed):
    g = np.random.default_rng(seed).normal(size=(n, 3))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    return SurfacePointSet(r * u, u, np.zeros(n, dtype=np.int64))


# --------------------------------------------------------------------------- hand-computed values


def test_chamfer_hand_values():
    a = pts([[0, 0, 0], [1, 0, 0]])
    assert chamfer(a, a) == 0.0
    assert chamfer(pts([[0, 0, 0]]), pts([[1, 0, 0]])) == 2.0
    # S1 = {0, 1} on x, S2 = {0}: S1->S2 mean 0.5, S2->S1 mean 0
    assert chamfer(pts([[0, 0, 0], [1, 0, 0]]), pts([[0, 0, 0]])) == 0.5


def test_chamfer_is_l2_not_squared():
    assert chamfer(pts([[0, 0, 0]]), pts([[3, 4, 0]])) == 10.0


def test_normal_consistency_hand_values():
    p = np.random.default_rng(0).normal(size=(30, 3))
    n = np.random.default_rng(1).normal(size=(30, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    assert normal_consistency(pts(p, n), pts(p, n)) == pytest.approx(1.0, abs=1e-15)
    assert normal_consistency(pts(p, n), pts(p, -n)) == pytest.approx(1.0, abs=1e-15)
    # coincident planes, normals 60 degrees apart
    grid = np.stack(np.meshgrid(np.arange(5.0), np.arange(5.0), [0.0]), -1).reshape(-1, 3)
    n1 = np.tile([0, 0, 1.0], (25, 1))
    n2 = np.tile([math.sin(math.pi / 3), 0, math.cos(math.pi / 3)], (25, 1))
    assert normal_consistency(pts(grid, n1), pts(grid, n2)) == pytest.approx(0.5, abs=1e-6)


def test_normal_consistency_asymmetric_sets():
    # S1 = two points, S2 = one point: S1->S2 uses the only normal, S2->S1 its nearest
    s1 = pts([[0, 0, 0], [1, 0, 0]], [[0, 0, 1], [1, 0, 0]])
    s2 = pts([[0.9, 0, 0]], [[0, 0, 1]])
    # x->nn: |<z,z>| = 1, |<x,z>| = 0 -> mean 0.5; y->nn (point 1): |<z,x>| = 0
    assert normal_consistency(s1, s2) == pytest.approx(0.5 * 0.5 + 0.5 * 0.0)


def test_fscore_hand_values():
    a = pts(np.random.default_rng(3).uniform(size=(50, 3)))
    assert fscore(a, a, 0.5)[0] == 1.0
    f, p, r = fscore(pts([[0, 0, 0]]), pts([[0.02, 0, 0]]), 1.0)
    assert (f, p, r) == (0.0, 0.0, 0.0)
    # half of the points displaced by 2d away from everything
    base = np.array([[i * 1.0, 0, 0] for i in range(10)])
    moved = base.copy()
    moved[5:, 1] += 0.02
    f, p, r = fscore(pts(moved), pts(base), 1.0)
    assert (p, r) == (0.5, 0.5) and f == 0.5


def test_fscore_threshold_is_strict_and_percent():
    a, b = pts([[0, 0, 0]]), pts([[0.01, 0, 0]])
    assert fscore(a, b, 1.0)[0] == 0.0  # distance equal to d is not "within"
    assert fscore(a, b, 1.0001)[0] == 1.0
    with pytest.raises(ValueError):
        fscore(a, b, 0.0)


def test_iou_hand_values():
    o = np.array([True, False, True, True])
    assert iou_points(o, o) == 1.0
    assert iou_points(o, ~o) == 0.0
    assert iou_points(np.zeros(4, bool), np.zeros(4, bool)) == 1.0
    assert iou_points([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        iou_points(np.zeros(3, bool), np.zeros(4, bool))
    p = np.zeros((2, 3))
    with pytest.raises(ValueError):
        iou_points(OccupancySet(p, [True, False]), OccupancySet(p + 1, [True, False]))


def test_iou_nested_cubes():
    pts_ = sample_volume_uniform([0, 0, 0], 1.0, 1_000_000, 8)
    outer = occupancy_from_sdf(signed_distance(box((1, 1, 1)), pts_))
    inner = occupancy_from_sdf(signed_distance(box((0.5, 0.5, 0.5)), pts_))
    assert outer.all()
    assert iou_points(inner, outer) == pytest.approx(0.125, abs=0.002)


def test_concentric_spheres_chamfer():
    # nearest point on the other sphere is radial, 0.1 away in each direction
    cd = chamfer(sphere_points(0.3, 100_000, 1), sphere_points(0.4, 100_000, 2))
    assert cd == pytest.approx(0.2, abs=0.003)


# --------------------------------------------------------------------------- nearest neighbours


def test_nn_matches_brute_force():
    rng = np.random.default_rng(4)
    p = rng.uniform(size=(10_000, 3))
    q = rng.uniform(size=(1000, 3))
    d, i = NnIndex(p).query(q)
    bd, bi = brute_nn(q, p)
    assert np.array_equal(i, bi)
    assert np.allclose(d, bd, atol=1e-12)


def test_nn_ties_go_to_lowest_index():
    p = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [1, 0, 0]], float)
    d, i = NnIndex(p).query(np.array([[0, 0, 0], [1, 0, 0], [0.0, 0.5, 0]]))
    assert i.tolist() == [0, 0, 1]
    # many duplicates
    dup = np.repeat(np.random.default_rng(0).uniform(size=(20, 3)), 5, axis=0)[::-1].copy()
    _, i = NnIndex(dup).query(dup)
    _, bi = brute_nn(dup, dup)
    assert np.array_equal(i, bi)


def test_single_point_index():
    d, i = NnIndex([[1, 2, 3]]).query(np.zeros((4, 3)))
    assert np.all(i == 0) and np.allclose(d, math.sqrt(14))


# --------------------------------------------------------------------------- properties

point_sets = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s))


@settings(max_examples=30, deadline=None)
@given(point_sets, st.integers(1, 60), st.integers(1, 60))
def test_symmetry(rng, n1, n2):
    a = pts(rng.uniform(-0.5, 0.5, (n1, 3)), rng.normal(size=(n1, 3)))
    b = pts(rng.uniform(-0.5, 0.5, (n2, 3)), rng.normal(size=(n2, 3)))
    assert chamfer(a, b) == pytest.approx(chamfer(b, a), rel=1e-15)
    assert normal_consistency(a, b) == pytest.approx(normal_consistency(b, a), rel=1e-12)
    f1, p1, r1 = fscore(a, b, 20.0)
    f2, p2, r2 = fscore(b, a, 20.0)
    assert (p1, r1) == (r2, p2) and f1 == pytest.approx(f2)


@settings(max_examples=30, deadline=None)
@given(point_sets, st.floats(0.1, 10.0))
def test_scale_covariance(rng, s):
    a, b = rng.uniform(size=(40, 3)), rng.uniform(size=(50, 3))
    assert chamfer(pts(a * s), pts(b * s)) == pytest.approx(s * chamfer(pts(a), pts(b)), rel=1e-9)
    # keep away from exact threshold hits
    assert fscore(pts(a * s), pts(b * s), 7.3 * s)[0] == fscore(pts(a), pts(b), 7.3)[0]


@settings(max_examples=30, deadline=None)
@given(point_sets, st.integers(0, 10_000))
def test_rigid_invariance_of_point_metrics(rng, seed):
    a = pts(rng.uniform(size=(80, 3)), rng.normal(size=(80, 3)))
    b = pts(rng.uniform(size=(70, 3)), rng.normal(size=(70, 3)))
    r = sample_pose("VC3", seed).rotation
    t = rng.normal(size=3)
    ta, tb = a.transformed(r, t), b.transformed(r, t)
    assert abs(chamfer(a, b) - chamfer(ta, tb)) < 1e-9
    assert abs(normal_consistency(a, b) - normal_consistency(ta, tb)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(point_sets, st.lists(st.floats(0.01, 50), min_size=2, max_size=8))
def test_fscore_monotone_in_d(rng, ds):
    a, b = pts(rng.uniform(size=(60, 3))), pts(rng.uniform(size=(60, 3)))
    vals = [fscore(a, b, d)[0] for d in sorted(ds)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))


@settings(max_examples=20, deadline=None)
@given(point_sets)
def test_ranges(rng):
    na, nb = rng.normal(size=(30, 3)), rng.normal(size=(20, 3))
    a = pts(rng.uniform(size=(30, 3)), na / np.linalg.norm(na, axis=1, keepdims=True))
    b = pts(rng.uniform(size=(20, 3)), nb / np.linalg.norm(nb, axis=1, keepdims=True))
    nc = normal_consistency(a, b)
    assert 0 <= nc <= 1 + 1e-12 and chamfer(a, b) >= 0
    assert all(0 <= x <= 1 for x in fscore(a, b, 10.0))


# --------------------------------------------------------------------------- evaluate_pair


@pytest.fixture(scope="module")
def self_report():
    m = icosphere(4, 0.5)
    return evaluate_pair(m, m, EvalConfig())


def test_self_comparison_defaults(self_report):
    r = self_report
    assert r.status == "ok" and not r.empty_prediction
    assert r.fs["1"] >= 0.99 and r.nc >= 0.99 and r.iou >= 0.98
    assert set(r.fs) == {"0.5", "1", "2"}
    assert (r.n_pred_points, r.n_gt_points) == (100_000, 300_000)


def test_self_comparison_chamfer_follows_sampling_density(self_report):
    # independent uniform samples of density rho have mean NN distance 1 / (2 sqrt(rho));
    # the normalized sphere has area pi
    area = math.pi
    expected = 0.5 / math.sqrt(300_000 / area) + 0.5 / math.sqrt(100_000 / area)
    assert self_report.cd == pytest.approx(expected, rel=0.05)


def test_self_comparison_chamfer_floor_at_dense_sampling():
    m = icosphere(4, 0.5)
    r = evaluate_pair(m, m, EvalConfig(n_pred=1_000_000, n_gt=1_000_000, iou_mode="NEVER"))
    assert r.cd <= 0.002


def test_empty_prediction_flag():
    r = evaluate_pair(empty_mesh(), icosphere(2, 0.5))
    assert r.empty_prediction and r.status == "empty"
    assert r.cd is None and r.fs == {}
    r = evaluate_pair(square(1.0).with_vertices(np.zeros((4, 3))), icosphere(2, 0.5))
    assert r.empty_prediction


def test_empty_gt_is_an_error_row():
    r = evaluate_pair(icosphere(2, 0.5), empty_mesh())
    assert r.status == "error" and not r.empty_prediction


def test_iou_omitted_for_open_meshes():
    r = evaluate_pair(square(1.0), icosphere(2, 0.5), EvalConfig(n_pred=2000, n_gt=2000, n_iou=1000))
    assert r.iou is None
    r = evaluate_pair(icosphere(2, 0.5), icosphere(2, 0.5),
                      EvalConfig(n_pred=2000, n_gt=2000, n_iou=1000, iou_mode=IouMode.NEVER))
    assert r.iou is None


def test_evaluate_pair_deterministic():
    cfg = EvalConfig(n_pred=5000, n_gt=5000, n_iou=2000, rng_seed=5)
    a = evaluate_pair(box((1, 0.5, 0.3)), icosphere(3, 0.5), cfg)
    b = evaluate_pair(box((1, 0.5, 0.3)), icosphere(3, 0.5), cfg)
    assert a == b


def test_report_row_round_trip_is_exact():
    r = MetricReport(cd=0.1 + 0.2, iou=None, nc=1 / 3, fs={"0.5": 2 / 3, "1": 1.0}, precision={"0.5": 0.7},
                     recall={"0.5": 0.1}, n_pred_points=5, n_gt_points=7, mesh_id="a/b", class_label="c",
                     split="SEEN")
    th = (0.5, 1.0)
    row = report_to_row(r, th)
    assert list(row) == csv_columns(th)
    back = report_from_row(row)
    assert back.cd == r.cd and back.nc == r.nc and back.fs == r.fs and back.iou is None
    rec = json.loads(r.to_record())
    assert rec["cd"] == r.cd and rec["class"] == "c"
