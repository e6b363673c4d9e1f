import math

import numpy as np
import pytest

from shapemetric.bvh import Bvh, closest_point_on_triangle
from shapemetric.primitives import box, icosphere, primitive_corpus, torus

from oracles import brute_first_hit, brute_unsigned_distance, point_triangle_distance


def _random_soup(rng, n):
    centers = rng.uniform(-0.5, 0.5, size=(n, 1, 3))
    return centers + rng.normal(scale=0.08, size=(n, 3, 3))


def test_closest_point_regions():
    a, b, c = np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])
    cases = {
        (0.2, 0.2, 1.0): (0.2, 0.2, 0.0),  # face interior
        (-1.0, -1.0, 0.0): (0.0, 0.0, 0.0),  # vertex a
        (2.0, -0.5, 0.0): (1.0, 0.0, 0.0),  # vertex b
        (0.5, -1.0, 0.0): (0.5, 0.0, 0.0),  # edge ab
        (1.0, 1.0, 0.0): (0.5, 0.5, 0.0),  # edge bc
        (-1.0, 0.5, 3.0): (0.0, 0.5, 0.0),  # edge ca
    }
    for p, q in cases.items():
        got = closest_point_on_triangle(np.array(p), a, b, c)
        assert np.allclose(got, q, atol=1e-15), p


def test_closest_matches_brute_force_on_soup(rng):
    tris = _random_soup(rng, 500)
    pts = rng.uniform(-0.8, 0.8, size=(400, 3))
    dist, face, cp = Bvh(tris).closest(pts)
    ref = brute_unsigned_distance(tris, pts)
    assert np.max(np.abs(dist - ref)) < 1e-9
    # the reported face attains the distance, and the closest point is at that distance
    own = np.array([point_triangle_distance(p, tris[f : f + 1])[0] for p, f in zip(pts, face)])
    assert np.max(np.abs(own - dist)) < 1e-9
    assert np.allclose(np.linalg.norm(cp - pts, axis=1), dist, atol=1e-12)


def test_closest_with_degenerate_triangles(rng):
    tris = _random_soup(rng, 60)
    tris[::7, 2] = tris[::7, 1]  # collapse an edge
    tris[::11, :] = tris[::11, :1]  # collapse to a point
    pts = rng.uniform(-0.8, 0.8, size=(200, 3))
    dist = Bvh(tris).closest(pts)[0]
    assert np.max(np.abs(dist - brute_unsigned_distance(tris, pts))) < 1e-9


@pytest.mark.parametrize("leaf", [1, 4, 16])
def test_leaf_size_does_not_change_answers(rng, leaf):
    m = torus()
    pts = rng.uniform(-0.6, 0.6, size=(300, 3))
    d = Bvh(m.triangles, leaf_size=leaf).closest(pts)[0]
    assert np.max(np.abs(d - brute_unsigned_distance(m.triangles, pts))) < 1e-9


def test_first_hit_matches_brute_force(rng):
    m = primitive_corpus()[5][1]
    bvh = Bvh(m.triangles)
    origins = rng.uniform(-1.5, 1.5, size=(300, 3))
    targets = rng.uniform(-0.3, 0.3, size=(300, 3))
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, face = bvh.first_hit(origins, dirs)
    ref = np.array([brute_first_hit(m.triangles, o, d) for o, d in zip(origins, dirs)])
    hit = np.isfinite(ref)
    assert np.array_equal(np.isfinite(t), hit)
    assert np.max(np.abs(t[hit] - ref[hit])) < 1e-9
    assert np.all(face[~hit] == -1)


def test_first_hit_miss_and_behind():
    bvh = Bvh(box((1, 1, 1)).triangles)
    t, f = bvh.first_hit(np.array([[0, 0, 3.0]]), np.array([[0, 0, 1.0]]))
    assert math.isinf(t[0]) and f[0] == -1
    t, _ = bvh.first_hit(np.array([[0, 0, 3.0]]), np.array([[0, 0, -1.0]]))
    assert t[0] == pytest.approx(2.5, abs=1e-12)


def test_winding_number_closed_mesh(rng):
    m = icosphere(3, 0.5)
    bvh = Bvh(m.triangles)
    inside = rng.normal(size=(200, 3))
    inside *= (rng.uniform(0, 0.45, 200) / np.linalg.norm(inside, axis=1))[:, None]
    outside = rng.normal(size=(200, 3))
    outside *= (rng.uniform(0.55, 3.0, 200) / np.linalg.norm(outside, axis=1))[:, None]
    w_in = bvh.winding_number(inside, "exact")
    w_out = bvh.winding_number(outside, "exact")
    assert np.allclose(w_in, 1.0, atol=1e-9)
    assert np.allclose(w_out, 0.0, atol=1e-9)


def test_fast_winding_close_to_exact_and_auto_agrees(rng):
    m = torus()
    bvh = Bvh(m.triangles)
    pts = rng.uniform(-0.6, 0.6, size=(3000, 3))
    exact = bvh.winding_number(pts, "exact")
    fast = bvh.winding_number(pts, "fast")
    auto = bvh.winding_number(pts, "auto")
    assert np.max(np.abs(fast - exact)) < 0.05
    assert np.array_equal(auto > 0.5, exact > 0.5)


def test_open_surface_winding_is_fractional():
    # a single square seen from straight above on its axis covers a known solid angle
    tris = np.array([[[-1, -1, 0], [1, -1, 0], [1, 1, 0]], [[-1, -1, 0], [1, 1, 0], [-1, 1, 0]]], float)
    w = Bvh(tris).winding_number(np.array([[0, 0, 1.0]]), "exact")[0]
    # rectangle a x b at distance d on its axis: 4 asin(ab / sqrt((a^2 + 4d^2)(b^2 + 4d^2)))
    omega = 4 * math.asin(4.0 / math.sqrt(8.0 * 8.0))
    assert abs(w) == pytest.approx(omega / (4 * math.pi), abs=1e-12)
    assert abs(w) == pytest.approx(1 / 6, abs=1e-12)  # one face of a cube seen from its center


def test_empty_bvh_rejected():
    with pytest.raises(ValueError):
        Bvh(np.zeros((0, 3, 3)))
