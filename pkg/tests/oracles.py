"""Slow, independent reference implementations used to check the fast paths.

Nothing here shares code with the package: distances use plane projection plus
segment clamping, rays use plane intersection plus an edge-sign test, nearest
neighbours use a dense distance matrix.
"""

import math

import numpy as np


def segment_distance(p, a, b):
    """Distance from p (3,) to segments a->b (F,3)."""
    ab = b - a
    t = np.einsum("ij,ij->i", p - a, ab) / np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[:, None] * ab
    return np.linalg.norm(p - q, axis=1)


def point_triangle_distance(p, tris):
    """Distance from p to each triangle in tris (F,3,3)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    ok = nn > 0
    n_hat = np.zeros_like(n)
    n_hat[ok] = n[ok] / nn[ok, None]
    h = np.einsum("ij,ij->i", p - a, n_hat)
    q = p - h[:, None] * n_hat
    # q inside iff it is on the inner side of all three edges
    s1 = np.einsum("ij,ij->i", np.cross(b - a, q - a), n)
    s2 = np.einsum("ij,ij->i", np.cross(c - b, q - b), n)
    s3 = np.einsum("ij,ij->i", np.cross(a - c, q - c), n)
    inside = ok & (s1 >= 0) & (s2 >= 0) & (s3 >= 0)
    edge = np.minimum(np.minimum(segment_distance(p, a, b), segment_distance(p, b, c)), segment_distance(p, c, a))
    return np.where(inside, np.abs(h), edge)


def brute_unsigned_distance(tris, points):
    return np.array([point_triangle_distance(p, tris).min() for p in np.asarray(points, float)])


def brute_first_hit(tris, origin, direction):
    """Smallest positive ray parameter over all triangles, inf on a miss."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    denom = n @ direction
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", a - origin, n) / denom
    q = origin + t[:, None] * direction
    s1 = np.einsum("ij,ij->i", np.cross(b - a, q - a), n)
    s2 = np.einsum("ij,ij->i", np.cross(c - b, q - b), n)
    s3 = np.einsum("ij,ij->i", np.cross(a - c, q - c), n)
    hit = (np.abs(denom) > 1e-15) & (t > 0) & (s1 >= 0) & (s2 >= 0) & (s3 >= 0)
    return float(t[hit].min()) if hit.any() else math.inf


def brute_nn(queries, points):
    """(distance, index) of the nearest point; argmin keeps the lowest index on ties."""
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    idx = d2.argmin(axis=1)
    return np.sqrt(d2[np.arange(len(queries)), idx]), idx


def ray_parity_inside(tris, points, direction):
    """Odd number of crossings along ``direction`` means inside."""
    out = np.zeros(len(points), dtype=bool)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    denom = n @ direction
    for i, o in enumerate(points):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.einsum("ij,ij->i", a - o, n) / denom
        q = o + t[:, None] * direction
        s1 = np.einsum("ij,ij->i", np.cross(b - a, q - a), n)
        s2 = np.einsum("ij,ij->i", np.cross(c - b, q - b), n)
        s3 = np.einsum("ij,ij->i", np.cross(a - c, q - c), n)
        hit = (np.abs(denom) > 1e-15) & (t > 0) & (s1 >= 0) & (s2 >= 0) & (s3 >= 0)
        out[i] = hit.sum() % 2 == 1
    return out


def haar_angle_cdf(theta):
    """CDF of the rotation angle of a Haar-random rotation: density (1 - cos t) / pi on [0, pi]."""
    theta = np.asarray(theta, dtype=float)
    return (theta - np.sin(theta)) / math.pi


def sphere_visible_fraction(radius, distance):
    """Area fraction of a sphere seen from a point viewer: the cap beyond the tangent circle."""
    # cap height measured from the near pole to the tangent plane is r - r^2/D
    return (radius - radius * radius / distance) / (2.0 * radius)
