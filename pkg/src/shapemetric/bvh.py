"""Bounding-volume hierarchy over triangles, with numba kernels for
closest-point queries, first-hit ray casting and generalized winding numbers.
"""

from __future__ import annotations

import math

import numpy as np

from ._parallel import configure_numba

nb = configure_numba()

LEAF_SIZE = 4
# fast winding number: a cluster is expanded when the query is closer than BETA * radius
FAST_WINDING_BETA = 2.0
# median splits keep the tree depth near log2(F); two pushes per level
_STACK = 256
_INV_4PI = 1.0 / (4.0 * math.pi)


@nb.njit(cache=True)
def _build(centroids, lo_t, hi_t, leaf_size):
    n = centroids.shape[0]
    order = np.arange(n)
    max_nodes = 2 * n + 1
    bmin = np.empty((max_nodes, 3))
    bmax = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    start = np.zeros(max_nodes, np.int64)
    count = np.zeros(max_nodes, np.int64)
    stack = np.empty(max_nodes, np.int64)
    n_nodes = 1
    start[0] = 0
    count[0] = n
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        c = count[node]
        for k in range(3):
            bmin[node, k] = np.inf
            bmax[node, k] = -np.inf
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for i in range(s, s + c):
            t = order[i]
            for k in range(3):
                if lo_t[t, k] < bmin[node, k]:
                    bmin[node, k] = lo_t[t, k]
                if hi_t[t, k] > bmax[node, k]:
                    bmax[node, k] = hi_t[t, k]
                if centroids[t, k] < cmin[k]:
                    cmin[k] = centroids[t, k]
                if centroids[t, k] > cmax[k]:
                    cmax[k] = centroids[t, k]
        if c <= leaf_size:
            continue
        axis = 0
        ext = cmax[0] - cmin[0]
        for k in range(1, 3):
            if cmax[k] - cmin[k] > ext:
                ext = cmax[k] - cmin[k]
                axis = k
        if ext <= 0.0:
            continue
        seg = order[s : s + c].copy()
        keys = np.empty(c)
        for i in range(c):
            keys[i] = centroids[seg[i], axis]
        perm = np.argsort(keys, kind="mergesort")
        for i in range(c):
            order[s + i] = seg[perm[i]]
        half = c // 2
        l_node = n_nodes
        r_node = n_nodes + 1
        n_nodes += 2
        left[node] = l_node
        right[node] = r_node
        start[l_node] = s
        count[l_node] = half
        start[r_node] = s + half
        count[r_node] = c - half
        count[node] = 0
        stack[sp] = l_node
        sp += 1
        stack[sp] = r_node
        sp += 1
    return order, bmin[:n_nodes], bmax[:n_nodes], left[:n_nodes], right[:n_nodes], start[:n_nodes], count[:n_nodes]


@nb.njit(cache=True, inline="always")
def _dot(ax, ay, az, bx, by, bz):
    return ax * bx + ay * by + az * bz


@nb.njit(cache=True)
def closest_point_on_triangle(p, a, b, c):
    """Closest point on triangle ``abc`` to ``p`` (Voronoi-region walk), as an (x, y, z) tuple."""
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    d1 = _dot(abx, aby, abz, apx, apy, apz)
    d2 = _dot(acx, acy, acz, apx, apy, apz)
    if d1 <= 0.0 and d2 <= 0.0:
        return a[0], a[1], a[2]
    bpx, bpy, bpz = p[0] - b[0], p[1] - b[1], p[2] - b[2]
    d3 = _dot(abx, aby, abz, bpx, bpy, bpz)
    d4 = _dot(acx, acy, acz, bpx, bpy, bpz)
    if d3 >= 0.0 and d4 <= d3:
        return b[0], b[1], b[2]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a[0] + v * abx, a[1] + v * aby, a[2] + v * abz
    cpx, cpy, cpz = p[0] - c[0], p[1] - c[1], p[2] - c[2]
    d5 = _dot(abx, aby, abz, cpx, cpy, cpz)
    d6 = _dot(acx, acy, acz, cpx, cpy, cpz)
    if d6 >= 0.0 and d5 <= d6:
        return c[0], c[1], c[2]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a[0] + w * acx, a[1] + w * acy, a[2] + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2])
    denom = va + vb + vc
    if denom == 0.0:
        # zero-area sliver: nearest point over its three edges
        bx, by, bz = a[0], a[1], a[2]
        bd = np.inf
        for e in range(3):
            if e == 0:
                u, q = a, b
            elif e == 1:
                u, q = b, c
            else:
                u, q = c, a
            ex, ey, ez = q[0] - u[0], q[1] - u[1], q[2] - u[2]
            ee = _dot(ex, ey, ez, ex, ey, ez)
            t = 0.0
            if ee > 0.0:
                t = _dot(p[0] - u[0], p[1] - u[1], p[2] - u[2], ex, ey, ez) / ee
                t = min(1.0, max(0.0, t))
            qx, qy, qz = u[0] + t * ex, u[1] + t * ey, u[2] + t * ez
            dd = (p[0] - qx) ** 2 + (p[1] - qy) ** 2 + (p[2] - qz) ** 2
            if dd < bd:
                bd = dd
                bx, by, bz = qx, qy, qz
        return bx, by, bz
    inv = 1.0 / denom
    v = vb * inv
    w = vc * inv
    return a[0] + abx * v + acx * w, a[1] + aby * v + acy * w, a[2] + abz * v + acz * w


@nb.njit(cache=True, inline="always")
def _box_dist2(p, lo, hi):
    d = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            d += (lo[k] - p[k]) ** 2
        elif p[k] > hi[k]:
            d += (p[k] - hi[k]) ** 2
    return d


@nb.njit(cache=True, parallel=True, nogil=True)
def _closest(points, tris, order, bmin, bmax, left, right, start, count):
    n = points.shape[0]
    dist = np.empty(n)
    face = np.empty(n, np.int64)
    closest = np.empty((n, 3))
    depth = _STACK
    for q in nb.prange(n):
        p = points[q]
        stack = np.empty(depth, np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        best = np.inf
        best_f = -1
        cx, cy, cz = 0.0, 0.0, 0.0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_dist2(p, bmin[node], bmax[node]) > best:
                continue
            if count[node] > 0:
                for i in range(start[node], start[node] + count[node]):
                    t = order[i]
                    x, y, z = closest_point_on_triangle(p, tris[t, 0], tris[t, 1], tris[t, 2])
                    d = (p[0] - x) ** 2 + (p[1] - y) ** 2 + (p[2] - z) ** 2
                    if d < best or (d == best and t < best_f):
                        best = d
                        best_f = t
                        cx, cy, cz = x, y, z
            else:
                l, r = left[node], right[node]
                dl = _box_dist2(p, bmin[l], bmax[l])
                dr = _box_dist2(p, bmin[r], bmax[r])
                # push the farther child first so the nearer one is popped next
                if dl <= dr:
                    stack[sp] = r
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = r
                sp += 2
        dist[q] = math.sqrt(best)
        face[q] = best_f
        closest[q, 0] = cx
        closest[q, 1] = cy
        closest[q, 2] = cz
    return dist, face, closest


@nb.njit(cache=True, inline="always")
def _ray_box(o, inv_d, lo, hi, t_max):
    t0 = 0.0
    t1 = t_max
    for k in range(3):
        ta = (lo[k] - o[k]) * inv_d[k]
        tb = (hi[k] - o[k]) * inv_d[k]
        if ta > tb:
            ta, tb = tb, ta
        # NaN from 0 * inf leaves the interval unchanged
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@nb.njit(cache=True, inline="always")
def _ray_triangle(o, d, a, b, c):
    """Moller-Trumbore; returns the hit distance or inf. Two-sided."""
    e1x, e1y, e1z = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    e2x, e2y, e2z = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    px = d[1] * e2z - d[2] * e2y
    py = d[2] * e2x - d[0] * e2z
    pz = d[0] * e2y - d[1] * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return np.inf
    inv = 1.0 / det
    tx, ty, tz = o[0] - a[0], o[1] - a[1], o[2] - a[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= 0.0:
        return np.inf
    return t


@nb.njit(cache=True, parallel=True, nogil=True)
def _first_hit(origins, dirs, tris, order, bmin, bmax, left, right, start, count):
    n = origins.shape[0]
    hit_t = np.full(n, np.inf)
    hit_f = np.full(n, -1, np.int64)
    depth = _STACK
    for q in nb.prange(n):
        o = origins[q]
        d = dirs[q]
        inv_d = np.empty(3)
        for k in range(3):
            inv_d[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
        stack = np.empty(depth, np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        best = np.inf
        best_f = -1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _ray_box(o, inv_d, bmin[node], bmax[node], best):
                continue
            if count[node] > 0:
                for i in range(start[node], start[node] + count[node]):
                    f = order[i]
                    t = _ray_triangle(o, d, tris[f, 0], tris[f, 1], tris[f, 2])
                    if t < best or (t == best and t < np.inf and f < best_f):
                        best = t
                        best_f = f
            else:
                stack[sp] = left[node]
                stack[sp + 1] = right[node]
                sp += 2
        hit_t[q] = best
        hit_f[q] = best_f
    return hit_t, hit_f


@nb.njit(cache=True, inline="always")
def _solid_angle(p, a, b, c):
    """Signed solid angle of triangle abc seen from p (Van Oosterom & Strackee)."""
    ax, ay, az = a[0] - p[0], a[1] - p[1], a[2] - p[2]
    bx, by, bz = b[0] - p[0], b[1] - p[1], b[2] - p[2]
    cx, cy, cz = c[0] - p[0], c[1] - p[1], c[2] - p[2]
    la = math.sqrt(ax * ax + ay * ay + az * az)
    lb = math.sqrt(bx * bx + by * by + bz * bz)
    lc = math.sqrt(cx * cx + cy * cy + cz * cz)
    det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
    div = la * lb * lc + _dot(ax, ay, az, bx, by, bz) * lc + _dot(ax, ay, az, cx, cy, cz) * lb \
        + _dot(bx, by, bz, cx, cy, cz) * la
    return 2.0 * math.atan2(det, div)


@nb.njit(cache=True, parallel=True, nogil=True)
def _winding_exact(points, tris):
    n = points.shape[0]
    out = np.empty(n)
    for q in nb.prange(n):
        p = points[q]
        s = 0.0
        for t in range(tris.shape[0]):
            s += _solid_angle(p, tris[t, 0], tris[t, 1], tris[t, 2])
        out[q] = s * _INV_4PI
    return out


@nb.njit(cache=True)
def _cluster_moments(tris, order, left, right, start, count, n_nodes):
    """Area-weighted normal sums, centroids and radii per node (children before parents)."""
    normal = np.zeros((n_nodes, 3))
    center = np.zeros((n_nodes, 3))
    area = np.zeros(n_nodes)
    radius = np.zeros(n_nodes)
    # nodes are created parent-first, so a reverse sweep sees children first
    for node in range(n_nodes - 1, -1, -1):
        if count[node] > 0:
            for i in range(start[node], start[node] + count[node]):
                t = order[i]
                a, b, c = tris[t, 0], tris[t, 1], tris[t, 2]
                nx = 0.5 * ((b[1] - a[1]) * (c[2] - a[2]) - (b[2] - a[2]) * (c[1] - a[1]))
                ny = 0.5 * ((b[2] - a[2]) * (c[0] - a[0]) - (b[0] - a[0]) * (c[2] - a[2]))
                nz = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
                ar = math.sqrt(nx * nx + ny * ny + nz * nz)
                normal[node, 0] += nx
                normal[node, 1] += ny
                normal[node, 2] += nz
                area[node] += ar
                for k in range(3):
                    center[node, k] += ar * (a[k] + b[k] + c[k]) / 3.0
        else:
            l, r = left[node], right[node]
            for k in range(3):
                normal[node, k] = normal[l, k] + normal[r, k]
                center[node, k] = center[l, k] + center[r, k]
            area[node] = area[l] + area[r]
    for node in range(n_nodes):
        if area[node] > 0.0:
            for k in range(3):
                center[node, k] /= area[node]
    for node in range(n_nodes - 1, -1, -1):
        rr = 0.0
        if count[node] > 0:
            for i in range(start[node], start[node] + count[node]):
                t = order[i]
                for j in range(3):
                    d = 0.0
                    for k in range(3):
                        d += (tris[t, j, k] - center[node, k]) ** 2
                    rr = max(rr, math.sqrt(d))
        else:
            for child in (left[node], right[node]):
                d = 0.0
                for k in range(3):
                    d += (center[child, k] - center[node, k]) ** 2
                rr = max(rr, math.sqrt(d) + radius[child])
        radius[node] = rr
    return normal, center, radius


@nb.njit(cache=True, parallel=True, nogil=True)
def _winding_fast(points, tris, order, left, right, start, count, normal, center, radius, beta):
    n = points.shape[0]
    out = np.empty(n)
    depth = _STACK
    for q in nb.prange(n):
        p = points[q]
        stack = np.empty(depth, np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        s = 0.0
        while sp > 0:
            sp -= 1
            node = stack[sp]
            dx = center[node, 0] - p[0]
            dy = center[node, 1] - p[1]
            dz = center[node, 2] - p[2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 > (beta * radius[node]) ** 2:
                # dipole term of a far cluster: A . (c - p) / |c - p|^3
                s += (normal[node, 0] * dx + normal[node, 1] * dy + normal[node, 2] * dz) / (r2 * math.sqrt(r2))
            elif count[node] > 0:
                for i in range(start[node], start[node] + count[node]):
                    t = order[i]
                    s += _solid_angle(p, tris[t, 0], tris[t, 1], tris[t, 2])
            else:
                stack[sp] = left[node]
                stack[sp + 1] = right[node]
                sp += 2
        out[q] = s * _INV_4PI
    return out


class Bvh:
    """Immutable median-split BVH over an (F, 3, 3) triangle array."""

    def __init__(self, triangles, leaf_size: int = LEAF_SIZE):
        tris = np.ascontiguousarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
        if len(tris) == 0:
            raise ValueError("BVH needs at least one triangle")
        self.triangles = tris
        (self.order, self.bmin, self.bmax, self.left, self.right,
         self.start, self.count) = _build(tris.mean(axis=1), tris.min(axis=1), tris.max(axis=1), leaf_size)
        self._moments = None

    @property
    def n_nodes(self) -> int:
        return len(self.bmin)

    def _nodes(self):
        return self.order, self.bmin, self.bmax, self.left, self.right, self.start, self.count

    def closest(self, points):
        """Exact unsigned distance, closest face id and closest point for each query."""
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return np.zeros(0), np.zeros(0, np.int64), np.zeros((0, 3))
        return _closest(pts, self.triangles, *self._nodes())

    def first_hit(self, origins, directions):
        """Distance along each ray (in units of the direction length) to the first triangle; inf on miss."""
        o = np.ascontiguousarray(np.broadcast_to(origins, np.shape(directions)), dtype=np.float64).reshape(-1, 3)
        d = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
        if len(d) == 0:
            return np.zeros(0), np.zeros(0, np.int64)
        return _first_hit(o, d, self.triangles, *self._nodes())

    def winding_number(self, points, method: str = "exact"):
        """Generalized winding number of the triangle soup at each point.

        ``exact`` sums every triangle's solid angle. ``fast`` replaces distant
        clusters by their dipole term. ``auto`` runs ``fast`` and recomputes
        exactly wherever the estimate lies within 0.25 of the 0.5 inside
        threshold, so the inside/outside decision matches ``exact`` whenever
        the far-field error stays below 0.25.
        """
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return np.zeros(0)
        if method == "exact":
            return _winding_exact(pts, self.triangles)
        if method == "auto":
            w = self.winding_number(pts, "fast")
            unsure = np.flatnonzero(np.abs(w - 0.5) < 0.25)
            if len(unsure):
                w[unsure] = _winding_exact(pts[unsure], self.triangles)
            return w
        if method != "fast":
            raise ValueError(f"unknown winding method {method!r}")
        if self._moments is None:
            self._moments = _cluster_moments(self.triangles, self.order, self.left, self.right,
                                             self.start, self.count, self.n_nodes)
        normal, center, radius = self._moments
        return _winding_fast(pts, self.triangles, self.order, self.left, self.right, self.start,
                             self.count, normal, center, radius, FAST_WINDING_BETA)
