"""Gauss rules on segments, triangles and polygons."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadRule:
    points: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def n_gauss_points(degree: int) -> int:
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def gauss_legendre(degree: int):
    """Gauss-Legendre nodes and weights on [0, 1] exact to ``degree``."""
    x, w = np.polynomial.legendre.leggauss(n_gauss_points(degree))
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def edge_rule(a, b, degree: int) -> QuadRule:
    """Gauss rule on the segment from ``a`` to ``b``; weights carry the length."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t, w = gauss_legendre(degree)
    length = float(np.linalg.norm(b - a)) if a.ndim else abs(float(b - a))
    if a.ndim == 0:
        pts = a + t * (b - a)
    else:
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return QuadRule(pts, w * length)


@lru_cache(maxsize=None)
def reference_triangle_rule(degree: int):
    """Collapsed (Duffy) Gauss rule on the triangle (0,0), (1,0), (0,1).

    Exact for polynomials of total degree ``degree``; all weights positive.
    """
    n = n_gauss_points(degree + 1)
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
    wts = (WU * WV * (1.0 - V)).ravel()
    pts.flags.writeable = False
    wts.flags.writeable = False
    return pts, wts


def triangle_rule(p0, p1, p2, degree: int) -> QuadRule:
    ref, w = reference_triangle_rule(degree)
    p0 = np.asarray(p0, dtype=float)
    J = np.column_stack([np.asarray(p1) - p0, np.asarray(p2) - p0])
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return QuadRule(p0[None, :] + ref @ J.T, w * abs(det))


def _tri_area(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


def ear_clip(pts) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping."""
    idx = list(range(len(pts)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(pts) ** 2:
            raise ValueError("ear clipping failed; polygon is not simple")
        m = len(idx)
        for i in range(m):
            a, b, c = idx[i - 1], idx[i], idx[(i + 1) % m]
            if _tri_area(pts[a], pts[b], pts[c]) <= 0.0:
                continue
            inside = False
            for j in idx:
                if j in (a, b, c):
                    continue
                p = pts[j]
                if (_tri_area(pts[a], pts[b], p) >= 0 and _tri_area(pts[b], pts[c], p) >= 0
                        and _tri_area(pts[c], pts[a], p) >= 0):
                    inside = True
                    break
            if not inside:
                tris.append((a, b, c))
                del idx[i]
                break
    tris.append(tuple(idx))
    return tris


def fan_triangles(vertices, centroid):
    """Sub-triangles used by :func:`cell_rule`, as a list of point triples."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    fan = [(centroid, v[i], v[(i + 1) % n]) for i in range(n)]
    if all(_tri_area(*t) > 0.0 for t in fan):
        return fan
    return [(v[a], v[b], v[c]) for a, b, c in ear_clip(v)]


def cell_rule(vertices, centroid, degree: int) -> QuadRule:
    """Polygon rule: centroid fan (ear clipping if the fan folds) of Gauss rules."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    pts, wts = [], []
    for tri in fan_triangles(vertices, centroid):
        r = triangle_rule(*tri, degree)
        pts.append(r.points)
        wts.append(r.weights)
    return QuadRule(np.concatenate(pts), np.concatenate(wts))
