"""Quadrature rules on polygons and edges.

Polygon rules are built by triangulating the cell (centroid fan when the
polygon is star-shaped with respect to its centroid, ear clipping otherwise)
and mapping a tensor Gauss rule through the Duffy transform onto each
sub-triangle.  Edge rules are Gauss-Legendre in the arclength coordinate
measured from the first endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import TriangulationFailure


@dataclass(frozen=True)
class QuadratureRule:
    """Points, weights and the polynomial order the rule integrates exactly.

    For polygon rules ``points`` has shape (n, 2).  For edge rules ``points``
    holds the arclength coordinate s in [0, |e|] (shape (n,)) and ``xy`` the
    corresponding physical positions.
    """

    points: np.ndarray
    weights: np.ndarray
    order: int
    xy: np.ndarray | None = None


@lru_cache(maxsize=None)
def _gauss_01(n: int):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def _reference_triangle_rule(order: int):
    """Rule on the triangle {(x,y): x,y >= 0, x+y <= 1}, exact for P_order.

    Duffy map x=u, y=v(1-u) from the unit square; the Jacobian (1-u) raises
    the u-degree by one, hence the extra point in u.
    """
    n = (order + 3) // 2
    u, wu = _gauss_01(n)
    v, wv = _gauss_01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    w = (WU * WV * (1.0 - U)).ravel()
    return np.column_stack([x, y]), w


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _polygon_centroid(vertices: np.ndarray):
    x, y = vertices[:, 0], vertices[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * cross.sum()
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
    return np.array([cx, cy]), area


def _strip_collinear(vertices: np.ndarray) -> np.ndarray:
    """Drop vertices that sit on a straight run of the boundary.

    Hanging nodes are irrelevant for integration; removing them keeps the
    ear-clipping loop away from zero-area ears.
    """
    n = len(vertices)
    scale = max(np.ptp(vertices[:, 0]), np.ptp(vertices[:, 1]), 1e-300)
    keep = []
    for i in range(n):
        prev_v = vertices[i - 1]
        cur = vertices[i]
        nxt = vertices[(i + 1) % n]
        a, b = cur - prev_v, nxt - cur
        cross = a[0] * b[1] - a[1] * b[0]
        if abs(cross) > 1e-13 * scale * scale:
            keep.append(i)
    if len(keep) < 3:
        raise TriangulationFailure("polygon degenerates to a segment")
    return vertices[keep]


def _triangulate(vertices: np.ndarray):
    """Return index triples triangulating the (CCW, simple) polygon."""
    verts = _strip_collinear(np.asarray(vertices, dtype=float))
    n = len(verts)
    centroid, area = _polygon_centroid(verts)
    if area <= 0.0:
        raise TriangulationFailure("polygon is not counterclockwise")

    # Centroid fan works whenever the polygon is star-shaped wrt its centroid.
    fan_ok = True
    tris = []
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        tri_area = 0.5 * ((a[0] - centroid[0]) * (b[1] - centroid[1])
                          - (a[1] - centroid[1]) * (b[0] - centroid[0]))
        if tri_area <= 1e-12 * area:
            fan_ok = False
            break
        tris.append((centroid, a, b))
    if fan_ok:
        return tris

    # Ear clipping for nonconvex cells.
    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * n * n:
            raise TriangulationFailure("no ear found; polygon degenerate")
        clipped = False
        for pos in range(len(idx)):
            i0 = idx[pos - 1]
            i1 = idx[pos]
            i2 = idx[(pos + 1) % len(idx)]
            p0, p1, p2 = verts[i0], verts[i1], verts[i2]
            cross = ((p1[0] - p0[0]) * (p2[1] - p0[1])
                     - (p1[1] - p0[1]) * (p2[0] - p0[0]))
            if cross <= 1e-14 * area:
                continue
            if any(_point_in_triangle(verts[j], p0, p1, p2)
                   for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append((p0, p1, p2))
            idx.pop(pos)
            clipped = True
            break
        if not clipped:
            raise TriangulationFailure("no ear found; polygon not simple?")
    tris.append(tuple(verts[j] for j in idx))
    return tris


def _point_in_triangle(p, a, b, c) -> bool:
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    has_neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    has_pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (has_neg and has_pos)


def polygon_quadrature(vertices: np.ndarray, order: int) -> QuadratureRule:
    """Quadrature exact for P_order on a simple CCW polygon.

    Args:
        vertices: (n, 2) polygon vertex loop, counterclockwise.
        order: requested polynomial exactness (>= 0).
    """
    order = max(int(order), 0)
    ref_pts, ref_w = _reference_triangle_rule(order)
    pts, wts = [], []
    for p0, p1, p2 in _triangulate(vertices):
        j00, j01 = p1[0] - p0[0], p2[0] - p0[0]
        j10, j11 = p1[1] - p0[1], p2[1] - p0[1]
        det = j00 * j11 - j01 * j10
        x = p0[0] + j00 * ref_pts[:, 0] + j01 * ref_pts[:, 1]
        y = p0[1] + j10 * ref_pts[:, 0] + j11 * ref_pts[:, 1]
        pts.append(np.column_stack([x, y]))
        wts.append(ref_w * abs(det))
    return QuadratureRule(points=np.vstack(pts), weights=np.concatenate(wts),
                          order=order)


def edge_quadrature(p0, p1, order: int) -> QuadratureRule:
    """Gauss-Legendre rule on the segment p0 -> p1, exact for P_order traces.

    The rule's ``points`` are arclength coordinates measured from p0, so two
    cells sharing the edge see identical moment functionals as long as both
    pass the canonical (lower-index) endpoint first.
    """
    order = max(int(order), 0)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.hypot(*(p1 - p0)))
    n = (order + 2) // 2
    x, w = _gauss_01(n)
    s = x * length
    xy = p0[None, :] + (s / length)[:, None] * (p1 - p0)[None, :]
    return QuadratureRule(points=s, weights=w * length, order=order, xy=xy)
