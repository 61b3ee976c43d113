"""Planar convex-polygon primitives shared by the planner and the simulator.

All functions broadcast over leading dimensions: a polygon array has shape
``(..., n_vertices, 2)`` with vertices in order around the boundary.
"""

from __future__ import annotations

import numpy as np

EGO_LENGTH = 4.35
EGO_WIDTH = 1.63


def box_polygon(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centred at ``(x, y)``, counter-clockwise."""
    return box_polygons(np.array([[x, y]]), np.array([heading]), length, width)[0]


def box_polygons(centers, headings, length, width) -> np.ndarray:
    """Vectorised :func:`box_polygon`. ``centers`` is ``(n, 2)``, returns ``(n, 4, 2)``."""
    centers = np.asarray(centers, dtype=float)
    headings = np.asarray(headings, dtype=float)
    c, s = np.cos(headings), np.sin(headings)
    hl = np.asarray(length, dtype=float) / 2.0
    hw = np.asarray(width, dtype=float) / 2.0
    # local corners: (+l,+w) (-l,+w) (-l,-w) (+l,-w) -> CCW
    lx = np.stack([hl, -hl, -hl, hl], axis=-1) * np.ones_like(headings)[..., None]
    ly = np.stack([hw, hw, -hw, -hw], axis=-1) * np.ones_like(headings)[..., None]
    px = centers[..., 0:1] + c[..., None] * lx - s[..., None] * ly
    py = centers[..., 1:2] + s[..., None] * lx + c[..., None] * ly
    return np.stack([px, py], axis=-1)


def _broadcast_pair(a: np.ndarray, b: np.ndarray):
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    return (np.broadcast_to(a, lead + a.shape[-2:]), np.broadcast_to(b, lead + b.shape[-2:]))


def _edge_normals(poly: np.ndarray) -> np.ndarray:
    edges = np.roll(poly, -1, axis=-2) - poly
    return np.stack([edges[..., 1], -edges[..., 0]], axis=-1)


def _project(poly: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """Projections ``(..., n_axes, n_vertices)`` of the vertices onto each axis."""
    return axes[..., :, None, 0] * poly[..., None, :, 0] + axes[..., :, None, 1] * poly[..., None, :, 1]


def convex_intersect(a, b) -> np.ndarray:
    """Separating-axis test. Touching polygons count as intersecting."""
    a, b = _broadcast_pair(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    axes = np.concatenate([_edge_normals(a), _edge_normals(b)], axis=-2)
    pa = _project(a, axes)
    pb = _project(b, axes)
    separated = (pa.max(axis=-1) < pb.min(axis=-1)) | (pb.max(axis=-1) < pa.min(axis=-1))
    return ~separated.any(axis=-1)


def _points_to_segments(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Min distance from each vertex in ``points`` to the boundary of ``poly``."""
    s0 = poly[..., None, :, :]
    seg = (np.roll(poly, -1, axis=-2) - poly)[..., None, :, :]
    rel = points[..., :, None, :] - s0
    sx, sy = seg[..., 0], seg[..., 1]
    rx, ry = rel[..., 0], rel[..., 1]
    seg_len2 = sx * sx + sy * sy
    seg_len2 = np.where(seg_len2 > 0.0, seg_len2, 1.0)
    t = np.clip((rx * sx + ry * sy) / seg_len2, 0.0, 1.0)
    dx, dy = rx - t * sx, ry - t * sy
    return np.sqrt((dx * dx + dy * dy).min(axis=(-1, -2)))


def convex_distance(a, b) -> np.ndarray:
    """Exact separation distance between convex polygons (0 when they overlap)."""
    a, b = _broadcast_pair(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    d = np.minimum(_points_to_segments(a, b), _points_to_segments(b, a))
    return np.where(convex_intersect(a, b), 0.0, d)


def rect_frames(polys, tol: float = 1e-9):
    """Centre, unit axes and half extents of rectangles given as ``(n, 4, 2)``.

    Returns ``(center, ux, uy, half, ok)`` where ``ok`` flags the polygons that
    really are rectangles; the other rows are meaningless.
    """
    p = np.asarray(polys, dtype=float)
    if p.ndim != 3 or p.shape[1] != 4:
        n = p.shape[0] if p.ndim == 3 else 0
        return None, None, None, None, np.zeros(n, dtype=bool)
    e0 = p[:, 1] - p[:, 0]
    e1 = p[:, 2] - p[:, 1]
    l0 = np.hypot(e0[:, 0], e0[:, 1])
    l1 = np.hypot(e1[:, 0], e1[:, 1])
    scale = np.maximum(np.maximum(l0, l1), 1.0)
    ok = (
        (l0 > tol)
        & (l1 > tol)
        & (np.abs(e0[:, 0] * e1[:, 0] + e0[:, 1] * e1[:, 1]) <= tol * scale * scale)
        & np.all(np.abs(p[:, 3] - p[:, 2] + e0) <= tol * scale[:, None], axis=1)
    )
    ux = e0 / np.maximum(l0, tol)[:, None]
    uy = e1 / np.maximum(l1, tol)[:, None]
    half = np.stack([l0, l1], axis=1) / 2.0
    return p.mean(axis=1), ux, uy, half, ok


def _vertex_box_distance(verts, c, ux, uy, half):
    """Smallest distance from vertices ``(m, 4, 2)`` to solid rectangles (m,)."""
    rel = verts - c[:, None, :]
    lx = np.abs(rel[..., 0] * ux[:, None, 0] + rel[..., 1] * ux[:, None, 1]) - half[:, None, 0]
    ly = np.abs(rel[..., 0] * uy[:, None, 0] + rel[..., 1] * uy[:, None, 1]) - half[:, None, 1]
    lx, ly = np.maximum(lx, 0.0), np.maximum(ly, 0.0)
    return np.sqrt((lx * lx + ly * ly).min(axis=1))


def rect_distance(a, b, fa, fb) -> np.ndarray:
    """:func:`convex_distance` for rectangle pairs with frames from :func:`rect_frames`.

    The nearest points of disjoint convex polygons include a vertex of one of
    them, so vertex-to-solid-box distances give the separation; overlap is
    decided on the four box axes.
    """
    ca, uxa, uya, ha, _ = fa
    cb, uxb, uyb, hb, _ = fb
    d = np.minimum(_vertex_box_distance(a, cb, uxb, uyb, hb), _vertex_box_distance(b, ca, uxa, uya, ha))
    delta = cb - ca
    separated = np.zeros(len(d), dtype=bool)
    for n in (uxa, uya, uxb, uyb):
        ra = ha[:, 0] * np.abs((uxa * n).sum(1)) + ha[:, 1] * np.abs((uya * n).sum(1))
        rb = hb[:, 0] * np.abs((uxb * n).sum(1)) + hb[:, 1] * np.abs((uyb * n).sum(1))
        separated |= np.abs((delta * n).sum(1)) > ra + rb
    return np.where(separated, d, 0.0)


def point_in_convex(point, poly) -> bool:
    poly = np.asarray(poly, dtype=float)
    p = np.asarray(point, dtype=float)
    edges = np.roll(poly, -1, axis=0) - poly
    rel = p - poly
    cross = edges[:, 0] * rel[:, 1] - edges[:, 1] * rel[:, 0]
    return bool(np.all(cross >= 0.0) or np.all(cross <= 0.0))


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi
