"""Frenet frame over a window of the global route, projection and clearance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import EGO_LENGTH, EGO_WIDTH, box_polygons, convex_distance, rect_distance, rect_frames

DEFAULT_DS = 0.5
CLEARANCE_CAP = 5.0
LATERAL_BOUND = 10.0


class WindowEmpty(ValueError):
    pass


class OutOfCorridor(ValueError):
    pass


@dataclass(frozen=True)
class FrenetFrame:
    s: np.ndarray
    xy: np.ndarray
    heading: np.ndarray
    kappa: np.ndarray
    origin_s: float
    ds: float

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    def __len__(self) -> int:
        return len(self.s)

    # cubic Hermite interpolation between samples keeps arcs round
    def _hermite(self, s):
        s = np.asarray(s, dtype=float)
        n = len(self.s)
        i = np.clip(np.floor(s / self.ds).astype(int), 0, n - 2)
        u = s / self.ds - i
        p0, p1 = self.xy[i], self.xy[i + 1]
        t0 = np.stack([np.cos(self.heading[i]), np.sin(self.heading[i])], axis=-1) * self.ds
        t1 = np.stack([np.cos(self.heading[i + 1]), np.sin(self.heading[i + 1])], axis=-1) * self.ds
        return u, p0, p1, t0, t1

    def point_at(self, s, d=0.0) -> np.ndarray:
        """Cartesian point at frame coordinates ``(s, d)`` (vectorised over ``s``)."""
        u, p0, p1, t0, t1 = self._hermite(s)
        inside = (u >= 0.0) & (u <= 1.0)
        uc = np.clip(u, 0.0, 1.0)[..., None]
        h00 = 2 * uc**3 - 3 * uc**2 + 1
        h10 = uc**3 - 2 * uc**2 + uc
        h01 = -2 * uc**3 + 3 * uc**2
        h11 = uc**3 - uc**2
        p = h00 * p0 + h10 * t0 + h01 * p1 + h11 * t1
        dp = (6 * uc**2 - 6 * uc) * p0 + (3 * uc**2 - 4 * uc + 1) * t0 + (-6 * uc**2 + 6 * uc) * p1 + (3 * uc**2 - 2 * uc) * t1
        tangent = dp / np.linalg.norm(dp, axis=-1, keepdims=True)
        # linear extrapolation beyond the ends
        extra = (np.asarray(u) - np.clip(u, 0.0, 1.0))[..., None] * self.ds
        p = p + np.where(inside[..., None], 0.0, extra * tangent)
        normal = np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)
        return p + np.asarray(d, dtype=float)[..., None] * normal

    def heading_at(self, s) -> np.ndarray:
        u, p0, p1, t0, t1 = self._hermite(s)
        uc = np.clip(u, 0.0, 1.0)[..., None]
        dp = (6 * uc**2 - 6 * uc) * p0 + (3 * uc**2 - 4 * uc + 1) * t0 + (-6 * uc**2 + 6 * uc) * p1 + (3 * uc**2 - 2 * uc) * t1
        return np.arctan2(dp[..., 1], dp[..., 0])

    def kappa_at(self, s) -> np.ndarray:
        return np.interp(s, self.s, self.kappa)


def build_frame(route, from_s: float, window: float, ds: float = DEFAULT_DS) -> FrenetFrame:
    """Resample ``route`` from ``from_s`` over ``window`` metres at uniform ``ds``."""
    if window <= 0:
        raise ValueError("window must be positive")
    remaining = route.length - from_s
    if remaining < ds - 1e-9:
        raise WindowEmpty(f"no route left after s={from_s:.2f}")
    n = int(math.floor(min(window, remaining) / ds + 1e-9))
    s_local = np.arange(n + 1) * ds
    s_abs = from_s + s_local
    xy = np.stack([np.interp(s_abs, route.s, route.points[:, 0]), np.interp(s_abs, route.s, route.points[:, 1])], axis=1)
    return frame_from_points(xy, ds, origin_s=from_s)


def frame_from_points(xy: np.ndarray, ds: float, origin_s: float = 0.0) -> FrenetFrame:
    """Frame from points already spaced ``ds`` apart along the curve."""
    xy = np.asarray(xy, dtype=float)
    edge = 2 if len(xy) > 2 else 1
    gx = np.gradient(xy[:, 0], ds, edge_order=edge)
    gy = np.gradient(xy[:, 1], ds, edge_order=edge)
    heading = np.unwrap(np.arctan2(gy, gx))
    kappa = np.gradient(heading, ds, edge_order=edge)
    return FrenetFrame(np.arange(len(xy)) * ds, xy, heading, kappa, origin_s, ds)


def _closest_on_span(frame: FrenetFrame, i: int, p: np.ndarray):
    p0, p1 = frame.xy[i], frame.xy[i + 1]
    t0 = np.array([math.cos(frame.heading[i]), math.sin(frame.heading[i])]) * frame.ds
    t1 = np.array([math.cos(frame.heading[i + 1]), math.sin(frame.heading[i + 1])]) * frame.ds
    # Hermite in power basis: c0 + c1 u + c2 u^2 + c3 u^3
    c0, c1 = p0, t0
    c2 = -3 * p0 - 2 * t0 + 3 * p1 - t1
    c3 = 2 * p0 + t0 - 2 * p1 + t1
    # start from the chord projection
    chord = p1 - p0
    u = float(np.clip((p - p0) @ chord / (chord @ chord), 0.0, 1.0))
    for _ in range(10):
        h = c0 + u * (c1 + u * (c2 + u * c3))
        dh = c1 + u * (2 * c2 + 3 * u * c3)
        ddh = 2 * c2 + 6 * u * c3
        g = (h - p) @ dh
        gp = dh @ dh + (h - p) @ ddh
        if gp <= 0:
            break
        step = g / gp
        u_new = min(1.0, max(0.0, u - step))
        if abs(u_new - u) < 1e-13:
            u = u_new
            break
        u = u_new
    h = c0 + u * (c1 + u * (c2 + u * c3))
    dh = c1 + u * (2 * c2 + 3 * u * c3)
    return u, h, dh


def project(frame: FrenetFrame, p) -> tuple[float, float]:
    """Frenet coordinates ``(s, d)`` of a Cartesian point; ``d`` positive to the left."""
    p = np.asarray(p, dtype=float)
    i = int(np.argmin(np.sum((frame.xy - p) ** 2, axis=1)))
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(frame.s) - 1:
            u, h, dh = _closest_on_span(frame, j, p)
            dist = float(np.hypot(*(p - h)))
            if best is None or dist < best[0]:
                best = (dist, j, u, h, dh)
    _, j, u, h, dh = best
    s = frame.s[j] + u * frame.ds
    t = dh / np.hypot(*dh)
    rel = p - h
    d = float(t[0] * rel[1] - t[1] * rel[0])
    if abs(d) > LATERAL_BOUND:
        raise OutOfCorridor(f"point is {d:.2f} m from the frame centreline")
    return float(s), d


@dataclass(frozen=True)
class ClearanceProfile:
    d: float
    s_m: float
    c_avg: float
    c_min: float
    clearances: np.ndarray


def ego_boxes(frame: FrenetFrame, d, s=None, dims=(EGO_LENGTH, EGO_WIDTH)) -> np.ndarray:
    s = frame.s if s is None else np.asarray(s, dtype=float)
    d = np.broadcast_to(np.asarray(d, dtype=float), s.shape)
    centers = frame.point_at(s, d)
    return box_polygons(centers, frame.heading_at(s), dims[0], dims[1])


def _disc_bounds(polys: np.ndarray):
    """Centre, circumradius and inradius about the vertex mean, per polygon."""
    c = polys.mean(axis=1)
    r_out = np.max(np.linalg.norm(polys - c[:, None, :], axis=-1), axis=1)
    edges = np.roll(polys, -1, axis=1) - polys
    rel = c[:, None, :] - polys
    cross = np.abs(edges[..., 0] * rel[..., 1] - edges[..., 1] * rel[..., 0])
    r_in = np.min(cross / np.maximum(np.linalg.norm(edges, axis=-1), 1e-12), axis=1)
    return c, r_out, r_in


def min_distance(boxes: np.ndarray, obstacles: list, reach: float = np.inf) -> np.ndarray:
    """Distance from each box in ``boxes (n, k, 2)`` to the nearest obstacle polygon.

    Box/obstacle pairs whose bounding circles are farther apart than ``reach``
    are skipped, so a box with nothing within ``reach`` reports ``inf``. Pairs
    that cannot beat the inscribed-disc bound of a closer obstacle are skipped
    as well; this never changes the result.
    """
    out = np.full(boxes.shape[0], np.inf)
    if not obstacles:
        return out
    box_c, box_r, box_in = _disc_bounds(boxes)
    groups: dict[int, list] = {}
    for poly in obstacles:
        poly = np.asarray(poly, dtype=float)
        groups.setdefault(len(poly), []).append(poly)
    pairs = []
    ub = np.full(boxes.shape[0], np.inf)
    for polys in groups.values():
        arr = np.stack(polys)
        c, r, r_in = _disc_bounds(arr)
        dist = np.linalg.norm(box_c[:, None, :] - c[None, :, :], axis=-1)
        ub = np.minimum(ub, np.maximum(dist - box_in[:, None] - r_in[None, :], 0.0).min(axis=1))
        pairs.append((arr, dist - box_r[:, None] - r[None, :]))
    limit = np.minimum(ub, reach)[:, None]
    box_f = rect_frames(boxes)
    for arr, gap in pairs:
        i, j = np.nonzero(gap <= limit + 1e-9)
        if not i.size:
            continue
        arr_f = rect_frames(arr)
        rect = box_f[4][i] & arr_f[4][j]
        d = np.empty(i.size)
        if rect.any():
            ir, jr = i[rect], j[rect]
            d[rect] = rect_distance(boxes[ir], arr[jr], [f[ir] for f in box_f], [f[jr] for f in arr_f])
        if not rect.all():
            d[~rect] = convex_distance(boxes[i[~rect]], arr[j[~rect]])
        np.minimum.at(out, i, d)
    return out


def clearance_profile(
    frame: FrenetFrame,
    d: float,
    obstacles: list,
    w_o: float,
    ego_dims=(EGO_LENGTH, EGO_WIDTH),
    c_cap: float = CLEARANCE_CAP,
) -> ClearanceProfile:
    """Clearance of the ego footprint swept along offset ``d``.

    Obstacles are inflated by ``w_o`` (Minkowski sum with a disc), so the
    clearance is the raw separation minus ``w_o``, clamped to ``[0, c_cap]``.
    """
    return clearance_profiles(frame, [d], obstacles, w_o, ego_dims, c_cap)[0]


def clearance_profiles(
    frame: FrenetFrame,
    offsets,
    obstacles: list,
    w_o: float,
    ego_dims=(EGO_LENGTH, EGO_WIDTH),
    c_cap: float = CLEARANCE_CAP,
) -> list:
    """:func:`clearance_profile` for several offsets with one distance query."""
    if w_o < 0:
        raise ValueError("w_o must be non-negative")
    offsets = [float(d) for d in offsets]
    n = len(frame.s)
    s_all = np.tile(frame.s, len(offsets))
    d_all = np.repeat(offsets, n)
    boxes = ego_boxes(frame, d_all, s_all, dims=ego_dims)
    raw = min_distance(boxes, obstacles, reach=c_cap + w_o).reshape(len(offsets), n)
    return [_profile(frame, d, row, w_o, c_cap) for d, row in zip(offsets, raw)]


def _profile(frame: FrenetFrame, d: float, raw: np.ndarray, w_o: float, c_cap: float) -> ClearanceProfile:
    clear = np.clip(raw - w_o, 0.0, c_cap)
    hit = np.flatnonzero(clear <= 0.0)
    s_m = float(frame.s[hit[0]]) if hit.size else frame.s_max
    before = clear[frame.s < s_m] if hit.size else clear
    if s_m <= 0.0 or before.size == 0:
        return ClearanceProfile(d, 0.0 if hit.size else s_m, 0.0, 0.0, clear)
    return ClearanceProfile(d, s_m, float(before.mean()), float(before.min()), clear)
