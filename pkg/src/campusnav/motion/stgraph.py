"""Occupancy grid over travelled distance and time along a planned path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..frenet import FrenetFrame, ego_boxes
from ..geometry import EGO_LENGTH, EGO_WIDTH, box_polygons, convex_intersect


@dataclass(frozen=True)
class STGraph:
    """Cell ``j`` spans ``[s_nodes[j], s_nodes[j+1]]``; layer ``k`` sits at ``t[k]``."""

    s_nodes: np.ndarray
    t: np.ndarray
    occupied: np.ndarray  # (layers, cells) bool

    @property
    def ds(self) -> float:
        return float(self.s_nodes[1] - self.s_nodes[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def s_end(self) -> float:
        return float(self.s_nodes[-1])

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    @property
    def n_cells(self) -> int:
        return len(self.s_nodes) - 1

    def cell_of(self, s):
        idx = np.floor(np.asarray(s, dtype=float) / self.ds + 1e-9).astype(int)
        return np.clip(idx, 0, self.n_cells - 1)


def empty_graph(s_end: float, T: float = 8.0, ds_g: float = 0.5, dt_g: float = 0.5) -> STGraph:
    n = int(np.floor(s_end / ds_g + 1e-9))
    if n < 1:
        raise ValueError("s_end must cover at least one cell")
    k = int(round(T / dt_g))
    return STGraph(np.arange(n + 1) * ds_g, np.arange(k + 1) * dt_g, np.zeros((k + 1, n), dtype=bool))


def _node_hits(boxes, centers, radius, polys, poly_c, poly_r):
    """``(layers, nodes)`` hits of ego node boxes against one agent box per layer."""
    out = np.zeros((len(polys), len(boxes)), dtype=bool)
    gap = np.linalg.norm(poly_c[:, None, :] - centers[None, :, :], axis=-1) - radius[None, :] - poly_r
    cand = np.argwhere(gap <= 1e-9)
    if cand.size:
        k, j = cand[:, 0], cand[:, 1]
        out[k, j] = convex_intersect(polys[k], boxes[j])
    return out


def build_st_graph(
    path: FrenetFrame,
    predictions: list,
    T: float = 8.0,
    ds_g: float = 0.5,
    dt_g: float = 0.5,
    *,
    s_end: float | None = None,
    inflate: float = 0.0,
    static_polygons: list | None = None,
    ego_dims=(EGO_LENGTH, EGO_WIDTH),
) -> STGraph:
    """Mark a cell occupied at layer ``k`` when the ego box placed at either of
    its end nodes overlaps a predicted agent box (inflated) at ``t_k``.

    Predictions are interpolated at layer times and absent past their horizon.
    ``static_polygons`` block their cells at every layer.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    end = path.s_max if s_end is None else min(s_end, path.s_max)
    graph = empty_graph(end, T, ds_g, dt_g)
    nodes, times = graph.s_nodes, graph.t
    boxes = ego_boxes(path, 0.0, nodes, ego_dims)
    centers = boxes.mean(axis=1)
    radius = np.max(np.linalg.norm(boxes - centers[:, None, :], axis=-1), axis=1)
    node_hit = np.zeros((len(times), len(nodes)), dtype=bool)
    for pred in predictions:
        present = times <= pred.times[-1] + 1e-9
        if not present.any():
            continue
        tk = times[present]
        pos = np.stack([np.interp(tk, pred.times, pred.positions[:, i]) for i in range(2)], axis=1)
        polys = box_polygons(pos, np.full(len(tk), pred.heading), pred.length + 2 * inflate, pred.width + 2 * inflate)
        r = 0.5 * np.hypot(pred.length, pred.width) + inflate * np.sqrt(2)
        node_hit[present] |= _node_hits(boxes, centers, radius, polys, pos, r)
    for poly in static_polygons or []:
        poly = np.asarray(poly, dtype=float)
        c = poly.mean(axis=0)
        r = np.max(np.linalg.norm(poly - c, axis=1))
        hit = _node_hits(boxes, centers, radius, poly[None], c[None], r)[0]
        node_hit |= hit[None, :]
    occupied = node_hit[:, :-1] | node_hit[:, 1:]
    return STGraph(nodes, times, occupied)
