"""Swept-corridor conflict checks against predicted agent footprints."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .frenet import FrenetFrame
from .geometry import EGO_WIDTH, convex_intersect
from .world import PredictedTrajectory


@dataclass(frozen=True)
class Conflict:
    t: float
    step: int
    s_lo: float
    s_hi: float

    @property
    def s(self) -> float:
        return self.s_lo


@dataclass(frozen=True)
class Corridor:
    """Band of half-width ``half_width`` around offset ``d`` between ``s_range``."""

    frame: FrenetFrame
    d: float
    half_width: float = EGO_WIDTH / 2
    s_range: tuple | None = None
    horizon: float = np.inf

    def __post_init__(self):
        lo, hi = self.span
        if lo < -1e-9 or hi > self.frame.s_max + 1e-9 or hi < lo:
            raise ValueError(f"s range {self.span} outside [0, {self.frame.s_max}]")

    @property
    def span(self) -> tuple:
        return self.s_range if self.s_range is not None else (0.0, self.frame.s_max)

    @cached_property
    def stations(self) -> np.ndarray:
        lo, hi = self.span
        inner = self.frame.s[(self.frame.s > lo) & (self.frame.s < hi)]
        return np.concatenate([[lo], inner, [hi]]) if hi > lo else np.array([lo, lo + 1e-6])

    @cached_property
    def quads(self) -> np.ndarray:
        s = self.stations
        left = self.frame.point_at(s, np.full(s.shape, self.d + self.half_width))
        right = self.frame.point_at(s, np.full(s.shape, self.d - self.half_width))
        return np.stack([right[:-1], right[1:], left[1:], left[:-1]], axis=1)

    def hits(self, polygons: np.ndarray) -> np.ndarray:
        """``(n_polygons, n_quads)`` intersection matrix."""
        return convex_intersect(polygons[:, None, :, :], self.quads[None, :, :, :])


def conflict(corridor: Corridor, pred: PredictedTrajectory, inflate: float = 0.0) -> Conflict | None:
    """Earliest forecast step whose agent box overlaps the corridor band."""
    if len(pred.positions) == 0:
        raise ValueError("empty prediction")
    times = pred.times
    keep = times <= corridor.horizon + 1e-9
    polys = pred.polygons(inflate)[keep]
    # cheap reject: bounding circles
    band_c = corridor.quads.reshape(-1, 2)
    lo, hi = band_c.min(axis=0), band_c.max(axis=0)
    r = np.hypot(pred.length + 2 * inflate, pred.width + 2 * inflate) / 2
    pos = pred.positions[keep]
    near = np.all((pos >= lo - r) & (pos <= hi + r), axis=1)
    if not near.any():
        return None
    idx = np.flatnonzero(near)
    hit = corridor.hits(polys[idx])
    rows = np.flatnonzero(hit.any(axis=1))
    if rows.size == 0:
        return None
    k = int(idx[rows[0]])
    cols = np.flatnonzero(hit[rows[0]])
    st = corridor.stations
    return Conflict(t=float(times[k]), step=k, s_lo=float(st[cols[0]]), s_hi=float(st[cols[-1] + 1]))
