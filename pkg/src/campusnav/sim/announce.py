"""Sound/LED intent announcements with per-type debouncing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class Announcement(str, Enum):
    DEPARTING = "Departing"
    YIELDING = "Yielding"
    PEDESTRIAN_WARNING = "PedestrianWarning"
    ARRIVING = "Arriving"


@dataclass(frozen=True)
class TickContext:
    t: float
    v: float
    departed: bool = False  # left Dwelling this tick
    yielding: bool = False  # gate holds at the stop line
    pedestrian_clearance: float = math.inf
    station_distance: float = math.inf  # along-route distance to the current station


@dataclass
class Announcer:
    debounce: float = 3.0
    warn_clearance: float = 1.0
    warn_speed: float = 0.5
    arriving_radius: float = 5.0
    last: dict = field(default_factory=dict)
    _inside: bool = False

    def update(self, ctx: TickContext) -> list:
        """Announcements for this tick. Arriving fires on entering the radius."""
        wanted = []
        if ctx.departed:
            wanted.append(Announcement.DEPARTING)
        if ctx.yielding:
            wanted.append(Announcement.YIELDING)
        if ctx.pedestrian_clearance < self.warn_clearance and ctx.v > self.warn_speed:
            wanted.append(Announcement.PEDESTRIAN_WARNING)
        inside = ctx.station_distance <= self.arriving_radius
        if inside and not self._inside:
            wanted.append(Announcement.ARRIVING)
        self._inside = inside
        out = []
        for kind in wanted:
            prev = self.last.get(kind)
            if prev is None or ctx.t - prev >= self.debounce - 1e-9:
                self.last[kind] = ctx.t
                out.append(kind)
        return out


def announce(ctx: TickContext, state: Announcer | None = None) -> list:
    """Stateless convenience wrapper (no debounce history unless ``state`` given)."""
    return (state or Announcer()).update(ctx)
