"""Simulated perception: ground-truth agents, detection noise, constant-velocity
forecasts and the scripted localization-error signal."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import box_polygon, box_polygons

AGENT_KINDS = ("Pedestrian", "Cyclist", "Vehicle")
MAX_AGENT_SPEED = 15.0


@dataclass(frozen=True)
class AgentState:
    id: int
    kind: str
    x: float
    y: float
    heading: float
    length: float
    width: float
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"agent {self.id}: unknown class {self.kind!r}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"agent {self.id}: footprint dimensions must be positive")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def polygon(self) -> np.ndarray:
        return box_polygon(self.x, self.y, self.heading, self.length, self.width)


@dataclass(frozen=True)
class PredictedTrajectory:
    agent_id: int
    dt: float
    horizon: float
    positions: np.ndarray
    heading: float
    length: float
    width: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.positions)) * self.dt

    def polygons(self, inflate: float = 0.0) -> np.ndarray:
        n = len(self.positions)
        return box_polygons(self.positions, np.full(n, self.heading), self.length + 2 * inflate, self.width + 2 * inflate)

    def position_at(self, t: float) -> np.ndarray | None:
        """Interpolated position, or None past the forecast horizon."""
        if t > self.times[-1] + 1e-9:
            return None
        return np.array([np.interp(t, self.times, self.positions[:, i]) for i in range(2)])


@dataclass(frozen=True)
class DetectionNoise:
    position_sigma: float = 0.0
    velocity_sigma: float = 0.0
    dropout: float = 0.0
    boundary_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.position_sigma < 0 or self.velocity_sigma < 0 or self.boundary_jitter < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")


@dataclass(frozen=True)
class LocalizationHealth:
    profile: tuple = ((0.0, 0.0),)

    def __post_init__(self):
        times = [t for t, _ in self.profile]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("localization profile times must be strictly increasing")
        if any(e < 0 for _, e in self.profile):
            raise ValueError("localization error must be non-negative")


def sense(truth: list, noise: DetectionNoise, rng: np.random.Generator) -> list:
    """Noisy detections of the ground-truth agents.

    Every agent consumes the same number of draws whether or not it survives,
    so the stream position never depends on dropout outcomes.
    """
    out = []
    for agent in truth:
        keep = rng.random() >= noise.dropout
        dp = rng.normal(0.0, 1.0, 2) * noise.position_sigma
        dv = rng.normal(0.0, 1.0, 2) * noise.velocity_sigma
        if not keep:
            continue
        if noise.position_sigma == 0.0 and noise.velocity_sigma == 0.0:
            out.append(agent)
            continue
        v = agent.velocity + dv
        speed = float(np.hypot(*v))
        if speed > MAX_AGENT_SPEED:
            v *= MAX_AGENT_SPEED / speed
        out.append(replace(agent, x=agent.x + dp[0], y=agent.y + dp[1], vx=float(v[0]), vy=float(v[1])))
    return out


def predict_cv(agent: AgentState, horizon: float = 4.0, dt: float = 0.2) -> PredictedTrajectory:
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    n = int(math.floor(horizon / dt + 1e-9)) + 1
    k = np.arange(n, dtype=float)[:, None]
    positions = agent.position[None, :] + agent.velocity[None, :] * (k * dt)
    return PredictedTrajectory(agent.id, dt, horizon, positions, agent.heading, agent.length, agent.width)


def localization_error_at(health: LocalizationHealth, t: float) -> float:
    times = [p[0] for p in health.profile]
    errs = [p[1] for p in health.profile]
    return float(np.interp(t, times, errs))


def jitter_polygons(polygons: list, amplitude: float, t: float, seed: int, period: float = 2.0) -> list:
    """Sway curb vertices periodically to mimic shade-induced boundary noise.

    Each vertex oscillates along a fixed random direction with a random phase
    derived from ``seed``; the pattern repeats every ``period`` seconds.
    """
    if amplitude <= 0.0:
        return polygons
    rng = np.random.default_rng(seed)
    out = []
    for poly in polygons:
        n = len(poly)
        phase = rng.uniform(0.0, 2 * np.pi, n)
        ang = rng.uniform(0.0, 2 * np.pi, n)
        mag = amplitude * np.sin(2 * np.pi * t / period + phase)
        shift = np.stack([np.cos(ang), np.sin(ang)], axis=1) * mag[:, None]
        out.append(poly + shift)
    return out


@dataclass
class ScriptedAgent:
    """Ground-truth motion: constant velocity or a (t, x, y) waypoint schedule."""

    id: int
    kind: str
    length: float
    width: float
    start: tuple = (0.0, 0.0)
    velocity: tuple = (0.0, 0.0)
    t_start: float = 0.0
    t_end: float = math.inf
    schedule: list = field(default_factory=list)
    heading: float | None = None

    def state_at(self, t: float) -> AgentState | None:
        if t < self.t_start - 1e-9 or t > self.t_end + 1e-9:
            return None
        if self.schedule:
            ts = [w[0] for w in self.schedule]
            xs = [w[1] for w in self.schedule]
            ys = [w[2] for w in self.schedule]
            x, y = float(np.interp(t, ts, xs)), float(np.interp(t, ts, ys))
            i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)) if len(ts) > 1 else 0
            if len(ts) > 1 and ts[0] <= t < ts[-1]:
                dt = ts[i + 1] - ts[i]
                vx, vy = (xs[i + 1] - xs[i]) / dt, (ys[i + 1] - ys[i]) / dt
            else:
                vx = vy = 0.0
            heading = self.heading
            if heading is None:
                seg = next(
                    ((xs[j + 1] - xs[j], ys[j + 1] - ys[j]) for j in range(i, len(ts) - 1) if (xs[j + 1], ys[j + 1]) != (xs[j], ys[j])),
                    (1.0, 0.0),
                )
                heading = math.atan2(seg[1], seg[0])
        else:
            dt = t - self.t_start
            x = self.start[0] + self.velocity[0] * dt
            y = self.start[1] + self.velocity[1] * dt
            vx, vy = self.velocity
            heading = self.heading if self.heading is not None else (math.atan2(vy, vx) if (vx or vy) else 0.0)
        return AgentState(self.id, self.kind, x, y, heading, self.length, self.width, float(vx), float(vy))
