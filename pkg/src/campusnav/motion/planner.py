"""Trajectory planning: path, speed limits, s-t search, QP refinement and the
kinodynamic feasibility loop tying them together."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..frenet import FrenetFrame, ego_boxes, min_distance
from ..geometry import EGO_LENGTH, EGO_WIDTH
from .limits import SpeedLimitConfig, clearance_speed_limit, curvature_speed_limit
from .path import PathParams, PathResult, generate_path
from .speed import (
    A_MAX,
    CoarseProfile,
    Infeasible,
    RefineConfig,
    SearchConfig,
    SpeedProfile,
    full_stop_profile,
    profile_from_coarse,
    refine_speed_qp,
    search_speed_profile,
)
from .stgraph import STGraph, build_st_graph

WHEELBASE = 2.5
MAX_STEER = 0.6
KAPPA_MAX = math.tan(MAX_STEER) / WHEELBASE
# half diagonal of the ego box, bounds corner motion per radian of heading change
_EGO_HALF_DIAG = 0.5 * math.hypot(EGO_LENGTH, EGO_WIDTH)


@dataclass(frozen=True)
class PlannerConfig:
    limits: SpeedLimitConfig = SpeedLimitConfig()
    search: SearchConfig = SearchConfig()
    refine: RefineConfig = RefineConfig()
    path: PathParams = PathParams()
    horizon: float = 8.0
    ds_g: float = 0.5
    dt_g: float = 0.5
    out_dt: float = 0.1
    max_iter: int = 5
    a_max: float = A_MAX
    inflate: float = 0.3
    brake_decel: float = 1.0
    # the search sees limits reachable with this deceleration so the
    # refinement, bounded by a_max and the jerk limit, can follow it
    search_decel: float = 0.8
    stop_slack: int = 2
    stop_tol: float = 0.05

    def __post_init__(self):
        if self.max_iter < 1 or self.horizon <= 0:
            raise ValueError("need max_iter >= 1 and horizon > 0")


@dataclass
class Trajectory:
    t: np.ndarray
    xy: np.ndarray
    heading: np.ndarray
    v: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    s: np.ndarray
    path: FrenetFrame | None = None
    emergency: bool = False
    relaxed: bool = False
    qp_fallback: bool = False
    iterations: int = 0
    # per path-node limits the speed was planned against
    node_s: np.ndarray | None = None
    hard_limit: np.ndarray | None = None
    route_cap: np.ndarray | None = None
    governor_cap: float = math.inf
    vru_polygons: list = field(default_factory=list)
    profile: SpeedProfile | None = None
    coarse: CoarseProfile | None = None

    def __len__(self) -> int:
        return len(self.t)

    def state_at(self, t: float):
        """Interpolated ``(x, y, heading, v, a, kappa)``; holds the last sample past the end."""
        t = float(np.clip(t, self.t[0], self.t[-1]))
        x = np.interp(t, self.t, self.xy[:, 0])
        y = np.interp(t, self.t, self.xy[:, 1])
        h = np.interp(t, self.t, np.unwrap(self.heading))
        return x, y, h, np.interp(t, self.t, self.v), np.interp(t, self.t, self.a), np.interp(t, self.t, self.kappa)

    @property
    def feasible(self) -> bool:
        return not self.emergency


@dataclass(frozen=True)
class PlanRequest:
    """Everything the planner needs besides configuration.

    ``route_caps`` are hard speed caps at the reference frame nodes; ``governor_cap``
    is the localization speed cap, which may be exceeded by a comfortable
    braking allowance when the vehicle is already faster.
    """

    frame: FrenetFrame
    d_t: float
    v0: float
    a0: float = 0.0
    d_start: float | None = None
    heading_error: float = 0.0
    stop_s: float | None = None
    route_caps: np.ndarray | None = None
    governor_cap: float = math.inf
    static_obstacles: list = field(default_factory=list)
    w_o: float = 0.2
    predictions: list = field(default_factory=list)
    vru_polygons: list = field(default_factory=list)


def node_limits(path: FrenetFrame, route_caps, vru_polygons, cfg: PlannerConfig):
    """Hard per-cell and per-node speed limits along ``path``.

    A cell takes the smaller of its end-node limits. The clearance entering the
    clearance limit is lowered by the most the ego box can move inside the cell,
    so the bound holds at every intermediate pose too.
    """
    lim = cfg.limits
    kap = curvature_speed_limit(path.kappa, lim.a_lat)
    kap = np.atleast_1d(kap)
    caps = np.minimum(np.asarray(route_caps, dtype=float), lim.v_max)
    k_cell = np.minimum(kap[:-1], kap[1:])
    r_cell = np.minimum(caps[:-1], caps[1:])
    if vru_polygons:
        boxes = ego_boxes(path, 0.0, path.s)
        c = min_distance(boxes, vru_polygons, reach=lim.delta_max + path.ds + 1.0)
        c = np.minimum(c, 1e3)
        dtheta = np.abs(np.diff(path.heading))
        c_cell = np.maximum(np.minimum(c[:-1], c[1:]) - (path.ds / 2 + _EGO_HALF_DIAG * dtheta), 0.0)
        v_cell = clearance_speed_limit(c_cell, lim)
    else:
        v_cell = np.full(len(path.s) - 1, lim.v_max)
    cell = np.minimum(np.minimum(k_cell, r_cell), v_cell)
    node = np.minimum(np.concatenate([[cell[0]], cell]), np.concatenate([cell, [cell[-1]]]))
    return cell, node


def erode(limits, radius: int) -> np.ndarray:
    """Sliding minimum over ``2 * radius + 1`` neighbouring entries."""
    limits = np.asarray(limits, dtype=float)
    if radius <= 0:
        return limits.copy()
    padded = np.pad(limits, radius, mode="edge")
    return np.lib.stride_tricks.sliding_window_view(padded, 2 * radius + 1).min(axis=1)


def decel_feasible(limits, ds: float, decel: float) -> np.ndarray:
    """Largest limits not above ``limits`` that braking at ``decel`` can meet."""
    out = np.asarray(limits, dtype=float).copy()
    step = 2.0 * decel * ds
    for i in range(len(out) - 2, -1, -1):
        if np.isfinite(out[i + 1]):
            out[i] = min(out[i], math.sqrt(out[i + 1] ** 2 + step))
    return out


def _braking_envelope(s, v0, decel, lag):
    return np.sqrt(np.maximum(v0 * v0 - 2.0 * decel * np.maximum(s - lag, 0.0), 0.0))


def _sample(path: FrenetFrame, prof: SpeedProfile, s_limit: float, dt: float, T: float, **flags) -> Trajectory:
    t = np.arange(int(round(T / dt)) + 1) * dt
    s = np.minimum(prof.s_at(t), s_limit)
    v = np.maximum(prof.v_at(t), 0.0)
    a = prof.a_at(t)
    xy = path.point_at(s)
    heading = path.heading_at(s)
    kappa = path.kappa_at(s)
    return Trajectory(t, xy, heading, v, a, kappa, s, path=path, profile=prof, **flags)


def full_stop_trajectory(path: FrenetFrame, v0: float, cfg: PlannerConfig = PlannerConfig()) -> Trajectory:
    coarse = full_stop_profile(v0, cfg.horizon, cfg.dt_g, cfg.brake_decel)
    prof = profile_from_coarse(coarse)
    traj = _sample(path, prof, path.s_max, cfg.out_dt, cfg.horizon, emergency=True)
    traj.coarse = coarse
    return traj


def check_feasible(traj: Trajectory, cfg: PlannerConfig) -> bool:
    lat = traj.v**2 * np.abs(traj.kappa)
    return bool(np.all(lat <= cfg.limits.a_lat + 1e-3) and np.all(np.abs(traj.a) <= cfg.a_max + 1e-9))


def plan_trajectory(req: PlanRequest, cfg: PlannerConfig = PlannerConfig(), budget_ms: float = math.inf) -> Trajectory:
    """Plan a time-parametrised trajectory along the reference.

    Up to ``cfg.max_iter`` rounds of path generation and speed planning run;
    after each, the trajectory is checked for lateral acceleration and
    acceleration bounds, and on violation the path curvature is capped at
    ``a_lat / v^2`` and the round repeats. Returns the first trajectory that
    passes, else a flagged full stop.
    """
    if budget_ms <= 0:
        raise ValueError("budget_ms must be positive")
    t_start = time.perf_counter()
    frame = req.frame
    route_caps = np.full(len(frame.s), cfg.limits.v_max) if req.route_caps is None else np.asarray(req.route_caps, dtype=float)
    caps_s = frame.s
    caps_k = np.full(len(frame.s), KAPPA_MAX)
    traj = None
    for it in range(1, cfg.max_iter + 1):
        res = generate_path(
            frame,
            req.d_t,
            req.static_obstacles,
            req.w_o,
            d_start=req.d_start,
            heading_error=req.heading_error,
            curvature_caps=(caps_s, caps_k),
            params=cfg.path,
            out_ds=cfg.ds_g,
        )
        traj = _plan_speed(req, res, route_caps, cfg)
        traj.iterations = it
        if traj.emergency:
            break
        if check_feasible(traj, cfg):
            return traj
        # tighten curvature where the planned speed is too high
        ref_of_path = np.interp(traj.s, res.ref_s[1], res.ref_s[0])
        v2 = np.maximum(traj.v**2, 1e-6)
        new_cap = np.interp(caps_s, ref_of_path, cfg.limits.a_lat / v2, left=np.inf, right=np.inf)
        tightened = np.minimum(caps_k, np.maximum(new_cap, 1e-3))
        if np.array_equal(tightened, caps_k):
            # only the acceleration bound failed; another round changes nothing
            break
        caps_k = tightened
        if (time.perf_counter() - t_start) * 1e3 > budget_ms:
            break
    path = traj.path if traj is not None and traj.path is not None else frame
    stop = full_stop_trajectory(path, req.v0, cfg)
    stop.iterations = traj.iterations if traj is not None else 0
    return stop


def _plan_speed(req: PlanRequest, res: PathResult, route_caps, cfg: PlannerConfig) -> Trajectory:
    path = res.path
    if len(path.s) < 3:
        return full_stop_trajectory(path, req.v0, cfg)
    ref_of_path = np.interp(path.s, res.ref_s[1], res.ref_s[0])
    caps = np.interp(ref_of_path, req.frame.s, route_caps)
    hard_cell, hard_node = node_limits(path, caps, req.vru_polygons, cfg)
    lag = cfg.refine.window + 0.8 * req.v0 + cfg.ds_g
    env_node = _braking_envelope(path.s, req.v0, cfg.brake_decel, lag)
    env_cell = np.minimum(env_node[:-1], env_node[1:])
    gov = req.governor_cap
    soft_cell = np.maximum(np.minimum(hard_cell, gov), np.minimum(env_cell, hard_cell))
    soft_node = np.maximum(np.minimum(hard_node, gov), np.minimum(env_node, hard_node))
    # the governor cap is always softened by the braking envelope; the hard
    # limits only when the vehicle already exceeds what the refinement allows
    # at the start
    relaxed = False
    if req.v0 > soft_node[path.s <= cfg.refine.window + 1e-9].min() + 1e-9:
        soft_cell = np.maximum(soft_cell, env_cell)
        soft_node = np.maximum(soft_node, env_node)
        relaxed = True
    s_stop = None
    if req.stop_s is not None:
        s_stop = float(np.interp(req.stop_s, res.ref_s[0], res.ref_s[1]))
        # the lattice cannot rest closer than its snap stop; accept a small overrun
        snap = req.v0 * cfg.dt_g / 2.0
        if s_stop < snap <= s_stop + cfg.stop_tol:
            s_stop = snap
    graph = build_st_graph(
        path,
        req.predictions,
        cfg.horizon,
        cfg.ds_g,
        cfg.dt_g,
        inflate=cfg.inflate,
        static_polygons=req.static_obstacles,
    )
    # the search sees the limits the refinement will apply around its positions
    # node limits span both neighbouring cells, hence the extra cell
    radius = int(np.ceil(cfg.refine.window / cfg.ds_g - 1e-9)) + 1

    def search_limits(cell):
        lim = decel_feasible(cell[: graph.n_cells], cfg.ds_g, cfg.search_decel)
        if relaxed:
            lim = np.maximum(lim, env_cell[: graph.n_cells])
        return erode(lim, radius)

    search_cell = search_limits(soft_cell)
    try:
        try:
            coarse = search_speed_profile(graph, search_cell, req.v0, s_stop=s_stop, cfg=cfg.search)
        except Infeasible:
            if relaxed:
                raise
            # grid shifts between replans can leave the start just over the
            # eroded limits; retry with the braking envelope
            soft_cell = np.maximum(soft_cell, env_cell)
            soft_node = np.maximum(soft_node, env_node)
            relaxed = True
            search_cell = search_limits(soft_cell)
            coarse = search_speed_profile(graph, search_cell, req.v0, s_stop=s_stop, cfg=cfg.search)
    except Infeasible:
        traj = full_stop_trajectory(path, req.v0, cfg)
        traj.node_s, traj.hard_limit, traj.governor_cap = path.s, hard_node, gov
        traj.route_cap = np.minimum(caps, cfg.limits.v_max)
        traj.vru_polygons = list(req.vru_polygons)
        return traj
    stop_at = stop_knot = None
    if coarse.v[-1] == 0.0:
        end = coarse.s[-1]
        stop_at = s_stop if s_stop is not None and s_stop - end <= cfg.refine.window else end
        # rest a little after the coarse profile does, rather than creeping to T
        moving = np.flatnonzero(coarse.v > 0.0)
        stop_knot = (int(moving[-1]) + 1 if moving.size else 0) + cfg.stop_slack
    node_lim = soft_node[: len(graph.s_nodes)]
    attempts = [(stop_at, None)]
    if stop_knot is not None:
        last = len(coarse.t) - 1
        # rest at the given point, early then at the horizon, then wherever
        # the jerk bound allows when crawling up to the point
        attempts = [(stop_at, stop_knot)] if stop_knot < last else []
        attempts += [(stop_at, None), (None, min(stop_knot, last))]
    for at, knot in attempts:
        prof = refine_speed_qp(coarse, node_lim, graph, a0=req.a0, stop_at=at, stop_knot=knot, cfg=cfg.refine)
        if not prof.fallback:
            break
    traj = _sample(path, prof, graph.s_end, cfg.out_dt, cfg.horizon, relaxed=relaxed, qp_fallback=prof.fallback)
    traj.coarse = coarse
    traj.node_s, traj.hard_limit, traj.governor_cap = path.s, hard_node, gov
    traj.route_cap = np.minimum(caps, cfg.limits.v_max)
    traj.vru_polygons = list(req.vru_polygons)
    return traj
