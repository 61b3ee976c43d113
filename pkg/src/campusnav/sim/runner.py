"""Closed-loop scenario stepping: perception, behavior, motion planning and MPC
tracking on the bicycle model, with the navigation task manager on top."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from ..behavior import AllBlocked, BehaviorPlanner, EvalContext, Gate, governor, intersection_gate, scenario_preset
from ..control import ControlCommand, VehicleState, bicycle_step, mpc_track
from ..frenet import OutOfCorridor, WindowEmpty, build_frame, project
from ..geometry import EGO_LENGTH, EGO_WIDTH, box_polygon, convex_distance, convex_intersect, wrap_angle
from ..motion.planner import PlanRequest, Trajectory, full_stop_trajectory, plan_trajectory
from ..prediction_gate import Corridor
from ..roadmap import MAX_SPEED, Phase, TaskState, plan_global_route, resume_check, resume_route, truncate_route
from ..world import jitter_polygons, localization_error_at, predict_cv, sense
from .announce import Announcer, TickContext
from .scenario import Scenario

LOG_VERSION = 1


class Status:
    GOAL_REACHED = "GoalReached"
    TIMEOUT = "Timeout"
    SAFETY_STOP = "SafetyStop"


def _num(x):
    """JSON-safe float: non-finite values become null."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class SimLog:
    scenario: str
    seed: int
    dt: float
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    status: str = Status.TIMEOUT
    # (plan time, Trajectory) pairs; kept in memory only
    plans: list = field(default_factory=list, repr=False)

    def lines(self):
        for rec in self.records:
            yield json.dumps(rec, separators=(",", ":"), allow_nan=False)

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        h.update(json.dumps({"events": self.events, "status": self.status}, separators=(",", ":")).encode())
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "log_version": LOG_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "dt": self.dt,
            "ticks": len(self.records),
            "status": self.status,
            "digest": self.digest,
            "events": self.events,
        }

    def write_jsonl(self, path) -> None:
        Path(path).write_text("".join(line + "\n" for line in self.lines()))


def read_log(path) -> list:
    """Tick records of a log file; raises ValueError on malformed content."""
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {i}: {exc.msg}") from exc
        if not isinstance(rec, dict) or "t" not in rec or "v" not in rec:
            raise ValueError(f"line {i}: not a tick record")
        records.append(rec)
    if not records:
        raise ValueError("log has no tick records")
    return records


def swept_polygon(agent, horizon: float) -> np.ndarray:
    """Convex hull of the agent box now and after ``horizon`` seconds of constant velocity."""
    now = agent.polygon()
    if agent.speed == 0.0 or horizon <= 0.0:
        return now
    later = now + agent.velocity * horizon
    pts = np.vstack([now, later])
    return pts[ConvexHull(pts).vertices]


def hold_trajectory(x: float, y: float, heading: float, T: float = 8.0, dt: float = 0.1) -> Trajectory:
    t = np.arange(int(round(T / dt)) + 1) * dt
    n = len(t)
    z = np.zeros(n)
    return Trajectory(t, np.tile([x, y], (n, 1)), np.full(n, heading), z, z.copy(), z.copy(), z.copy())


class _Sim:
    def __init__(self, sc: Scenario, keep_plans: bool):
        self.sc = sc
        self.cfg = sc.config
        self.rmap = sc.roadmap
        self.keep_plans = keep_plans
        self.rng = np.random.default_rng(sc.seed)
        self.dt = self.cfg.control_dt
        edge = self.rmap.edges[sc.start[0]]
        seg = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(edge.polyline, axis=0), axis=1))])
        x = float(np.interp(sc.start[1], seg, edge.polyline[:, 0]))
        y = float(np.interp(sc.start[1], seg, edge.polyline[:, 1]))
        legs = [*sc.stops, sc.goal]
        self.route = plan_global_route(self.rmap, sc.start, legs[0])
        self.legs = legs[1:]
        frame = build_frame(self.route, 0.0, min(5.0, self.route.length))
        self.ego = VehicleState(x, y, float(frame.heading[0]), sc.start_speed)
        self.route_s = 0.0
        self.task = TaskState(dwell_duration=self.cfg.dwell_duration, pedestrian_clear_radius=self.cfg.pedestrian_clear_radius)
        self.behavior = BehaviorPlanner(self.cfg.behavior)
        self.announcer = Announcer(self.cfg.announce_debounce, self.cfg.planner.limits.delta_mdn, 0.5, self.cfg.arriving_radius)
        self.d_commit = 0.0
        self.traj: Trajectory | None = None
        self.t_plan = 0.0
        self.a_prev: float | None = None
        self.detections: list = []
        self.latch: set = set()
        self.dropoffs = list(sc.dropoff_requests)
        self.log = SimLog(sc.name, sc.seed, self.dt)
        self.t = 0.0
        self.tick = 0
        # per-plan state echoed into tick records
        self.plan_info = {"d_t": 0.0, "pi_s": False, "stop_s": None, "gate": Gate.PROCEED.value, "speed_cap": None}
        self.all_blocked = False

    # ------------------------------------------------------------------ world

    def truth(self, t: float) -> list:
        return [s for s in (a.state_at(t) for a in self.sc.agents) if s is not None]

    def ego_polygon(self, ego: VehicleState | None = None) -> np.ndarray:
        e = ego or self.ego
        return box_polygon(e.x, e.y, e.heading, EGO_LENGTH, EGO_WIDTH)

    def curbs(self, t: float) -> list:
        return jitter_polygons(self.rmap.curbs, self.sc.noise.boundary_jitter, t, self.sc.seed)

    def update_progress(self) -> None:
        lo = min(max(self.route_s - 3.0, 0.0), max(self.route.length - 1.0, 0.0))
        frame = build_frame(self.route, lo, 12.0, ds=0.25)
        s, _ = project(frame, (self.ego.x, self.ego.y))
        self.route_s = lo + s

    # ------------------------------------------------------------------ planning

    def gate(self, frame, detections, d: float):
        route, rmap = self.route, self.rmap
        found = None
        for i, eid in enumerate(route.edges):
            if route.tags[i] != "Intersection" or eid not in rmap.stop_lines:
                continue
            line = route.edge_starts[i] + rmap.stop_lines[eid] - self.route_s
            end = route.edge_starts[i] + rmap.edges[eid].length - self.route_s
            if end > 0.0 and line <= frame.s_max:
                found = (eid, float(line), float(end))
                break
        if found is None:
            self.latch.clear()
            return Gate.PROCEED, None
        eid, line, end = found
        if line < -0.5:
            # past the line: committed to crossing
            self.latch.clear()
            return Gate.PROCEED, None
        areas = rmap.observation_areas[eid]
        inside = set()
        for a in detections:
            poly = a.polygon()[None]
            if any(bool(convex_intersect(poly, np.asarray(ar)[None])[0]) for ar in areas):
                inside.add(a.id)
        self.latch &= inside
        lo = max(line, 0.0)
        hi = min(max(end, lo), frame.s_max)
        corridor = Corridor(frame, d, EGO_WIDTH / 2, s_range=(lo, hi), horizon=self.cfg.prediction_horizon)
        triggered = set()
        for a in detections:
            if a.id in inside:
                pred = predict_cv(a, self.cfg.prediction_horizon, self.cfg.prediction_dt)
                if intersection_gate(areas, line, [a], [pred], corridor, inflate=self.cfg.planner.inflate) == Gate.STOP_AT_LINE:
                    triggered.add(a.id)
        if triggered and not self.latch:
            # a line we cannot stop at comfortably is not enforced
            if self.ego.v**2 / (2.0 * self.cfg.comfort_decel) > line + 0.3:
                return Gate.PROCEED, None
        self.latch |= triggered
        if self.latch:
            return Gate.STOP_AT_LINE, lo
        return Gate.PROCEED, None

    def route_caps(self, frame) -> np.ndarray:
        s_abs = self.route_s + frame.s
        lim = self.route.speed_limit_at(s_abs).astype(float)
        idx = np.clip(np.searchsorted(self.route.edge_starts, s_abs, side="right") - 1, 0, len(self.route.edges) - 1)
        parking = np.array([self.route.tags[i] == "Parking" for i in idx])
        return np.where(parking, lim / 2.0, lim)

    def plan(self) -> None:
        cfg, t = self.cfg, self.t
        self.all_blocked = False
        self.detections = sense(self.truth(t), self.sc.noise, self.rng)
        if self.task.phase != Phase.DRIVING:
            return
        try:
            frame = build_frame(self.route, self.route_s, cfg.window)
        except WindowEmpty:
            self.set_traj(full_stop_trajectory(build_frame(self.route, max(self.route.length - 2.0, 0.0), 2.0), self.ego.v, cfg.planner))
            return
        moving = [a for a in self.detections if a.speed >= cfg.static_speed]
        static = [a for a in self.detections if a.speed < cfg.static_speed]
        obstacles = [a.polygon() for a in static] + self.curbs(t)
        preds = [predict_cv(a, cfg.prediction_horizon, cfg.prediction_dt) for a in moving]
        short = [predict_cv(a, cfg.behavior_horizon, cfg.prediction_dt) for a in moving]
        vru = [swept_polygon(a, cfg.vru_sweep) for a in self.detections if a.kind == "Pedestrian"]
        tag = self.route.tag_at(self.route_s)
        scn = scenario_preset(tag, float(self.route.speed_limit_at(self.route_s)))
        gate, line = (Gate.PROCEED, None)
        if scn.gate or any(tg == "Intersection" for tg in self.route.tags):
            gate, line = self.gate(frame, self.detections, self.d_commit)
        loc = localization_error_at(self.sc.localization, t)
        ctx = EvalContext(frame, cfg.behavior, scn, self.d_commit, obstacles, short)
        s_ego, d_ego = project(frame, (self.ego.x, self.ego.y))
        heading_err = float(wrap_angle(self.ego.heading - float(frame.heading_at(s_ego))))
        try:
            ref = self.behavior.select_reference(ctx, t, loc, gate, line)
        except AllBlocked:
            self.all_blocked = True
            self.log.events.append({"t": _num(t), "kind": "AllBlocked"})
            traj = full_stop_trajectory(frame, self.ego.v, cfg.planner)
            self.plan_info.update(gate=gate.value, pi_s=True, stop_s=0.0)
            self.set_traj(traj)
            return
        self.d_commit = ref.d_t
        stop_s = ref.stop_s
        goal_local = self.route.goal_s - self.route_s
        if goal_local <= frame.s_max + 1e-9:
            stop_s = goal_local if stop_s is None else min(stop_s, goal_local)
        if stop_s is not None:
            stop_s = max(stop_s, 0.0)
        v0, a0 = self.ego.v, self.a_prev or 0.0
        if self.traj is not None and not self.traj.emergency:
            _, _, _, vp, ap, _ = self.traj.state_at(t - self.t_plan)
            if abs(vp - self.ego.v) < cfg.replan_speed_tol:
                v0, a0 = float(vp), float(ap)
        gov = governor(loc, MAX_SPEED, cfg.gov_e_lo, cfg.gov_e_hi, cfg.gov_crawl)
        req = PlanRequest(
            frame=frame,
            d_t=ref.d_t,
            v0=v0,
            a0=a0,
            d_start=d_ego,
            heading_error=heading_err,
            stop_s=stop_s,
            route_caps=self.route_caps(frame),
            governor_cap=gov,
            static_obstacles=obstacles,
            w_o=scn.w_o,
            predictions=preds,
            vru_polygons=vru,
        )
        traj = plan_trajectory(req, cfg.planner)
        if traj.emergency:
            self.log.events.append({"t": _num(t), "kind": "EmergencyStop"})
        self.plan_info.update(d_t=ref.d_t, pi_s=bool(ref.truncated), stop_s=_num(stop_s), gate=gate.value, speed_cap=_num(min(ref.speed_cap, gov)))
        self.set_traj(traj)

    def set_traj(self, traj: Trajectory) -> None:
        self.traj = traj
        self.t_plan = self.t
        if self.keep_plans:
            self.log.plans.append((self.t, traj))

    # ------------------------------------------------------------------ task manager

    def current_edge_position(self) -> tuple:
        i = self.route.edge_index_at(self.route_s)
        eid = self.route.edges[i]
        s = float(np.clip(self.route_s - self.route.edge_starts[i], 0.0, self.rmap.edges[eid].length))
        return eid, s

    def task_step(self, events: list) -> tuple:
        """Advance the task state; returns ``(departed, finished)``."""
        cfg, task = self.cfg, self.task
        while self.dropoffs and self.dropoffs[0] <= self.t + 1e-9:
            self.dropoffs.pop(0)
            new = truncate_route(self.route, self.rmap, self.route_s, task=task, margin=cfg.dropoff_margin)
            if new is self.route:
                events.append({"kind": "DropoffIgnored"})
            else:
                self.route = new
                events.append({"kind": "DropoffAccepted", "station": new.destination, "goal_s": _num(new.goal_s)})
        if task.phase == Phase.DRIVING:
            if self.route_s >= self.route.goal_s - cfg.arrive_tol and self.ego.v < 0.05:
                events.append({"kind": "Arrived", "station": self.route.destination})
                if self.legs or self.route.resume is not None:
                    task.start_dwell()
                    events.append({"kind": "DwellStart"})
                    self.set_traj(hold_trajectory(self.ego.x, self.ego.y, self.ego.heading))
                    return False, False
                task.phase = Phase.IDLE
                return False, True
            return False, False
        if task.phase == Phase.DWELLING:
            pose = (self.ego.x, self.ego.y, self.ego.heading)
            if resume_check(task, self.detections, self.dt, pose):
                task.phase = Phase.DRIVING
                if self.route.resume is not None:
                    self.route = resume_route(self.route)
                else:
                    self.route = plan_global_route(self.rmap, self.current_edge_position(), self.legs.pop(0))
                    self.route_s = 0.0
                events.append({"kind": "Departed", "station": self.route.destination})
                self.traj = None
                return True, False
        return False, False

    # ------------------------------------------------------------------ loop

    def clearances(self, ego: VehicleState):
        poly = self.ego_polygon(ego)
        ped, other, hit = math.inf, math.inf, False
        for a in self.truth(self.t):
            dist = float(convex_distance(poly, a.polygon()))
            if bool(convex_intersect(poly, a.polygon())):
                hit, dist = True, 0.0
            if a.kind == "Pedestrian":
                ped = min(ped, dist)
            other = min(other, dist)
        return ped, other, hit

    def run(self) -> SimLog:
        cfg = self.cfg
        n_ticks = int(math.floor(self.sc.duration / self.dt + 1e-9))
        replan_now = True
        ped, agent_c, _ = self.clearances(self.ego)
        for k in range(n_ticks):
            self.tick = k
            self.t = k * self.dt
            events: list = []
            replanned = replan_now or k % cfg.plan_every == 0
            if replanned:
                self.plan()
            replan_now = False
            if self.traj is None:
                self.set_traj(hold_trajectory(self.ego.x, self.ego.y, self.ego.heading))
            cmd = mpc_track(self.ego, self.traj, cfg.mpc, self.t - self.t_plan, self.a_prev)
            cmd = self.brake_hold(cmd)
            if cmd.solver_failure:
                events.append({"kind": "SolverFailure"})
            rec = self.record(cmd, replanned, ped, agent_c)
            ego = self.ego
            for _ in range(cfg.substeps):
                ego = bicycle_step(ego, cmd, self.dt / cfg.substeps)
            self.ego = ego
            self.a_prev = cmd.a
            self.t = (k + 1) * self.dt
            ped, agent_c, hit = self.clearances(self.ego)
            status = None
            try:
                self.update_progress()
            except OutOfCorridor:
                events.append({"kind": "LeftCorridor"})
                status = Status.SAFETY_STOP
            if hit:
                events.append({"kind": "Collision"})
                status = Status.SAFETY_STOP
            departed = False
            if status is None:
                departed, finished = self.task_step(events)
                replan_now = departed
                if finished:
                    status = Status.GOAL_REACHED
            dest_dist = math.inf
            if self.task.phase == Phase.DRIVING and self.route.destination in self.rmap.stations:
                dest_dist = max(self.route.goal_s - self.route_s, 0.0)
            said = self.announcer.update(
                TickContext(self.t, self.ego.v, departed, self.plan_info["gate"] == Gate.STOP_AT_LINE.value, ped, dest_dist)
            )
            rec["announcements"] = [a.value for a in said]
            rec["events"] = events
            for ev in events:
                self.log.events.append({"t": _num(self.t), **ev})
            self.log.records.append(rec)
            if status is not None:
                self.log.status = status
                break
        else:
            self.log.status = Status.TIMEOUT
        return self.log

    def brake_hold(self, cmd: ControlCommand) -> ControlCommand:
        """Brake to exact rest when nearly stopped on a plan that stays at rest."""
        cfg = self.cfg
        if self.ego.v > cfg.hold_speed:
            return cmd
        tr = self.traj
        t0 = self.t - self.t_plan
        ahead = (tr.t >= t0 - 1e-9) & (tr.t <= t0 + cfg.hold_lookahead + 1e-9)
        if not ahead.any() or tr.v[ahead].max() > cfg.hold_speed:
            return cmd
        return replace(cmd, a=-self.ego.v / self.dt)

    def record(self, cmd: ControlCommand, replanned: bool, ped: float, agent_c: float) -> dict:
        e = self.ego
        info = self.plan_info
        traj = self.traj
        return {
            "t": round(self.t, 9),
            "x": e.x,
            "y": e.y,
            "heading": e.heading,
            "v": e.v,
            "steer": e.steer,
            "a_cmd": cmd.a,
            "steer_cmd": cmd.steer,
            "route_s": self.route_s,
            "goal_s": float(self.route.goal_s),
            "d_t": float(info["d_t"]),
            "pi_s": info["pi_s"],
            "stop_s": info["stop_s"],
            "gate": info["gate"],
            "speed_cap": info["speed_cap"],
            "loc_error": localization_error_at(self.sc.localization, self.t),
            "phase": self.task.phase.value,
            "replanned": replanned,
            "emergency": bool(traj.emergency or cmd.solver_failure),
            "relaxed": bool(traj.relaxed or cmd.relaxed),
            "qp_fallback": bool(traj.qp_fallback),
            "solver_failure": bool(cmd.solver_failure),
            "all_blocked": self.all_blocked and replanned,
            "ped_clearance": _num(ped),
            "agent_clearance": _num(agent_c),
        }


def run_scenario(sc: Scenario, *, keep_plans: bool = False) -> SimLog:
    """Simulate ``sc`` to GoalReached, SafetyStop or the duration cap."""
    return _Sim(sc, keep_plans).run()
