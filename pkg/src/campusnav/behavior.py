"""Behavioral planning: lateral-offset candidates, the four-term cost, stop-line
gating at unprotected intersections and the localization speed governor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .frenet import ClearanceProfile, FrenetFrame, clearance_profile, clearance_profiles
from .geometry import EGO_LENGTH, EGO_WIDTH, convex_intersect
from .prediction_gate import Corridor, conflict
from .roadmap import MAX_SPEED


class AllBlocked(RuntimeError):
    """Every candidate offset is blocked at the frame origin."""


@dataclass(frozen=True)
class BehaviorConfig:
    w_s: float = 1.0
    w_d1: float = 0.5
    w_d2: float = 0.3
    w_o1: float = 0.5
    w_o2: float = 1.0
    dyn_penalty: float = 1e3
    spacing: float = 0.25
    d_l: float = 0.5
    f_p: float = 2.0
    s_max: float = 40.0
    stop_margin: float = 0.5
    rate_limit: bool = True

    def __post_init__(self):
        if min(self.w_s, self.w_d1, self.w_d2, self.w_o1, self.w_o2) < 0:
            raise ValueError("weights must be non-negative")
        if self.spacing <= 0 or self.f_p <= 0:
            raise ValueError("spacing and f_p must be positive")

    def scaled(self, lam: float) -> "BehaviorConfig":
        return replace(
            self,
            w_s=self.w_s * lam,
            w_d1=self.w_d1 * lam,
            w_d2=self.w_d2 * lam,
            w_o1=self.w_o1 * lam,
            w_o2=self.w_o2 * lam,
            dyn_penalty=self.dyn_penalty * lam,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    tag: str
    w_o: float
    v_ref: float
    band: float
    lane_change: bool = True
    gate: bool = False
    use_predictions: bool = True

    def __post_init__(self):
        if self.w_o < 0 or self.v_ref <= 0:
            raise ValueError("need w_o >= 0 and v_ref > 0")


def scenario_preset(tag: str, route_speed: float = MAX_SPEED) -> ScenarioConfig:
    if tag == "Common":
        return ScenarioConfig("Common", w_o=0.2, v_ref=route_speed, band=1.0, lane_change=True)
    if tag == "Parking":
        return ScenarioConfig("Parking", w_o=0.5, v_ref=route_speed / 2, band=1.0, lane_change=True, use_predictions=True)
    if tag == "Intersection":
        return ScenarioConfig("Intersection", w_o=0.2, v_ref=route_speed, band=0.25, lane_change=False, gate=True)
    raise ValueError(f"unknown scenario tag {tag!r}")


@dataclass(frozen=True)
class CandidateEvaluation:
    d: float
    s_m: float
    c_avg: float
    c_min: float
    J_s: float
    J_d: float
    J_o: float
    J_dyn: float

    @property
    def J_total(self) -> float:
        return self.J_s + self.J_d + self.J_o + self.J_dyn


@dataclass
class EvalContext:
    frame: FrenetFrame
    cfg: BehaviorConfig
    scn: ScenarioConfig
    d_0: float = 0.0
    obstacles: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    ego_dims: tuple = (EGO_LENGTH, EGO_WIDTH)


class Gate(str, Enum):
    PROCEED = "Proceed"
    STOP_AT_LINE = "StopAtLine"


@dataclass(frozen=True)
class ReferenceRoute:
    frame: FrenetFrame
    d_t: float
    truncated: bool
    stop_s: float | None
    speed_cap: float
    hold: bool = False
    evaluation: CandidateEvaluation | None = None
    lane_change_committed: bool = False

    @property
    def s_max(self) -> float:
        return self.frame.s_max


def candidates(scn: ScenarioConfig, cfg: BehaviorConfig, d_0: float) -> np.ndarray:
    n = int(math.floor(scn.band / cfg.spacing + 1e-9))
    grid = set(np.round(np.arange(-n, n + 1) * cfg.spacing, 9))
    snapped = round(round(d_0 / cfg.spacing) * cfg.spacing, 9)
    grid.add(snapped)
    grid.add(0.0)
    if not scn.lane_change:
        grid = {d for d in grid if abs(d - snapped) <= cfg.d_l + 1e-9}
    return np.array(sorted(d + 0.0 for d in grid))


def evaluate(d: float, ctx: EvalContext, profile: ClearanceProfile | None = None) -> CandidateEvaluation:
    cfg, scn, frame = ctx.cfg, ctx.scn, ctx.frame
    prof = profile or clearance_profile(frame, d, ctx.obstacles, scn.w_o, ctx.ego_dims)
    J_s = cfg.w_s * (1.0 - prof.s_m / frame.s_max)
    J_d = cfg.w_d1 * abs(d - ctx.d_0) + cfg.w_d2 * abs(d)
    if prof.c_min <= 0.0:
        J_o = cfg.dyn_penalty
    else:
        J_o = cfg.w_o1 / prof.c_avg + cfg.w_o2 / prof.c_min
    J_dyn = 0.0
    if scn.use_predictions and ctx.predictions:
        corridor = Corridor(frame, d, ctx.ego_dims[1] / 2)
        if any(conflict(corridor, p, inflate=scn.w_o) is not None for p in ctx.predictions):
            J_dyn = cfg.dyn_penalty
    return CandidateEvaluation(d, prof.s_m, prof.c_avg, prof.c_min, J_s, J_d, J_o, J_dyn)


def pick_best(evals: list) -> CandidateEvaluation:
    """Minimum total cost; near-ties (relative 1e-9) go to smaller |d|, then smaller d."""
    j_min = min(e.J_total for e in evals)
    tol = 1e-9 * abs(j_min)
    tied = [e for e in evals if e.J_total <= j_min + tol]
    return min(tied, key=lambda e: (abs(e.d), e.d))


def governor(error: float, v_max: float = MAX_SPEED, e_lo: float = 0.2, e_hi: float = 0.6, v_crawl: float = 0.8) -> float:
    """Speed cap from localization error: full speed below ``e_lo``, crawl above ``e_hi``."""
    if error < 0:
        raise ValueError("localization error must be non-negative")
    if error <= e_lo:
        return v_max
    if error >= e_hi:
        return min(v_crawl, v_max)
    frac = (error - e_lo) / (e_hi - e_lo)
    return min(v_max, v_max + frac * (v_crawl - v_max))


def intersection_gate(areas: list, stop_line_s: float, agents: list, predictions: list, corridor: Corridor, inflate: float = 0.0) -> Gate:
    """Stop at the line if an agent inside an observation area is forecast to
    cross the ego corridor; ``agents`` and ``predictions`` are index-aligned."""
    for agent, pred in zip(agents, predictions):
        poly = agent.polygon()[None]
        if not any(bool(convex_intersect(poly, np.asarray(area)[None])[0]) for area in areas):
            continue
        if conflict(corridor, pred, inflate=inflate) is not None:
            return Gate.STOP_AT_LINE
    return Gate.PROCEED


class BehaviorPlanner:
    """Stateful wrapper that adds lane-change rate limiting to the argmin."""

    def __init__(self, cfg: BehaviorConfig | None = None):
        self.cfg = cfg or BehaviorConfig()
        self.committed: float | None = None
        self.commit_t = -math.inf
        self.last_evaluations: list = []

    def reset(self) -> None:
        self.committed = None
        self.commit_t = -math.inf

    def select_reference(
        self,
        ctx: EvalContext,
        t: float,
        loc_error: float = 0.0,
        gate: Gate = Gate.PROCEED,
        stop_line_s: float | None = None,
    ) -> ReferenceRoute:
        cfg = ctx.cfg
        offsets = candidates(ctx.scn, cfg, ctx.d_0)
        profiles = clearance_profiles(ctx.frame, offsets, ctx.obstacles, ctx.scn.w_o, ctx.ego_dims)
        evals = [evaluate(float(d), ctx, prof) for d, prof in zip(offsets, profiles)]
        self.last_evaluations = evals
        if all(e.s_m <= 0.0 for e in evals):
            raise AllBlocked("every candidate offset is blocked")
        best = pick_best(evals)
        chosen = best
        lane_change = False
        if cfg.rate_limit and self.committed is not None:
            jump = abs(best.d - self.committed) > cfg.d_l + 1e-9
            if jump and t - self.commit_t < 1.0 / cfg.f_p - 1e-9:
                chosen = next((e for e in evals if e.d == self.committed), None) or evaluate(self.committed, ctx)
            lane_change = jump and chosen is best
        if self.committed is None or chosen.d != self.committed:
            self.committed = chosen.d
            self.commit_t = t
        truncated = chosen.s_m < ctx.frame.s_max
        stop_s = max(0.0, chosen.s_m - cfg.stop_margin) if truncated else None
        hold = gate == Gate.STOP_AT_LINE and stop_line_s is not None and stop_line_s >= 0.0
        if hold:
            stop_s = stop_line_s if stop_s is None else min(stop_s, stop_line_s)
        cap = min(ctx.scn.v_ref, governor(loc_error, ctx.scn.v_ref))
        return ReferenceRoute(ctx.frame, chosen.d, truncated, stop_s, cap, hold, chosen, lane_change)


def select_reference(ctx: EvalContext, t: float = 0.0, loc_error: float = 0.0, gate: Gate = Gate.PROCEED, stop_line_s=None) -> ReferenceRoute:
    """Stateless selection (no rate limiting memory)."""
    return BehaviorPlanner(ctx.cfg).select_reference(ctx, t, loc_error, gate, stop_line_s)
