"""Scenario files and the simulator configuration they can override."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..behavior import BehaviorConfig
from ..control import MpcParams
from ..motion.planner import PlannerConfig
from ..roadmap import MapError, RoadMap, load_roadmap
from ..world import AGENT_KINDS, DetectionNoise, LocalizationHealth, ScriptedAgent

SCENARIO_VERSION = 1


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    planner: PlannerConfig = PlannerConfig()
    behavior: BehaviorConfig = BehaviorConfig()
    mpc: MpcParams = MpcParams()
    control_dt: float = 0.1
    substeps: int = 5
    plan_every: int = 2
    window: float = 40.0
    prediction_horizon: float = 8.0
    prediction_dt: float = 0.2
    behavior_horizon: float = 4.0
    vru_sweep: float = 2.0
    static_speed: float = 0.2
    dwell_duration: float = 8.0
    pedestrian_clear_radius: float = 2.0
    dropoff_margin: float = 5.0
    arrive_tol: float = 0.5
    announce_debounce: float = 3.0
    arriving_radius: float = 5.0
    replan_speed_tol: float = 0.3
    hold_speed: float = 0.02
    hold_lookahead: float = 0.5
    comfort_decel: float = 0.7
    gov_e_lo: float = 0.2
    gov_e_hi: float = 0.6
    gov_crawl: float = 0.8

    def __post_init__(self):
        if self.control_dt <= 0 or self.substeps < 1 or self.plan_every < 1:
            raise ValueError("control_dt, substeps and plan_every must be positive")


def _merge(obj, overrides: dict, where: str):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in overrides.items():
        if key not in names:
            raise ScenarioInvalid(f"{where}: unknown setting {key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ScenarioInvalid(f"{where}.{key}: expected a section")
            changes[key] = _merge(current, value, f"{where}.{key}")
        elif isinstance(value, list):
            changes[key] = tuple(value)
        else:
            changes[key] = value
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"{where}: {exc}") from exc


def apply_overrides(cfg: SimConfig, overrides: dict | None) -> SimConfig:
    """Overlay a nested dict onto the config. The ``limits``, ``search``,
    ``refine`` and ``path`` sections are shorthands for ``planner.<section>``."""
    if not overrides:
        return cfg
    overrides = dict(overrides)
    planner_extra = {k: overrides.pop(k) for k in ("limits", "search", "refine", "path") if k in overrides}
    if planner_extra:
        merged = dict(overrides.get("planner", {}))
        merged.update(planner_extra)
        overrides["planner"] = merged
    return _merge(cfg, overrides, "config")


@dataclass
class Scenario:
    name: str
    roadmap: RoadMap
    start: tuple  # (edge, s)
    start_speed: float
    goal: str
    stops: list = field(default_factory=list)
    agents: list = field(default_factory=list)
    noise: DetectionNoise = DetectionNoise()
    localization: LocalizationHealth = LocalizationHealth()
    dropoff_requests: list = field(default_factory=list)
    config: SimConfig = SimConfig()
    seed: int = 0
    duration: float = 60.0
    map_path: str = ""

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=int(seed), noise=dataclasses.replace(self.noise, seed=int(seed)))


def _agent(doc: dict, i: int) -> ScriptedAgent:
    where = f"agents[{i}]"
    try:
        kind = doc["kind"]
        if kind not in AGENT_KINDS:
            raise ScenarioInvalid(f"{where}: unknown kind {kind!r}")
        agent = ScriptedAgent(
            id=int(doc.get("id", i)),
            kind=kind,
            length=float(doc["length"]),
            width=float(doc["width"]),
            start=tuple(doc.get("start", (0.0, 0.0))),
            velocity=tuple(doc.get("velocity", (0.0, 0.0))),
            t_start=float(doc.get("t_start", 0.0)),
            t_end=float(doc.get("t_end", math.inf)),
            schedule=[tuple(w) for w in doc.get("schedule", [])],
            heading=doc.get("heading"),
        )
    except KeyError as exc:
        raise ScenarioInvalid(f"{where}: missing field {exc.args[0]!r}") from exc
    if agent.schedule and any(b[0] <= a[0] for a, b in zip(agent.schedule, agent.schedule[1:])):
        raise ScenarioInvalid(f"{where}: schedule times must increase")
    return agent


def parse_scenario(doc: dict, base_dir: Path | None = None, roadmap: RoadMap | None = None) -> Scenario:
    if doc.get("schema_version") != SCENARIO_VERSION:
        raise ScenarioInvalid(f"schema_version: expected {SCENARIO_VERSION}, got {doc.get('schema_version')!r}")
    try:
        name = str(doc["name"])
        map_ref = str(doc["map"])
        ego = doc["ego"]
        goal = str(doc["goal"])
    except KeyError as exc:
        raise ScenarioInvalid(f"missing field {exc.args[0]!r}") from exc
    if roadmap is None:
        path = Path(map_ref)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            roadmap = load_roadmap(path.read_text())
        except OSError as exc:
            raise ScenarioInvalid(f"map {map_ref}: {exc}") from exc
        except MapError as exc:
            raise ScenarioInvalid(f"map {map_ref}: {exc}") from exc
    start = (int(ego["edge"]), float(ego.get("s", 0.0)))
    if start[0] not in roadmap.edges or not 0.0 <= start[1] <= roadmap.edges[start[0]].length:
        raise ScenarioInvalid(f"ego start {start} does not lie on an edge")
    stops = [str(s) for s in doc.get("stops", [])]
    for st in [*stops, goal]:
        if st not in roadmap.stations:
            raise ScenarioInvalid(f"unknown station {st!r}")
    duration = float(doc.get("duration", 60.0))
    if duration <= 0:
        raise ScenarioInvalid("duration must be positive")
    seed = int(doc.get("seed", 0))
    try:
        noise = DetectionNoise(**{**doc.get("noise", {}), "seed": seed})
        loc = LocalizationHealth(tuple(tuple(p) for p in doc.get("localization", [[0.0, 0.0]])))
        cfg = apply_overrides(SimConfig(), doc.get("config"))
    except (TypeError, ValueError) as exc:
        raise ScenarioInvalid(str(exc)) from exc
    agents = [_agent(a, i) for i, a in enumerate(doc.get("agents", []))]
    ids = [a.id for a in agents]
    if len(set(ids)) != len(ids):
        raise ScenarioInvalid("agent ids must be unique")
    return Scenario(
        name=name,
        roadmap=roadmap,
        start=start,
        start_speed=float(ego.get("v", 0.0)),
        goal=goal,
        stops=stops,
        agents=agents,
        noise=noise,
        localization=loc,
        dropoff_requests=sorted(float(t) for t in doc.get("dropoff_requests", [])),
        config=cfg,
        seed=seed,
        duration=duration,
        map_path=map_ref,
    )


def load_scenario(path, overrides: dict | None = None) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioInvalid(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    sc = parse_scenario(doc, path.parent)
    if overrides:
        sc.config = apply_overrides(sc.config, overrides)
    return sc


def bundled_scenarios() -> dict:
    """Name to path of the scenario files shipped with the package."""
    root = Path(__file__).resolve().parent.parent / "data" / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.json"))}
