"""Road-network model, A* routing and the navigation task manager."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import EGO_LENGTH, EGO_WIDTH, box_polygon, convex_distance

SCHEMA_VERSION = 1
MAX_SPEED = 15.0 / 3.6
# map files may round the 15 km/h cap up to two decimals
MAP_SPEED_BOUND = 4.17
TAGS = ("Common", "Parking", "Intersection")


class MapError(ValueError):
    """Map text failed to parse or violates a map invariant."""


class NoRoute(RuntimeError):
    pass


@dataclass(frozen=True)
class Edge:
    id: int
    start: int
    end: int
    polyline: np.ndarray
    length: float
    tag: str = "Common"
    speed_limit: float = MAX_SPEED
    half_width_left: float = 2.0
    half_width_right: float = 2.0

    def __eq__(self, other):
        if not isinstance(other, Edge):
            return NotImplemented
        return (
            (self.id, self.start, self.end, self.tag) == (other.id, other.start, other.end, other.tag)
            and np.array_equal(self.polyline, other.polyline)
            and (self.length, self.speed_limit, self.half_width_left, self.half_width_right)
            == (other.length, other.speed_limit, other.half_width_left, other.half_width_right)
        )

    __hash__ = None


@dataclass
class RoadMap:
    nodes: dict
    edges: dict
    stations: dict = field(default_factory=dict)
    observation_areas: dict = field(default_factory=dict)
    stop_lines: dict = field(default_factory=dict)
    curbs: list = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, RoadMap):
            return NotImplemented
        same_polys = lambda a, b: len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.stations == other.stations
            and self.stop_lines == other.stop_lines
            and self.observation_areas.keys() == other.observation_areas.keys()
            and all(same_polys(self.observation_areas[k], other.observation_areas[k]) for k in self.observation_areas)
            and same_polys(self.curbs, other.curbs)
        )

    def out_edges(self, node: int) -> list:
        return sorted(e.id for e in self.edges.values() if e.start == node)


def _polyline_length(poly: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(poly, axis=0), axis=1)))


def _require(obj, key, where):
    if key not in obj:
        raise MapError(f"{where}: missing field '{key}'")
    return obj[key]


def load_roadmap(text: str) -> RoadMap:
    """Parse and validate map-file text (JSON, see README for the schema)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise MapError("top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MapError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    nodes = {}
    for i, nd in enumerate(_require(doc, "nodes", "map")):
        nid = _require(nd, "id", f"nodes[{i}]")
        if nid in nodes:
            raise MapError(f"nodes[{i}]: duplicate id {nid}")
        nodes[int(nid)] = (float(_require(nd, "x", f"nodes[{i}]")), float(_require(nd, "y", f"nodes[{i}]")))
    edges = {}
    for i, ed in enumerate(_require(doc, "edges", "map")):
        where = f"edges[{i}]"
        eid = int(_require(ed, "id", where))
        if eid in edges:
            raise MapError(f"{where}: duplicate id {eid}")
        start, end = int(_require(ed, "start", where)), int(_require(ed, "end", where))
        for n in (start, end):
            if n not in nodes:
                raise MapError(f"{where}: unknown node {n}")
        if "polyline" in ed:
            poly = np.asarray(ed["polyline"], dtype=float)
            if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 2:
                raise MapError(f"{where}: polyline must be a list of >= 2 [x, y] points")
        else:
            poly = np.array([nodes[start], nodes[end]], dtype=float)
        length = _polyline_length(poly)
        if "length" in ed and abs(float(ed["length"]) - length) > 1e-6:
            raise MapError(f"{where}: length {ed['length']} differs from polyline length {length:.6f}")
        tag = ed.get("tag", "Common")
        if tag not in TAGS:
            raise MapError(f"{where}: tag must be one of {TAGS}, got {tag!r}")
        edges[eid] = Edge(
            id=eid,
            start=start,
            end=end,
            polyline=poly,
            length=length,
            tag=tag,
            speed_limit=float(ed.get("speed_limit", MAX_SPEED)),
            half_width_left=float(ed.get("half_width_left", 2.0)),
            half_width_right=float(ed.get("half_width_right", 2.0)),
        )
    stations = {}
    for i, st in enumerate(doc.get("stations", [])):
        name = str(_require(st, "name", f"stations[{i}]"))
        if name in stations:
            raise MapError(f"stations[{i}]: duplicate name {name!r}")
        stations[name] = (int(_require(st, "edge", f"stations[{i}]")), float(_require(st, "s", f"stations[{i}]")))
    areas = {}
    for i, ar in enumerate(doc.get("observation_areas", [])):
        eid = int(_require(ar, "edge", f"observation_areas[{i}]"))
        areas.setdefault(eid, []).extend(np.asarray(p, dtype=float) for p in _require(ar, "polygons", f"observation_areas[{i}]"))
    stop_lines = {}
    for i, sl in enumerate(doc.get("stop_lines", [])):
        eid = int(_require(sl, "edge", f"stop_lines[{i}]"))
        if eid in stop_lines:
            raise MapError(f"stop_lines[{i}]: edge {eid} has more than one stop line")
        stop_lines[eid] = float(_require(sl, "s", f"stop_lines[{i}]"))
    curbs = [np.asarray(p, dtype=float) for p in doc.get("curbs", [])]

    rmap = RoadMap(nodes, edges, stations, areas, stop_lines, curbs)
    validate_roadmap(rmap)
    return rmap


def validate_roadmap(rmap: RoadMap) -> None:
    problems = []
    if sorted(rmap.nodes) != list(range(len(rmap.nodes))):
        problems.append("node ids must be dense 0..n-1")
    if sorted(rmap.edges) != list(range(len(rmap.edges))):
        problems.append("edge ids must be dense 0..n-1")
    for e in rmap.edges.values():
        if abs(e.length - _polyline_length(e.polyline)) > 1e-6:
            problems.append(f"edge {e.id}: length does not match polyline")
        for end, node in (("start", e.start), ("end", e.end)):
            p = e.polyline[0] if end == "start" else e.polyline[-1]
            if np.hypot(*(p - rmap.nodes[node])) > 1e-3:
                problems.append(f"edge {e.id}: polyline {end} is not at node {node}")
        if not 0.0 < e.speed_limit <= MAP_SPEED_BOUND:
            problems.append(f"edge {e.id}: speed_limit {e.speed_limit} outside (0, {MAP_SPEED_BOUND}]")
        if e.half_width_left < 0 or e.half_width_right < 0:
            problems.append(f"edge {e.id}: negative half-width")
        if e.tag == "Intersection":
            if not rmap.observation_areas.get(e.id):
                problems.append(f"edge {e.id}: Intersection edge has no observation area")
            if e.id not in rmap.stop_lines:
                problems.append(f"edge {e.id}: Intersection edge has no stop line")
    for name, (eid, s) in rmap.stations.items():
        if eid not in rmap.edges:
            problems.append(f"station {name!r}: unknown edge {eid}")
        elif not 0.0 <= s <= rmap.edges[eid].length:
            problems.append(f"station {name!r}: s={s} outside edge {eid}")
    for eid, s in rmap.stop_lines.items():
        if eid not in rmap.edges:
            problems.append(f"stop line: unknown edge {eid}")
        elif not 0.0 <= s <= rmap.edges[eid].length:
            problems.append(f"stop line on edge {eid}: s={s} outside edge")
    for eid in rmap.observation_areas:
        if eid not in rmap.edges:
            problems.append(f"observation area: unknown edge {eid}")
    if problems:
        raise MapError("; ".join(problems))


def dump_roadmap(rmap: RoadMap) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "nodes": [{"id": k, "x": x, "y": y} for k, (x, y) in sorted(rmap.nodes.items())],
        "edges": [
            {
                "id": e.id,
                "start": e.start,
                "end": e.end,
                "polyline": e.polyline.tolist(),
                "tag": e.tag,
                "speed_limit": e.speed_limit,
                "half_width_left": e.half_width_left,
                "half_width_right": e.half_width_right,
            }
            for _, e in sorted(rmap.edges.items())
        ],
        "stations": [{"name": k, "edge": eid, "s": s} for k, (eid, s) in rmap.stations.items()],
        "observation_areas": [
            {"edge": eid, "polygons": [p.tolist() for p in polys]} for eid, polys in sorted(rmap.observation_areas.items())
        ],
        "stop_lines": [{"edge": eid, "s": s} for eid, s in sorted(rmap.stop_lines.items())],
        "curbs": [p.tolist() for p in rmap.curbs],
    }
    return json.dumps(doc, indent=1)


# --------------------------------------------------------------------------- routing


@dataclass(frozen=True)
class GlobalRoute:
    """Stitched centreline of a routed edge sequence.

    ``s`` is measured from the start position (``s[0] == 0``). ``edge_starts[i]``
    is the route position where ``edges[i]`` begins (negative for the first edge
    when the start lies inside it). ``goal_s`` is where the vehicle must stop.
    """

    edges: tuple
    points: np.ndarray
    s: np.ndarray
    edge_starts: np.ndarray
    tags: tuple
    speed_limits: tuple
    half_widths: tuple
    destination: str
    goal_s: float
    active: bool = True
    resume: tuple | None = None

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def edge_index_at(self, s: float) -> int:
        return int(np.clip(np.searchsorted(self.edge_starts, s, side="right") - 1, 0, len(self.edges) - 1))

    def tag_at(self, s: float) -> str:
        return self.tags[self.edge_index_at(s)]

    def speed_limit_at(self, s) -> np.ndarray:
        idx = np.clip(np.searchsorted(self.edge_starts, np.asarray(s), side="right") - 1, 0, len(self.edges) - 1)
        return np.asarray(self.speed_limits)[idx]

    def half_widths_at(self, s: float) -> tuple:
        return self.half_widths[self.edge_index_at(s)]

    def point_at(self, s: float) -> np.ndarray:
        return np.array([np.interp(s, self.s, self.points[:, 0]), np.interp(s, self.s, self.points[:, 1])])

    def edge_position(self, edge_id: int, s_on_edge: float) -> float | None:
        """Route position of an (edge, s) location, or None if the route skips it."""
        for i, eid in enumerate(self.edges):
            if eid == edge_id:
                r = float(self.edge_starts[i] + s_on_edge)
                if 0.0 <= r <= self.length + 1e-9:
                    return r
        return None


def _route_from_edges(rmap: RoadMap, edge_ids: list, start_s: float, destination: str, goal_s: float) -> GlobalRoute:
    pts = []
    starts = []
    offset = -start_s
    for i, eid in enumerate(edge_ids):
        e = rmap.edges[eid]
        seg_s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(e.polyline, axis=0), axis=1))])
        starts.append(offset)
        if i == 0:
            keep = seg_s > start_s
            first = np.array([[np.interp(start_s, seg_s, e.polyline[:, 0]), np.interp(start_s, seg_s, e.polyline[:, 1])]])
            pts.append(np.vstack([first, e.polyline[keep]]))
        else:
            pts.append(e.polyline[1:])
        offset += e.length
    points = np.vstack(pts)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
    keep = np.concatenate([[True], np.diff(s) > 1e-9])
    points, s = points[keep], s[keep]
    return GlobalRoute(
        edges=tuple(edge_ids),
        points=points,
        s=s,
        edge_starts=np.asarray(starts),
        tags=tuple(rmap.edges[e].tag for e in edge_ids),
        speed_limits=tuple(rmap.edges[e].speed_limit for e in edge_ids),
        half_widths=tuple((rmap.edges[e].half_width_left, rmap.edges[e].half_width_right) for e in edge_ids),
        destination=destination,
        goal_s=goal_s,
    )


def shortest_edge_path(rmap: RoadMap, from_node: int, to_node: int) -> tuple[list, float]:
    """A* over nodes with edge length cost and straight-line heuristic.

    Ties in the priority queue fall back to the smaller incoming edge id.
    """
    goal_xy = np.asarray(rmap.nodes[to_node])
    h = lambda n: float(np.hypot(*(np.asarray(rmap.nodes[n]) - goal_xy)))
    out = {}
    for e in sorted(rmap.edges.values(), key=lambda e: e.id):
        out.setdefault(e.start, []).append(e)
    best = {from_node: 0.0}
    parent = {from_node: None}
    heap = [(h(from_node), 0.0, -1, from_node)]
    closed = set()
    while heap:
        _, g, _, node = heapq.heappop(heap)
        if node in closed:
            continue
        if node == to_node:
            path = []
            while parent[node] is not None:
                eid = parent[node]
                path.append(eid)
                node = rmap.edges[eid].start
            return path[::-1], g
        closed.add(node)
        for e in out.get(node, []):
            ng = g + e.length
            if e.end not in best or ng < best[e.end]:
                best[e.end] = ng
                parent[e.end] = e.id
                heapq.heappush(heap, (ng + h(e.end), ng, e.id, e.end))
    raise NoRoute(f"node {to_node} unreachable from node {from_node}")


def plan_global_route(rmap: RoadMap, start: tuple, goal: str) -> GlobalRoute:
    """Route from ``start = (edge_id, s)`` to the named station."""
    start_edge, start_s = start
    if goal not in rmap.stations:
        raise NoRoute(f"unknown station {goal!r}")
    if start_edge not in rmap.edges or not 0.0 <= start_s <= rmap.edges[start_edge].length:
        raise ValueError(f"start {start!r} does not lie on an edge")
    goal_edge, goal_s = rmap.stations[goal]
    if goal_edge == start_edge and goal_s >= start_s:
        edge_ids = [start_edge]
    else:
        middle, _ = shortest_edge_path(rmap, rmap.edges[start_edge].end, rmap.edges[goal_edge].start)
        edge_ids = [start_edge, *middle, goal_edge]
    route = _route_from_edges(rmap, edge_ids, start_s, goal, 0.0)
    return replace(route, goal_s=float(route.edge_starts[-1] + goal_s))


# --------------------------------------------------------------------------- task manager


class Phase(str, Enum):
    DRIVING = "Driving"
    DWELLING = "Dwelling"
    IDLE = "Idle"


@dataclass
class TaskState:
    phase: Phase = Phase.DRIVING
    dwell_timer: float = 0.0
    dwell_duration: float = 8.0
    pending_dropoff: str | None = None
    pedestrian_clear_radius: float = 2.0

    def start_dwell(self) -> None:
        self.phase = Phase.DWELLING
        self.dwell_timer = 0.0


def safe_stop_s(route: GlobalRoute, after_s: float, vehicle_width: float = EGO_WIDTH, step: float = 0.5) -> float:
    """First route position past ``after_s`` with room to pull over on the right."""
    need = vehicle_width + 0.5
    s = after_s
    while s < route.length:
        if route.half_widths_at(s)[1] >= need:
            return s
        s += step
    return route.length


def truncate_route(
    route: GlobalRoute,
    rmap: RoadMap,
    current_s: float,
    *,
    task: TaskState | None = None,
    margin: float = 5.0,
) -> GlobalRoute:
    """Cut the route short at the next reachable station (unscheduled drop-off).

    Candidates are stations strictly before the current destination and at
    least ``margin`` ahead. Without one, the route ends at the first safe-stop
    position ahead, if that comes before the destination.
    """
    if not route.active or (task is not None and task.phase != Phase.DRIVING):
        return route
    limit = current_s + margin
    best = None
    for name, (eid, s_edge) in rmap.stations.items():
        r = route.edge_position(eid, s_edge)
        if r is not None and r > limit and r < route.goal_s - 1e-9 and (best is None or r < best[1]):
            best = (name, r)
    resume = route.resume or (route.destination, route.goal_s)
    if best is None:
        stop = safe_stop_s(route, limit)
        if stop >= route.goal_s:
            return route
        best = ("safe-stop", stop)
    if best[1] >= route.goal_s:
        return route
    return replace(route, destination=best[0], goal_s=best[1], resume=resume)


def resume_route(route: GlobalRoute) -> GlobalRoute:
    if route.resume is None:
        return route
    dest, goal_s = route.resume
    return replace(route, destination=dest, goal_s=goal_s, resume=None)


def resume_check(task: TaskState, nearby: list, clock_dt: float, ego_pose: tuple = (0.0, 0.0, 0.0)) -> bool:
    """Advance the dwell timer and report whether the vehicle may depart.

    ``nearby`` holds :class:`~campusnav.world.AgentState` objects; only
    pedestrians count. ``ego_pose`` is ``(x, y, heading)``.
    """
    task.dwell_timer = min(task.dwell_duration, max(0.0, task.dwell_timer + clock_dt))
    if task.dwell_timer < task.dwell_duration:
        return False
    ego = box_polygon(*ego_pose, EGO_LENGTH, EGO_WIDTH)
    for agent in nearby:
        if agent.kind == "Pedestrian" and float(convex_distance(ego, agent.polygon())) < task.pedestrian_clear_radius:
            return False
    return True
