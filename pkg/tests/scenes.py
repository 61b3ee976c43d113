"""Seeded random scene generators shared by module and acceptance tests."""

from __future__ import annotations

import numpy as np

from campusnav.behavior import BehaviorConfig, EvalContext, ScenarioConfig
from campusnav.geometry import box_polygon
from campusnav.roadmap import Edge, RoadMap
from campusnav.world import AgentState, predict_cv

from conftest import arc_frame, straight_frame


def behavior_scene(rng: np.random.Generator) -> EvalContext:
    """At most 8 candidates, 5 obstacles and 3 agents on a short window."""
    if rng.random() < 0.5:
        frame = straight_frame(float(rng.choice([10.0, 15.0, 20.0])))
    else:
        frame = arc_frame(float(rng.uniform(8.0, 30.0)), float(rng.uniform(0.5, 1.2)))
    spacing = float(rng.choice([0.25, 0.5]))
    band = float(rng.choice([0.0, 0.5, 0.75])) if spacing == 0.25 else float(rng.choice([0.5, 1.0, 1.5]))
    d_0 = float(rng.uniform(-band, band)) if rng.random() < 0.7 else 0.0
    cfg = BehaviorConfig(
        w_s=float(rng.uniform(0.0, 3.0)),
        w_d1=float(rng.uniform(0.0, 1.0)),
        w_d2=float(rng.uniform(0.0, 1.0)),
        w_o1=float(rng.uniform(0.0, 1.5)),
        w_o2=float(rng.uniform(0.0, 1.5)),
        spacing=spacing,
        rate_limit=False,
    )
    scn = ScenarioConfig("Common", w_o=float(rng.choice([0.0, 0.2, 0.5])), v_ref=4.0, band=band, lane_change=bool(rng.random() < 0.7))
    obstacles = []
    for _ in range(int(rng.integers(0, 6))):
        s = rng.uniform(0.0, frame.s_max)
        c = frame.point_at(s, rng.uniform(-3.5, 3.5))
        obstacles.append(box_polygon(c[0], c[1], rng.uniform(-np.pi, np.pi), rng.uniform(0.3, 3.0), rng.uniform(0.3, 1.5)))
    predictions = []
    for k in range(int(rng.integers(0, 4))):
        c = frame.point_at(rng.uniform(0.0, frame.s_max), rng.uniform(-6.0, 6.0))
        speed = rng.uniform(0.0, 3.0)
        ang = rng.uniform(-np.pi, np.pi)
        agent = AgentState(k, "Pedestrian", c[0], c[1], ang, 0.5, 0.5, speed * np.cos(ang), speed * np.sin(ang))
        predictions.append(predict_cv(agent, 4.0, 0.2))
    return EvalContext(frame, cfg, scn, d_0, obstacles, predictions)


def symmetric_scene(rng: np.random.Generator) -> EvalContext:
    """Mirror-symmetric obstacles on a straight frame, so +d and -d tie exactly."""
    frame = straight_frame(20.0)
    cfg = BehaviorConfig(spacing=0.5, rate_limit=False, w_d1=float(rng.uniform(0, 1)), w_d2=float(rng.uniform(0, 1)))
    scn = ScenarioConfig("Common", w_o=0.2, v_ref=4.0, band=1.0)
    obstacles = []
    for _ in range(int(rng.integers(1, 3))):
        x, y = rng.uniform(2.0, 18.0), rng.uniform(1.0, 3.0)
        w = rng.uniform(0.3, 1.0)
        obstacles += [box_polygon(x, y, 0.0, 1.0, w), box_polygon(x, -y, 0.0, 1.0, w)]
    if rng.random() < 0.5:
        # a centred bollard pushes the optimum off zero onto a tied pair
        obstacles.append(box_polygon(rng.uniform(6.0, 14.0), 0.0, 0.0, 0.3, 0.3))
    return EvalContext(frame, cfg, scn, 0.0, obstacles, [])


def speed_qp_instance(rng: np.random.Generator):
    """Coarse profile from the lattice search on a random grid plus refine arguments."""
    from campusnav.motion.speed import Infeasible, search_speed_profile
    from campusnav.motion.stgraph import STGraph

    n = int(rng.integers(16, 40))
    layers = 17
    occ = np.zeros((layers, n), dtype=bool)
    for _ in range(int(rng.integers(0, 3))):
        c = int(rng.integers(6, n))
        t0 = int(rng.integers(0, layers))
        occ[t0 : t0 + int(rng.integers(1, 6)), c : c + int(rng.integers(1, 4))] = True
    graph = STGraph(np.arange(n + 1) * 0.5, np.arange(layers) * 0.5, occ)
    node_lim = np.full(n + 1, float(rng.choice([2.0, 3.0, 4.17])))
    if rng.random() < 0.5:
        a = int(rng.integers(0, n))
        node_lim[a : a + int(rng.integers(3, 10))] = float(rng.choice([1.0, 1.5]))
    cell_lim = np.minimum(node_lim[:-1], node_lim[1:])
    v0 = float(rng.uniform(0.0, min(1.5, cell_lim[0])))
    s_stop = float(rng.uniform(4.0, n * 0.5)) if rng.random() < 0.35 else None
    try:
        coarse = search_speed_profile(graph, cell_lim, v0, s_stop=s_stop)
    except Infeasible:
        return None
    kw = {"a0": float(rng.uniform(-0.5, 0.5))}
    if coarse.v[-1] == 0.0:
        moving = np.flatnonzero(coarse.v > 0.0)
        knot = (int(moving[-1]) + 1 if moving.size else 0) + 2
        kw["stop_at"] = float(coarse.s[-1])
        if knot < len(coarse.t) - 1:
            kw["stop_knot"] = knot
    return coarse, node_lim, graph, kw


def curvy_frame(rng: np.random.Generator, length: float = 40.0, ds: float = 0.5):
    """Reference built from a few constant-curvature pieces, some tight."""
    from campusnav.frenet import frame_from_points

    n = int(round(length / ds))
    kappa = np.zeros(n)
    cuts = np.sort(rng.integers(0, n, 3))
    for a, b in zip(np.concatenate([[0], cuts]), np.concatenate([cuts, [n]])):
        kappa[a:b] = rng.choice([0.0, 1.0, -1.0]) / rng.uniform(5.0, 30.0)
    heading = np.concatenate([[0.0], np.cumsum(kappa * ds)])
    mid = 0.5 * (heading[1:] + heading[:-1])
    steps = ds * np.stack([np.cos(mid), np.sin(mid)], axis=1)
    xy = np.concatenate([[[0.0, 0.0]], np.cumsum(steps, axis=0)])
    return frame_from_points(xy, ds)


def planner_scene(rng: np.random.Generator):
    """Random plan request on a curvy reference with sparse static obstacles."""
    from campusnav.motion.planner import PlanRequest

    frame = curvy_frame(rng)
    obstacles = []
    for _ in range(int(rng.integers(0, 3))):
        c = frame.point_at(rng.uniform(8.0, frame.s_max), rng.choice([-1.0, 1.0]) * rng.uniform(1.8, 3.5))
        obstacles.append(box_polygon(c[0], c[1], rng.uniform(-np.pi, np.pi), rng.uniform(0.5, 2.0), rng.uniform(0.5, 1.0)))
    return PlanRequest(
        frame,
        d_t=float(rng.choice([0.0, 0.0, 0.5, -0.5])),
        v0=float(rng.uniform(0.0, 4.0)),
        d_start=float(rng.uniform(-0.3, 0.3)),
        heading_error=float(rng.uniform(-0.05, 0.05)),
        route_caps=np.full(len(frame.s), float(rng.choice([2.5, 3.5, 4.17]))),
        static_obstacles=obstacles,
        w_o=0.2,
    )


def random_graph(rng, n_nodes):
    nodes = {i: (float(x), float(y)) for i, (x, y) in enumerate(rng.uniform(0, 100, (n_nodes, 2)))}
    edges = {}
    n_edges = int(rng.integers(n_nodes, 4 * n_nodes + 1))
    for eid in range(n_edges):
        a, b = (int(v) for v in rng.integers(0, n_nodes, 2))
        pa, pb = np.array(nodes[a]), np.array(nodes[b])
        # a bend makes the edge longer than the straight-line distance
        mid = (pa + pb) / 2 + rng.normal(0, 5, 2) * rng.integers(0, 2)
        poly = np.array([pa, mid, pb])
        length = float(np.sum(np.linalg.norm(np.diff(poly, axis=0), axis=1)))
        edges[eid] = Edge(eid, a, b, poly, length)
    return RoadMap(nodes, edges)
