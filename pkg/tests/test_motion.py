import json

import numpy as np
import pytest
import shapely

from campusnav.geometry import EGO_LENGTH, EGO_WIDTH, box_polygon
from campusnav.motion.limits import SpeedLimitConfig, clearance_speed_limit, curvature_speed_limit
from campusnav.motion.path import PathParams, generate_path
from campusnav.motion.planner import PlannerConfig, PlanRequest, decel_feasible, erode, plan_trajectory
from campusnav.motion.speed import (
    CoarseProfile,
    Infeasible,
    refine_speed_qp,
    search_speed_profile,
)
from campusnav.motion.stgraph import STGraph, build_st_graph, empty_graph
from campusnav.roadmap import MAX_SPEED
from campusnav.world import AgentState, predict_cv

from conftest import DATA, arc_frame, straight_frame
from oracles import _box, dense_speed_qp, enumerate_speed_cost
from scenes import speed_qp_instance

# ---------------------------------------------------------------- limits


def test_curvature_limit_examples():
    assert curvature_speed_limit(0.25, 1.0) == pytest.approx(2.0)
    assert curvature_speed_limit(0.5, 2.0) == pytest.approx(2.0)
    assert curvature_speed_limit(-0.25, 1.0) == pytest.approx(2.0)
    assert curvature_speed_limit(0.0, 1.0) == np.inf
    np.testing.assert_allclose(curvature_speed_limit(np.array([0.0, 1.0]), 1.0), [np.inf, 1.0])
    with pytest.raises(ValueError):
        curvature_speed_limit(0.1, 0.0)


def test_clearance_limit_examples():
    cfg = SpeedLimitConfig(delta_min=0.3, delta_mdn=1.0, delta_max=2.0, v_min=0.5, v_mdn=1.5, v_max=3.0)
    assert clearance_speed_limit(0.2, cfg) == pytest.approx(0.5)
    assert clearance_speed_limit(0.65, cfg) == pytest.approx(1.0)
    assert clearance_speed_limit(2.5, cfg) == pytest.approx(3.0)
    assert clearance_speed_limit(1.5, cfg) == pytest.approx(2.25)
    c = np.linspace(0.0, 3.0, 3001)
    v = clearance_speed_limit(c, cfg)
    assert np.all(np.diff(v) >= 0) and np.max(np.abs(np.diff(v))) < 0.01
    with pytest.raises(ValueError):
        clearance_speed_limit(-0.1, cfg)


def test_limit_config_validation():
    with pytest.raises(ValueError):
        SpeedLimitConfig(delta_min=1.0, delta_mdn=0.5)
    with pytest.raises(ValueError):
        SpeedLimitConfig(v_min=3.0, v_mdn=2.0)


def test_erode_and_decel_feasible():
    lim = np.array([4.0, 4.0, 1.0, 4.0, 4.0])
    assert erode(lim, 1).tolist() == [4.0, 1.0, 1.0, 1.0, 4.0]
    out = decel_feasible(lim, 0.5, 1.0)
    assert out[2] == 1.0 and out[3] == 4.0
    assert out[1] == pytest.approx(np.sqrt(1.0 + 1.0))
    assert np.all(out <= lim)


# ---------------------------------------------------------------- path


def test_straight_reference_is_followed_exactly():
    frame = straight_frame(30.0)
    res = generate_path(frame, 0.5)
    assert res.converged
    np.testing.assert_allclose(res.offsets, 0.5, atol=1e-6)
    np.testing.assert_allclose(res.path.point_at(res.path.s)[:, 1], 0.5, atol=1e-6)


def _path_objective(frame, support_s, e, target, obstacles, w_o, p):
    """Prior, smoothness and obstacle hinge terms written out from their definitions."""
    h = np.diff(support_s)
    w = 0.5 * (np.concatenate([[0], h]) + np.concatenate([h, [0]]))
    F = p.w_prior * np.sum(w * (e - target) ** 2)
    for i in range(1, len(e) - 1):
        h0, h1 = h[i - 1], h[i]
        d2 = 2 * (h1 * e[i - 1] - (h0 + h1) * e[i] + h0 * e[i + 1]) / (h0 * h1 * (h0 + h1))
        F += p.w_smooth * w[i] * d2**2
    obs = shapely.polygons(np.stack(obstacles))
    for s, ei in zip(support_s, e):
        x, y = frame.point_at(s, ei)
        c = shapely.distance(shapely.Polygon(_box(x, y, frame.heading_at(s), EGO_LENGTH, EGO_WIDTH)), obs).min() - w_o
        F += p.w_obs * max(0.0, p.buffer - c) ** 2
    return 0.5 * F


def test_obstacle_on_the_left_pushes_the_path_right():
    frame = straight_frame(30.0)
    params = PathParams()
    obstacle = box_polygon(15.0, 1.6, 0.0, 2.0, 1.0)
    res = generate_path(frame, 0.0, [obstacle], 0.2, params=params)
    mid = int(np.argmin(np.abs(res.support_s - 15.0)))
    assert res.offsets[mid] < 0
    # the hinge factor is soft, so allow a millimetre below the buffer
    poly = shapely.Polygon(obstacle)
    for s, e in zip(res.support_s, res.offsets):
        x, y = frame.point_at(s, e)
        c = shapely.Polygon(_box(x, y, 0.0, EGO_LENGTH, EGO_WIDTH)).distance(poly) - 0.2
        assert c >= params.buffer - 1e-3
    # no single-coordinate perturbation improves the objective
    rng = np.random.default_rng(0)
    base = _path_objective(frame, res.support_s, res.offsets, 0.0, [obstacle], 0.2, params)
    for _ in range(40):
        e = res.offsets.copy()
        e[rng.integers(len(e))] += rng.choice([-1, 1]) * rng.uniform(1e-3, 0.05)
        assert _path_objective(frame, res.support_s, e, 0.0, [obstacle], 0.2, params) >= base - 1e-6


def test_path_objective_non_increasing():
    rng = np.random.default_rng(8)
    for _ in range(100):
        frame = arc_frame(float(rng.uniform(8.0, 40.0)), float(rng.uniform(0.3, 1.2)))
        obstacles = []
        for _ in range(int(rng.integers(0, 4))):
            c = frame.point_at(rng.uniform(0, frame.s_max), rng.uniform(-2.5, 2.5))
            obstacles.append(box_polygon(c[0], c[1], rng.uniform(-np.pi, np.pi), rng.uniform(0.3, 2.0), rng.uniform(0.3, 1.0)))
        caps = (frame.s, np.full(len(frame.s), float(rng.uniform(0.05, 0.4))))
        res = generate_path(
            frame,
            float(rng.uniform(-1, 1)),
            obstacles,
            0.2,
            d_start=float(rng.uniform(-0.5, 0.5)),
            heading_error=float(rng.uniform(-0.1, 0.1)),
            curvature_caps=caps,
        )
        assert np.all(np.diff(res.objective) <= 1e-12)


def test_path_is_g1_continuous():
    frame = arc_frame(12.0)
    res = generate_path(frame, 0.4, d_start=0.0)
    p = res.path
    tangent = np.arctan2(np.diff(p.xy[:, 1]), np.diff(p.xy[:, 0]))
    mid = 0.5 * (p.heading[1:] + p.heading[:-1])
    assert np.max(np.abs(tangent - mid)) <= 1e-2


# ---------------------------------------------------------------- s-t graph


def test_empty_graph_without_predictions():
    graph = build_st_graph(straight_frame(30.0), [], 8.0)
    assert not graph.occupied.any()
    assert graph.occupied.shape == (17, 60)
    assert graph.s_end == pytest.approx(30.0) and graph.horizon == pytest.approx(8.0)


def _occupancy_oracle(frame, graph, pred, inflate):
    heads = frame.heading_at(graph.s_nodes)
    pts = frame.point_at(graph.s_nodes)
    ego = [shapely.Polygon(_box(x, y, h, EGO_LENGTH, EGO_WIDTH)) for (x, y), h in zip(pts, heads)]
    out = np.zeros_like(graph.occupied)
    for k, t in enumerate(graph.t):
        if t > pred.times[-1] + 1e-9:
            continue
        pos = [np.interp(t, pred.times, pred.positions[:, i]) for i in range(2)]
        agent = shapely.Polygon(_box(*pos, pred.heading, pred.length + 2 * inflate, pred.width + 2 * inflate))
        hit = np.array([b.intersects(agent) and not b.touches(agent) for b in ego])
        out[k] = hit[:-1] | hit[1:]
    return out


def test_crossing_agent_occupies_cells_around_the_crossing():
    frame = straight_frame(30.0)
    half = EGO_WIDTH / 2 + 0.25
    # a centimetre inside the ego band at t = 1 and still a centimetre inside at t = 2
    speed = 2 * half - 0.02
    agent = AgentState(1, "Pedestrian", 10.0, -half + 0.01 - speed, np.pi / 2, 0.5, 0.5, 0.0, speed)
    pred = predict_cv(agent, horizon=4.0, dt=0.25)
    graph = build_st_graph(frame, [pred], 4.0, 0.5, 0.25)
    expected = _occupancy_oracle(frame, graph, pred, 0.0)
    assert np.array_equal(graph.occupied, expected)
    layers = graph.t[graph.occupied.any(axis=1)]
    assert layers.min() == pytest.approx(1.0) and layers.max() == pytest.approx(2.0)
    cells = np.flatnonzero(graph.occupied.any(axis=0))
    lo, hi = graph.s_nodes[cells.min()], graph.s_nodes[cells.max() + 1]
    assert lo <= 10.0 <= hi
    assert hi - lo <= EGO_LENGTH + 0.5 + 2 * graph.ds


def test_occupancy_matches_oracle_with_inflation():
    rng = np.random.default_rng(12)
    for _ in range(15):
        frame = arc_frame(float(rng.uniform(10.0, 30.0)), 1.0)
        c = frame.point_at(rng.uniform(5, frame.s_max - 5), rng.uniform(-4, 4))
        ang = rng.uniform(-np.pi, np.pi)
        agent = AgentState(1, "Cyclist", c[0], c[1], ang, 1.8, 0.6, 2.5 * np.cos(ang), 2.5 * np.sin(ang))
        pred = predict_cv(agent, 4.0, 0.2)
        graph = build_st_graph(frame, [pred], 5.0, 0.5, 0.5, inflate=0.3)
        assert np.array_equal(graph.occupied, _occupancy_oracle(frame, graph, pred, 0.3))


def test_parallel_agent_outside_corridor_leaves_graph_empty():
    frame = straight_frame(30.0)
    agent = AgentState(1, "Cyclist", 2.0, 3.5, 0.0, 1.8, 0.6, 3.0, 0.0)
    graph = build_st_graph(frame, [predict_cv(agent, 8.0, 0.2)], 8.0)
    assert not graph.occupied.any()


def test_static_polygon_blocks_every_layer():
    frame = straight_frame(30.0)
    graph = build_st_graph(frame, [], 4.0, static_polygons=[box_polygon(15.0, 0.0, 0.0, 1.0, 1.0)])
    assert np.all(graph.occupied == graph.occupied[0])
    assert graph.occupied[0].any()


# ---------------------------------------------------------------- search


def test_empty_graph_saturates_the_limit():
    graph = empty_graph(60.0, 8.0)
    prof = search_speed_profile(graph, np.full(graph.n_cells, 3.0), 0.0)
    assert prof.v.max() == pytest.approx(3.0)
    k = int(np.argmax(prof.v >= 3.0 - 1e-9))
    assert np.allclose(prof.v[k:], 3.0)
    assert np.all(prof.a[:k] > 0)
    assert np.all(np.diff(prof.s) >= 0)


def test_yield_before_blocked_interval():
    # 10 layers x 10 cells; cells 4..6 are blocked for t in [1, 3]
    n, layers = 10, 10
    occ = np.zeros((layers, n), dtype=bool)
    occ[2:7, 4:7] = True
    graph = STGraph(np.arange(n + 1) * 0.5, np.arange(layers) * 0.5, occ)
    limits = np.full(n, 3.0)
    prof = search_speed_profile(graph, limits, 1.5)
    assert prof.cost == pytest.approx(enumerate_speed_cost(occ, 0.5, 0.5, limits, 1.5), abs=1e-9)
    # waits behind the block, then goes
    at = {round(t, 6): s for t, s in zip(prof.t, prof.s)}
    assert all(at[t] < 2.0 for t in (1.0, 1.5, 2.0, 2.5, 3.0))
    assert prof.s[-1] > 3.5
    assert prof.v[-1] > 0


def test_start_occupied_is_infeasible():
    graph = empty_graph(10.0, 4.0)
    graph.occupied[:] = True
    with pytest.raises(Infeasible):
        search_speed_profile(graph, np.full(graph.n_cells, 3.0), 1.0)


def test_stop_target_is_respected():
    n, layers = 30, 12
    occ = np.zeros((layers, n), dtype=bool)
    graph = STGraph(np.arange(n + 1) * 0.5, np.arange(layers) * 0.5, occ)
    limits = np.full(n, 4.0)
    prof = search_speed_profile(graph, limits, 2.0, s_stop=12.0)
    # the final state can always still brake to rest before the stop
    assert np.all(prof.s + prof.v**2 / 2.0 <= 12.0 + 1e-9)
    assert prof.cost == pytest.approx(enumerate_speed_cost(occ, 0.5, 0.5, limits, 2.0, 12.0), abs=1e-9)


def test_search_matches_enumeration_on_sample_grids():
    doc = json.loads((DATA / "lattice_grids.json").read_text())
    for g in doc["grids"][:4]:
        occ = np.array(g["occupied"], dtype=bool)
        live = enumerate_speed_cost(occ, doc["ds"], doc["dt"], g["limits"], g["v0"], g["s_stop"])
        assert (live is None) == (g["cost"] is None)
        if live is not None:
            assert live == pytest.approx(g["cost"], abs=1e-12)


def test_search_config_validation():
    from campusnav.motion.speed import SearchConfig

    with pytest.raises(ValueError):
        SearchConfig(accelerations=(0.0, 1.0))
    with pytest.raises(ValueError):
        SearchConfig(accelerations=(-1.0, 0.3, 1.0))
    with pytest.raises(ValueError):
        search_speed_profile(empty_graph(5.0, 2.0), np.full(10, 2.0), -1.0)


# ---------------------------------------------------------------- refinement


def _constant_speed_coarse(v, T=8.0, dt=0.5):
    t = np.arange(int(round(T / dt)) + 1) * dt
    return CoarseProfile(t, v * t, np.full(len(t), v), np.zeros(len(t) - 1), 0.0)


def test_constant_speed_gives_zero_jerk():
    coarse = _constant_speed_coarse(2.0)
    graph = empty_graph(40.0, 8.0)
    prof = refine_speed_qp(coarse, np.full(len(graph.s_nodes), 4.0), graph)
    assert not prof.fallback
    assert np.max(np.abs(prof.jerk)) <= 1e-6
    t = np.linspace(0, 8, 81)
    np.testing.assert_allclose(prof.s_at(t), 2.0 * t, atol=1e-6)


def test_terminal_stop_equalities():
    graph = empty_graph(30.0, 8.0)
    coarse = search_speed_profile(graph, np.full(graph.n_cells, 4.0), 2.0, s_stop=14.0)
    prof = refine_speed_qp(coarse, np.full(len(graph.s_nodes), 4.0), graph, stop_at=14.0)
    assert not prof.fallback
    T = prof.duration
    assert abs(prof.v_at(T)) <= 1e-6
    assert abs(prof.a_at(T)) <= 1e-6
    assert abs(prof.s_at(T) - 14.0) <= 1e-4
    t = np.linspace(0, T, 401)
    assert np.all(np.diff(prof.s_at(t)) >= -1e-9)
    assert np.max(np.abs(prof.jerk)) <= 2.0 + 1e-9


def test_refinement_matches_dense_oracle_sample():
    rng = np.random.default_rng(21)
    done = 0
    while done < 8:
        inst = speed_qp_instance(rng)
        if inst is None:
            continue
        coarse, node_lim, graph, kw = inst
        prof = refine_speed_qp(coarse, node_lim, graph, **kw)
        ref = dense_speed_qp(coarse, node_lim, graph.occupied, graph.ds, **kw)
        if prof.fallback:
            assert ref is None
            continue
        assert prof.objective == pytest.approx(ref, abs=1e-4)
        for i in range(len(prof.jerk) - 1):
            end = prof.end_state(i)
            assert np.allclose(end, (prof.s0[i + 1], prof.v0[i + 1], prof.a0[i + 1]), atol=1e-4)
        done += 1


def test_infeasible_refinement_falls_back_flagged():
    coarse = _constant_speed_coarse(3.0)
    graph = empty_graph(40.0, 8.0)
    prof = refine_speed_qp(coarse, np.full(len(graph.s_nodes), 1.0), graph)
    assert prof.fallback
    np.testing.assert_allclose(prof.s_at(coarse.t), coarse.s)


# ---------------------------------------------------------------- planner


def test_straight_free_road_runs_at_cap():
    frame = straight_frame(40.0)
    traj = plan_trajectory(PlanRequest(frame, 0.0, MAX_SPEED, d_start=0.0))
    assert not traj.emergency
    assert np.max(np.abs(traj.v - MAX_SPEED)) <= 1e-3
    assert np.max(np.abs(traj.kappa)) <= 1e-6
    step = np.linalg.norm(np.diff(traj.xy, axis=0), axis=1)
    travelled = 0.5 * (traj.v[1:] + traj.v[:-1]) * np.diff(traj.t)
    assert np.max(np.abs(step - travelled)) <= 1e-3


def test_turn_apex_speed_bound():
    # straight lead-in then a 90 degree arc of radius 6 m
    from campusnav.frenet import frame_from_points

    lead = np.stack([np.arange(-10.0, 0.0, 0.5), np.zeros(20)], axis=1)
    arc = arc_frame(6.0, np.pi / 2).xy
    tail = arc[-1] + np.stack([np.zeros(20), np.arange(1, 21) * 0.5], axis=1)
    frame = frame_from_points(np.concatenate([lead, arc, tail]), 0.5)
    traj = plan_trajectory(PlanRequest(frame, 0.0, 3.0, d_start=0.0))
    assert not traj.emergency and traj.iterations <= 5
    apex = traj.s > 10.0 + 2.0
    apex &= traj.s < 10.0 + 6 * np.pi / 2 - 2.0
    assert apex.any()
    assert np.max(traj.v[apex]) <= np.sqrt(6.0) + 1e-3
    assert np.max(traj.v**2 * np.abs(traj.kappa)) <= 1.0 + 1e-3


def test_pedestrian_close_by_limits_speed():
    frame = straight_frame(40.0)
    cfg = PlannerConfig()
    # box edge 0.25 m from the ego side
    ped = box_polygon(8.0, EGO_WIDTH / 2 + 0.25 + 0.25, 0.0, 0.5, 0.5)
    traj = plan_trajectory(PlanRequest(frame, 0.0, 1.0, d_start=0.0, vru_polygons=[ped]), cfg)
    assert not traj.emergency
    near = int(np.argmin(np.abs(traj.s - 8.0)))
    assert abs(traj.s[near] - 8.0) < 0.2
    assert traj.v[near] <= cfg.limits.v_min + 1e-3


def test_stop_request_ends_at_rest():
    frame = straight_frame(40.0)
    traj = plan_trajectory(PlanRequest(frame, 0.0, 3.0, d_start=0.0, stop_s=15.0))
    assert not traj.emergency
    assert traj.v[-1] <= 1e-6
    assert traj.s[-1] == pytest.approx(15.0, abs=0.05)


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        plan_trajectory(PlanRequest(straight_frame(20.0), 0.0, 1.0), budget_ms=0.0)
