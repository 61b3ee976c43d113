"""Regenerate the bundled campus maps and scenario suite under src/campusnav/data."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "campusnav" / "data"
V_MAX = 4.17


def box(cx, cy, length, width):
    hl, hw = length / 2, width / 2
    return [[cx - hl, cy - hw], [cx + hl, cy - hw], [cx + hl, cy + hw], [cx - hl, cy + hw]]


def curbs_along_x(x0, x1, y_inner, depth=0.5, seg=5.0, skip=()):
    """Curb boxes on both sides of an x-aligned road; ``skip`` holds (x, side) gaps."""
    out = []
    x = x0
    while x < x1 - 1e-9:
        xe = min(x + seg, x1)
        for side in (1, -1):
            if any(x <= gx < xe and side == gs for gx, gs in skip):
                continue
            yc = side * (y_inner + depth / 2)
            out.append(box((x + xe) / 2, yc, xe - x, depth))
        x = xe
    return out


def straight_map(length, stations, *, curbs=True, half_width=2.0, speed=V_MAX, split=None, curb_skip=()):
    nodes = [{"id": 0, "x": 0.0, "y": 0.0}]
    edges = []
    cuts = [0.0, *(split or []), length]
    for i, (a, b) in enumerate(zip(cuts, cuts[1:])):
        nodes.append({"id": i + 1, "x": b, "y": 0.0})
        edges.append(
            {
                "id": i,
                "start": i,
                "end": i + 1,
                "tag": "Common",
                "speed_limit": speed,
                "half_width_left": half_width,
                "half_width_right": half_width,
            }
        )
    return {
        "schema_version": 1,
        "nodes": nodes,
        "edges": edges,
        "stations": [{"name": n, "edge": e, "s": s} for n, e, s in stations],
        "observation_areas": [],
        "stop_lines": [],
        "curbs": curbs_along_x(0.0, length, half_width + 0.3, skip=curb_skip) if curbs else [],
    }


def turn_map():
    r = 6.0
    ang = np.linspace(-math.pi / 2, 0.0, int(round(r * math.pi / 2 / 0.25)) + 1)
    arc = np.stack([20.0 + r * np.cos(ang), r + r * np.sin(ang)], axis=1)
    arc[0] = [20.0, 0.0]
    arc[-1] = [26.0, 6.0]
    return {
        "schema_version": 1,
        "nodes": [
            {"id": 0, "x": 0.0, "y": 0.0},
            {"id": 1, "x": 20.0, "y": 0.0},
            {"id": 2, "x": 26.0, "y": 6.0},
            {"id": 3, "x": 26.0, "y": 26.0},
        ],
        "edges": [
            {"id": 0, "start": 0, "end": 1, "speed_limit": V_MAX},
            {"id": 1, "start": 1, "end": 2, "speed_limit": V_MAX, "polyline": arc.tolist()},
            {"id": 2, "start": 2, "end": 3, "speed_limit": V_MAX},
        ],
        "stations": [{"name": "North", "edge": 2, "s": 10.0}],
        "observation_areas": [],
        "stop_lines": [],
        "curbs": [],
    }


def parking_map():
    m = straight_map(60.0, [("Lot", 1, 28.0)], split=[20.0], curbs=False, half_width=3.0)
    m["edges"][1]["tag"] = "Parking"
    return m


def intersection_map():
    m = straight_map(60.0, [("Exit", 2, 10.0)], split=[25.0, 40.0], curbs=False)
    m["edges"][1]["tag"] = "Intersection"
    m["stop_lines"] = [{"edge": 1, "s": 1.0}]
    m["observation_areas"] = [{"edge": 1, "polygons": [[[29.0, -30.0], [37.0, -30.0], [37.0, 12.0], [29.0, 12.0]]]}]
    return m


def scenario(name, map_file, goal, *, start=(0, 2.0), v=0.0, duration=60.0, seed=0, **extra):
    doc = {
        "schema_version": 1,
        "name": name,
        "map": f"../maps/{map_file}",
        "ego": {"edge": start[0], "s": start[1], "v": v},
        "goal": goal,
        "seed": seed,
        "duration": duration,
    }
    doc.update(extra)
    return doc


def main():
    maps = {
        "straight.json": straight_map(60.0, [("End", 0, 48.0)]),
        "turn.json": turn_map(),
        "parking.json": parking_map(),
        "intersection.json": intersection_map(),
        "crosswalk.json": straight_map(70.0, [("End", 0, 55.0)]),
        "shaded.json": straight_map(60.0, [("End", 0, 48.0)], half_width=2.0),
        "long.json": straight_map(90.0, [("End", 0, 78.0)]),
        "two_stops.json": straight_map(100.0, [("A", 0, 20.0), ("B", 1, 25.0)], split=[50.0]),
        "narrow.json": straight_map(50.0, [("End", 0, 38.0)], half_width=1.3, curb_skip=[(20.0, 1)]),
    }
    scenarios = {
        "straightaway": scenario("straightaway", "straight.json", "End"),
        "turn": scenario("turn", "turn.json", "North"),
        "parking_lot": scenario(
            "parking_lot",
            "parking.json",
            "Lot",
            noise={"position_sigma": 0.03, "velocity_sigma": 0.03},
            seed=11,
            agents=[
                {"id": 1, "kind": "Vehicle", "length": 4.5, "width": 1.8, "start": [30.0, -2.9], "heading": 0.0},
                {"id": 2, "kind": "Vehicle", "length": 4.5, "width": 1.8, "start": [38.0, 3.0], "heading": 0.0},
                {"id": 3, "kind": "Pedestrian", "length": 0.5, "width": 0.5, "start": [22.0, -4.2], "velocity": [0.8, 0.0]},
            ],
        ),
        "intersection": scenario(
            "intersection",
            "intersection.json",
            "Exit",
            agents=[
                {"id": 1, "kind": "Cyclist", "length": 1.8, "width": 0.6, "start": [33.0, -41.0], "velocity": [0.0, 3.0]},
            ],
        ),
        "jaywalker": scenario(
            "jaywalker",
            "crosswalk.json",
            "End",
            agents=[
                {
                    "id": 1,
                    "kind": "Pedestrian",
                    "length": 0.5,
                    "width": 0.5,
                    "start": [32.0, -6.0],
                    "velocity": [0.0, 1.2],
                    "t_start": 4.0,
                    "t_end": 14.0,
                },
            ],
        ),
        "tree_shade": scenario("tree_shade", "shaded.json", "End", noise={"boundary_jitter": 0.15}, seed=3),
        "localization": scenario(
            "localization",
            "long.json",
            "End",
            localization=[[0.0, 0.1], [6.0, 0.1], [10.0, 0.7], [16.0, 0.7], [20.0, 0.1]],
        ),
        "dropoff": scenario("dropoff", "two_stops.json", "B", dropoff_requests=[3.0]),
        "dwell_resume": scenario(
            "dwell_resume",
            "two_stops.json",
            "B",
            stops=["A"],
            agents=[
                {
                    "id": 1,
                    "kind": "Pedestrian",
                    "length": 0.5,
                    "width": 0.5,
                    "schedule": [[0.0, 21.0, -2.4], [18.0, 21.0, -2.4], [24.0, 21.0, -9.6]],
                },
            ],
        ),
        "narrow_corridor": scenario(
            "narrow_corridor",
            "narrow.json",
            "End",
            agents=[{"id": 1, "kind": "Pedestrian", "length": 0.5, "width": 0.5, "start": [22.0, 1.55]}],
        ),
    }
    (DATA / "maps").mkdir(parents=True, exist_ok=True)
    (DATA / "scenarios").mkdir(parents=True, exist_ok=True)
    for name, doc in maps.items():
        (DATA / "maps" / name).write_text(json.dumps(doc, indent=1) + "\n")
    for name, doc in scenarios.items():
        (DATA / "scenarios" / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
