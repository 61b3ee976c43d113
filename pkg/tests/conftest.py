"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from campusnav.frenet import frame_from_points
from campusnav.sim import bundled_scenarios

DATA = Path(__file__).resolve().parent / "data"
MAPS = Path(__file__).resolve().parent.parent / "src" / "campusnav" / "data" / "maps"

# acceptance verdict lines, echoed again in the terminal summary
ACCEPTANCE: list[str] = []


def report(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    print(line)
    ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def straight_frame(length: float = 40.0, ds: float = 0.5, y: float = 0.0):
    n = int(round(length / ds))
    xy = np.stack([np.arange(n + 1) * ds, np.full(n + 1, y)], axis=1)
    return frame_from_points(xy, ds)


def arc_frame(radius: float = 10.0, sweep: float = np.pi / 2, ds: float = 0.5):
    """Left-turning arc starting at the origin heading +x."""
    n = int(round(radius * sweep / ds))
    th = np.arange(n + 1) * ds / radius
    xy = np.stack([radius * np.sin(th), radius * (1 - np.cos(th))], axis=1)
    return frame_from_points(xy, ds)


def map_doc(nodes, edges, **extra) -> dict:
    """Map document from ``[(x, y), ...]`` nodes and ``[(start, end, {...}), ...]`` edges."""
    doc = {
        "schema_version": 1,
        "nodes": [{"id": i, "x": float(x), "y": float(y)} for i, (x, y) in enumerate(nodes)],
        "edges": [{"id": i, "start": a, "end": b, **opts} for i, (a, b, opts) in enumerate(edges)],
    }
    doc.update(extra)
    return doc


def map_text(nodes, edges, **extra) -> str:
    return json.dumps(map_doc(nodes, edges, **extra))


@pytest.fixture(scope="session")
def scenario_paths() -> dict:
    return bundled_scenarios()


@pytest.fixture(scope="session")
def suite_runs(scenario_paths) -> dict:
    """Every bundled scenario run once with plans kept: name -> (scenario, log, seconds)."""
    import time

    from campusnav.sim import load_scenario, run_scenario

    out = {}
    for name, path in scenario_paths.items():
        sc = load_scenario(path)
        t0 = time.perf_counter()
        log = run_scenario(sc, keep_plans=True)
        out[name] = (sc, log, time.perf_counter() - t0)
    return out
