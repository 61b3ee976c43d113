"""Freeze random 12-layer s-t grids with exhaustively enumerated optimal costs.

Writes tests/data/lattice_grids.json. The enumerator lives in tests/oracles.py.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import enumerate_speed_cost  # noqa: E402

LAYERS = 12
DS = 0.5
DT = 0.5


def random_grid(rng):
    n = int(rng.integers(12, 30))
    occ = np.zeros((LAYERS, n), dtype=bool)
    for _ in range(int(rng.integers(0, 4))):
        # a crossing agent: a block of cells over a run of layers
        c = int(rng.integers(2, n))
        w = int(rng.integers(1, 5))
        t0 = int(rng.integers(0, LAYERS))
        occ[t0 : t0 + int(rng.integers(1, 6)), c : c + w] = True
    base = rng.choice([1.5, 2.25, 3.0, 4.17])
    limits = np.full(n, base)
    if rng.random() < 0.6:
        a = int(rng.integers(0, n))
        limits[a : a + int(rng.integers(2, 10))] = rng.choice([0.75, 1.0, 1.5, 2.0])
    v0 = float(rng.choice([0.0, 0.0, 0.5, 1.2, 1.5, 2.0, 2.6]))
    v0 = min(v0, float(limits[0]))
    s_stop = float(rng.uniform(3.0, n * DS)) if rng.random() < 0.3 else None
    return {"occupied": occ.astype(int).tolist(), "limits": limits.tolist(), "v0": v0, "s_stop": s_stop}


def main(count=60, seed=20240612):
    rng = np.random.default_rng(seed)
    grids = []
    for i in range(count):
        g = random_grid(rng)
        g["cost"] = enumerate_speed_cost(np.array(g["occupied"], dtype=bool), DS, DT, g["limits"], g["v0"], g["s_stop"])
        grids.append(g)
        print(i, g["cost"], flush=True)
    out = ROOT / "tests" / "data" / "lattice_grids.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps({"ds": DS, "dt": DT, "layers": LAYERS, "grids": grids}) + "\n")


if __name__ == "__main__":
    main()
