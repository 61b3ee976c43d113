"""Command-line entry point: map validation, scenario runs and plot data export."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .roadmap import MapError, load_roadmap
from .sim import (
    ScenarioInvalid,
    Status,
    bundled_scenarios,
    compute_metrics,
    load_scenario,
    read_log,
    run_scenario,
)
from .sim.metrics import KMH, derivatives, format_table, table_row

OUT_ENV = "CAMPUSNAV_OUT"
DEFAULT_OUT = "campusnav_out"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def cmd_validate_map(args) -> int:
    try:
        text = Path(args.path).read_text()
    except OSError as exc:
        print(f"error: cannot read {args.path}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        rmap = load_roadmap(text)
    except MapError as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"{args.path}: ok ({len(rmap.nodes)} nodes, {len(rmap.edges)} edges, {len(rmap.stations)} stations)")
    return EXIT_OK


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if arg in bundled:
        return bundled[arg]
    raise ScenarioInvalid(f"{arg}: no such file or bundled scenario")


def cmd_run(args) -> int:
    overrides = None
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: config {args.config}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        scenarios = [load_scenario(_resolve_scenario(p), overrides) for p in args.scenarios]
    except ScenarioInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    rows, docs, failed = [], [], []
    for sc in scenarios:
        if args.seed is not None:
            sc = sc.with_seed(args.seed)
        log = run_scenario(sc)
        metrics = compute_metrics(log.records, log.dt)
        summary = {**log.summary(), "metrics": metrics.as_dict()}
        write_atomic(out / sc.name / "log.jsonl", "".join(line + "\n" for line in log.lines()))
        write_atomic(out / sc.name / "summary.json", json.dumps(_json_safe(summary), indent=1) + "\n")
        rows.append(table_row(sc.name, log.status, metrics))
        docs.append(_json_safe({"scenario": sc.name, "status": log.status, "digest": log.digest, "metrics": metrics.as_dict()}))
        if log.status != Status.GOAL_REACHED:
            failed.append(sc.name)
    if args.format == "machine":
        print(json.dumps({"runs": docs, "failed": failed}, indent=1))
    else:
        print(format_table(rows))
        for d in docs:
            print(f"digest {d['scenario']} {d['digest']}")
        for name in failed:
            print(f"FAILED {name}")
    return EXIT_FAIL if failed else EXIT_OK


def plot_series(records: list) -> dict:
    """CSV text of the speed histogram, speed-vs-distance and accel/jerk series."""
    t = np.array([r["t"] for r in records], dtype=float)
    v = np.array([r["v"] for r in records], dtype=float)
    xy = np.array([[r["x"], r["y"]] for r in records], dtype=float)
    dt = float(np.median(np.diff(t))) if len(t) > 1 else 0.1
    kmh = v * KMH
    driving = kmh[v > 0.1]
    bins = np.floor(driving + 1e-9).astype(int)
    top = int(bins.max()) + 1 if bins.size else 0
    counts = np.bincount(bins, minlength=top) if bins.size else np.zeros(0, dtype=int)
    dist = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
    a, j = derivatives(v, dt)

    def to_csv(header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()

    return {
        "speed_histogram.csv": to_csv(["kmh_lo", "kmh_hi", "ticks"], [(b, b + 1, int(c)) for b, c in enumerate(counts)]),
        "speed_distance.csv": to_csv(["distance_m", "speed_kmh"], [(f"{d:.6g}", f"{s:.6g}") for d, s in zip(dist, kmh)]),
        "accel_jerk.csv": to_csv(
            ["t", "accel", "jerk"],
            [(f"{t[i]:.6g}", f"{a[i]:.6g}", f"{j[i - 1]:.6g}" if i >= 1 and i - 1 < len(j) else "") for i in range(len(a))],
        ),
    }


def cmd_plotdata(args) -> int:
    try:
        records = read_log(args.log)
    except OSError as exc:
        print(f"error: cannot read {args.log}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {args.log}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = Path(args.out or Path(args.log).parent)
    for name, text in plot_series(records).items():
        write_atomic(out / name, text)
        print(out / name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="campusnav", description="Campus shuttle navigation stack simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate-map", help="check a map file against the schema and invariants")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate_map)
    r = sub.add_parser("run", help="simulate scenarios and report metrics")
    r.add_argument("scenarios", nargs="+", help="scenario files or bundled scenario names")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.add_argument("--config", default=None, help="JSON overlay applied to every scenario's configuration")
    r.add_argument("--format", choices=("table", "machine"), default="table")
    r.set_defaults(func=cmd_run)
    d = sub.add_parser("plotdata", help="export plot-ready CSV series from a log")
    d.add_argument("log")
    d.add_argument("--out", default=None, help="output directory (default: next to the log)")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
