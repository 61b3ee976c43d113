"""Operational metrics from a simulation log."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

KMH = 3.6
FAST_KMH = 9.0
DRIVING_SPEED = 0.1
BT_THRESHOLD = -1.0


@dataclass(frozen=True)
class MetricsReport:
    distance_km: float
    max_speed_kmh: float
    avg_speed_kmh: float
    pct_fast: float  # share of driving time at or above 9 km/h, percent
    acc_min: float
    acc_max: float
    jerk_min: float
    jerk_max: float
    bt_count: int
    km_per_bt: float
    takeover_count: int
    km_per_takeover: float
    min_pedestrian_clearance: float
    # extrema with emergency-stop ticks masked out
    comfort_acc_abs: float
    comfort_jerk_abs: float

    def as_dict(self) -> dict:
        return asdict(self)


def count_intervals(mask) -> int:
    """Number of maximal runs of True."""
    m = np.asarray(mask, dtype=bool)
    if m.size == 0:
        return 0
    return int(m[0]) + int(np.count_nonzero(m[1:] & ~m[:-1]))


def _per_km(distance_km: float, count: int) -> float:
    return distance_km / count if count else math.inf


def derivatives(v, dt: float):
    """Finite-difference acceleration (per tick interval) and jerk."""
    v = np.asarray(v, dtype=float)
    a = np.diff(v) / dt
    j = np.diff(a) / dt
    return a, j


def compute_metrics(records: list, dt: float) -> MetricsReport:
    if not records:
        raise ValueError("empty log")
    v = np.array([r["v"] for r in records])
    xy = np.array([[r["x"], r["y"]] for r in records])
    emergency = np.array([bool(r["emergency"]) for r in records])
    dist_km = float(np.sum(np.linalg.norm(np.diff(xy, axis=0), axis=1))) / 1000.0 if len(xy) > 1 else 0.0
    driving = v > DRIVING_SPEED
    a, j = derivatives(v, dt)
    bt = count_intervals(a < BT_THRESHOLD)
    takeovers = sum(int(r["solver_failure"]) + int(r["all_blocked"]) for r in records)
    ok_a = ~emergency[:-1]
    ok_j = ok_a[1:] & ok_a[:-1]
    ped = [r["ped_clearance"] for r in records if r["ped_clearance"] is not None]
    return MetricsReport(
        distance_km=dist_km,
        max_speed_kmh=float(v.max() * KMH),
        avg_speed_kmh=float(v[driving].mean() * KMH) if driving.any() else 0.0,
        pct_fast=float(100.0 * np.mean(v[driving] * KMH >= FAST_KMH - 1e-9)) if driving.any() else 0.0,
        acc_min=float(a.min()) if a.size else 0.0,
        acc_max=float(a.max()) if a.size else 0.0,
        jerk_min=float(j.min()) if j.size else 0.0,
        jerk_max=float(j.max()) if j.size else 0.0,
        bt_count=bt,
        km_per_bt=_per_km(dist_km, bt),
        takeover_count=takeovers,
        km_per_takeover=_per_km(dist_km, takeovers),
        min_pedestrian_clearance=float(min(ped)) if ped else math.inf,
        comfort_acc_abs=float(np.abs(a[ok_a]).max()) if ok_a.any() else 0.0,
        comfort_jerk_abs=float(np.abs(j[ok_j]).max()) if ok_j.any() else 0.0,
    )


TABLE_COLUMNS = (
    ("scenario", "{}"),
    ("status", "{}"),
    ("max km/h", "{:.2f}"),
    ("avg km/h", "{:.2f}"),
    ("% >=9 km/h", "{:.1f}"),
    ("acc min", "{:.2f}"),
    ("acc max", "{:.2f}"),
    ("jerk min", "{:.2f}"),
    ("jerk max", "{:.2f}"),
    ("km/BT", "{:.4g}"),
    ("km/takeover", "{:.4g}"),
)


def table_row(name: str, status: str, m: MetricsReport) -> list:
    vals = (
        name,
        status,
        m.max_speed_kmh,
        m.avg_speed_kmh,
        m.pct_fast,
        m.acc_min,
        m.acc_max,
        m.jerk_min,
        m.jerk_max,
        m.km_per_bt,
        m.km_per_takeover,
    )
    return [fmt.format(v) for (_, fmt), v in zip(TABLE_COLUMNS, vals)]


def format_table(rows: list) -> str:
    header = [c for c, _ in TABLE_COLUMNS]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(str(x).ljust(w) for x, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)
