"""Closed-loop scenario simulation, metrics and announcements."""

from .announce import Announcement, Announcer, TickContext, announce
from .metrics import MetricsReport, compute_metrics, count_intervals
from .runner import SimLog, Status, read_log, run_scenario
from .scenario import Scenario, ScenarioInvalid, SimConfig, apply_overrides, bundled_scenarios, load_scenario, parse_scenario

__all__ = [
    "Announcement",
    "Announcer",
    "MetricsReport",
    "Scenario",
    "ScenarioInvalid",
    "SimConfig",
    "SimLog",
    "Status",
    "TickContext",
    "announce",
    "apply_overrides",
    "bundled_scenarios",
    "compute_metrics",
    "count_intervals",
    "load_scenario",
    "parse_scenario",
    "read_log",
    "run_scenario",
]
