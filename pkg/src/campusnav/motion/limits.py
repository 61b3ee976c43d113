"""Speed limits from path curvature and from clearance to vulnerable road users."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..roadmap import MAX_SPEED


@dataclass(frozen=True)
class SpeedLimitConfig:
    a_lat: float = 1.0
    delta_min: float = 0.5
    delta_mdn: float = 1.0
    delta_max: float = 2.0
    v_min: float = 1.0
    v_mdn: float = 2.0
    v_max: float = MAX_SPEED

    def __post_init__(self):
        if not 0 < self.delta_min < self.delta_mdn < self.delta_max:
            raise ValueError("need 0 < delta_min < delta_mdn < delta_max")
        if not 0 < self.v_min <= self.v_mdn <= self.v_max:
            raise ValueError("need 0 < v_min <= v_mdn <= v_max")
        if self.a_lat <= 0:
            raise ValueError("a_lat must be positive")


def curvature_speed_limit(kappa, a_lat: float):
    """``sqrt(a_lat / |kappa|)``; zero curvature maps to ``inf`` (caller clamps)."""
    if a_lat <= 0:
        raise ValueError("a_lat must be positive")
    k = np.abs(np.asarray(kappa, dtype=float))
    with np.errstate(divide="ignore"):
        out = np.where(k > 0.0, np.sqrt(a_lat / np.where(k > 0.0, k, 1.0)), np.inf)
    return float(out) if out.ndim == 0 else out


def clearance_speed_limit(c, cfg: SpeedLimitConfig):
    """Piecewise-linear limit: ``v_min`` below ``delta_min``, ``v_max`` above
    ``delta_max``, linear interpolation on each normalised middle segment."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise ValueError("clearance must be non-negative")
    out = np.interp(c, [cfg.delta_min, cfg.delta_mdn, cfg.delta_max], [cfg.v_min, cfg.v_mdn, cfg.v_max])
    return float(out) if out.ndim == 0 else out
