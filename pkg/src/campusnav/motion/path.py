"""Path generation as a MAP estimate of lateral offsets along the reference.

Offsets ``e(s)`` at support points are pulled towards the behavioral target
``d_t`` by a smoothness prior and pushed away from static obstacles and
excessive curvature by one-sided quadratic factors. The resulting nonlinear
least-squares problem is solved with Levenberg-Marquardt damping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ..frenet import FrenetFrame, ego_boxes, frame_from_points, min_distance
from ..geometry import EGO_LENGTH, EGO_WIDTH


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class PathParams:
    support_ds: float = 1.0
    w_prior: float = 0.02
    w_smooth: float = 200.0
    w_start: float = 1e4
    w_obs: float = 2e3
    w_kappa: float = 1e3
    buffer: float = 0.3
    max_iter: int = 30
    tol: float = 1e-6


@dataclass
class PathResult:
    path: FrenetFrame
    support_s: np.ndarray
    offsets: np.ndarray
    objective: list = field(default_factory=list)
    converged: bool = True
    # path arc length at each reference-frame sample s
    ref_s: np.ndarray | None = None

    def to_path_s(self, s_ref):
        return np.interp(s_ref, self.path_s_of_ref[0], self.path_s_of_ref[1])

    @property
    def path_s_of_ref(self):
        return self.ref_s


class _Problem:
    def __init__(self, frame, target, obstacles, w_o, d_start, slope_start, caps, params, ego_dims):
        p = params
        self.frame = frame
        self.p = p
        n = int(np.floor(frame.s_max / p.support_ds + 1e-9))
        s = np.arange(n + 1) * p.support_ds
        if s[-1] < frame.s_max - 1e-9:
            s = np.append(s, frame.s_max)
        self.s = s
        self.h = np.diff(s)
        self.target = target
        self.w_o = w_o
        self.d_start = d_start
        self.slope_start = slope_start
        self.kappa_ref = frame.kappa_at(s)
        self.caps = None if caps is None else np.interp(s, caps[0], caps[1])
        self.ego_dims = ego_dims
        reach = p.buffer + w_o + 1.5
        if obstacles:
            probe = np.concatenate(
                [ego_boxes(frame, np.full(s.shape, off), s, ego_dims) for off in (-3.0, 0.0, 3.0)]
            )
            dist = min_distance(probe, obstacles, reach=reach)
            if np.isfinite(dist).any() and dist.min() < reach + 3.0:
                # drop obstacles whose bounding circle stays clear of the probe band
                pc = probe.mean(axis=1)
                pr = np.linalg.norm(probe - pc[:, None, :], axis=-1).max(axis=1)
                keep = []
                for poly in obstacles:
                    poly = np.asarray(poly, dtype=float)
                    c = poly.mean(axis=0)
                    r = np.linalg.norm(poly - c, axis=1).max()
                    if (np.linalg.norm(pc - c, axis=1) - pr - r).min() <= reach:
                        keep.append(poly)
                self.obstacles = keep
            else:
                self.obstacles = []
        else:
            self.obstacles = []
        # second-difference operator on a (possibly) non-uniform grid
        m = len(s)
        D2 = np.zeros((max(m - 2, 0), m))
        for i in range(1, m - 1):
            h0, h1 = self.h[i - 1], self.h[i]
            D2[i - 1, i - 1] = 2.0 / (h0 * (h0 + h1))
            D2[i - 1, i] = -2.0 / (h0 * h1)
            D2[i - 1, i + 1] = 2.0 / (h1 * (h0 + h1))
        self.D2 = D2
        self.sqrt_h = np.sqrt(0.5 * (np.concatenate([[0], self.h]) + np.concatenate([self.h, [0]])))

    def clearance(self, e, idx=None):
        s = self.s if idx is None else self.s[idx]
        boxes = ego_boxes(self.frame, e, s, self.ego_dims)
        reach = self.p.buffer + self.w_o + 1.0
        # beyond reach the exact value is irrelevant; cap keeps differences finite
        return np.minimum(min_distance(boxes, self.obstacles, reach=reach), reach) - self.w_o

    def residuals(self, e, with_jac=True):
        p = self.p
        m = len(e)
        rows, jacs = [], []
        # prior mean
        w = np.sqrt(p.w_prior) * self.sqrt_h
        rows.append(w * (e - self.target))
        jacs.append(np.diag(w))
        # smoothness
        if m > 2:
            ws = np.sqrt(p.w_smooth) * self.sqrt_h[1:-1]
            rows.append(ws * (self.D2 @ e))
            jacs.append(ws[:, None] * self.D2)
        # start state
        if self.d_start is not None:
            J = np.zeros((2, m))
            J[0, 0] = np.sqrt(p.w_start)
            J[1, 0], J[1, 1] = -np.sqrt(p.w_start) / self.h[0], np.sqrt(p.w_start) / self.h[0]
            rows.append(np.array([J[0, 0] * (e[0] - self.d_start), J[1] @ e - np.sqrt(p.w_start) * self.slope_start]))
            jacs.append(J)
        # obstacles
        if self.obstacles:
            c = self.clearance(e)
            active = c < p.buffer
            r = np.where(active, np.sqrt(p.w_obs) * (p.buffer - c), 0.0)
            rows.append(r)
            if with_jac:
                step = 1e-3
                idx = np.flatnonzero(active)
                dc = np.zeros(m)
                if idx.size:
                    both = self.clearance(np.concatenate([e[idx] + step, e[idx] - step]), np.concatenate([idx, idx]))
                    dc[idx] = (both[: idx.size] - both[idx.size :]) / (2 * step)
                jacs.append(np.diag(np.where(active, -np.sqrt(p.w_obs) * dc, 0.0)))
            else:
                jacs.append(None)
        # curvature caps
        if self.caps is not None and m > 2:
            kappa = self.kappa_ref[1:-1] + self.D2 @ e
            excess = np.abs(kappa) - self.caps[1:-1]
            active = excess > 0
            wk = np.sqrt(p.w_kappa)
            rows.append(np.where(active, wk * excess, 0.0))
            jacs.append(np.where(active[:, None], wk * np.sign(kappa)[:, None] * self.D2, 0.0))
        r = np.concatenate(rows)
        if not with_jac:
            return r, None
        return r, np.vstack(jacs)


def generate_path(
    frame: FrenetFrame,
    target: float,
    obstacles: list | None = None,
    w_o: float = 0.0,
    *,
    d_start: float | None = None,
    heading_error: float = 0.0,
    curvature_caps: tuple | None = None,
    params: PathParams = PathParams(),
    ego_dims=(EGO_LENGTH, EGO_WIDTH),
    out_ds: float | None = None,
) -> PathResult:
    """Smoothed offset path around ``frame`` shifted to ``target``.

    ``curvature_caps`` is ``(s, cap)`` giving a maximum |curvature| along the
    frame. ``d_start``/``heading_error`` anchor the path at the vehicle.
    """
    prob = _Problem(frame, target, list(obstacles or []), w_o, d_start, np.tan(heading_error), curvature_caps, params, ego_dims)
    e = np.full(len(prob.s), float(target))
    if d_start is not None:
        blend = np.clip(prob.s / 10.0, 0.0, 1.0)
        e = d_start + (target - d_start) * blend
    r, J = prob.residuals(e)
    F = 0.5 * float(r @ r)
    history = [F]
    lam = 1e-4
    converged = False
    for _ in range(params.max_iter):
        JtJ = J.T @ J
        grad = J.T @ r
        A = JtJ + lam * (np.diag(np.diag(JtJ)) + 1e-9 * np.eye(len(e)))
        step = np.linalg.solve(A, -grad)
        e_new = e + step
        r_new, _ = prob.residuals(e_new, with_jac=False)
        F_new = 0.5 * float(r_new @ r_new)
        if F_new <= F:
            decrease = F - F_new
            e = e_new
            r, J = prob.residuals(e)
            F = 0.5 * float(r @ r)
            history.append(F)
            lam = max(lam / 3.0, 1e-9)
            if decrease < params.tol:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e8:
                converged = float(np.abs(grad).max()) < 1e-4
                break
    return _assemble(frame, prob.s, e, history, converged, out_ds or frame.ds)


def _assemble(frame, support_s, e, history, converged, out_ds) -> PathResult:
    s_dense = frame.s
    if len(support_s) >= 3:
        e_dense = CubicSpline(support_s, e, bc_type="natural")(s_dense)
    else:
        e_dense = np.interp(s_dense, support_s, e)
    pts = frame.point_at(s_dense, e_dense)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(np.floor(arc[-1] / out_ds + 1e-9))
    s_out = np.arange(n + 1) * out_ds
    xy = np.stack([np.interp(s_out, arc, pts[:, 0]), np.interp(s_out, arc, pts[:, 1])], axis=1)
    path = frame_from_points(xy, out_ds, origin_s=frame.origin_s)
    return PathResult(path, support_s, e, history, converged, ref_s=(s_dense, arc))


def offset_curvature(frame: FrenetFrame, support_s, e) -> np.ndarray:
    """Small-offset curvature estimate used by the curvature factors."""
    cs = CubicSpline(support_s, e, bc_type="natural")
    return frame.kappa_at(support_s) + cs(support_s, 2)
