"""Kinematic bicycle model and coupled lateral/longitudinal MPC tracking."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import wrap_angle
from .qp import QPInfeasible, solve_qp

WHEELBASE = 2.5
MAX_STEER = 0.6
MAX_STEER_RATE = 0.5
MAX_ACCEL = 2.0


class SolverFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    v: float
    steer: float = 0.0
    wheelbase: float = WHEELBASE

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed must be non-negative")
        if abs(self.steer) > MAX_STEER + 1e-9:
            raise ValueError("steering angle beyond the mechanical limit")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.v])


@dataclass(frozen=True)
class ControlCommand:
    a: float
    steer: float
    solver_failure: bool = False
    relaxed: bool = False

    def clamped(self, prev_steer: float, dt: float) -> "ControlCommand":
        rate = MAX_STEER_RATE * dt
        steer = float(np.clip(self.steer, prev_steer - rate, prev_steer + rate))
        steer = float(np.clip(steer, -MAX_STEER, MAX_STEER))
        return replace(self, a=float(np.clip(self.a, -MAX_ACCEL, MAX_ACCEL)), steer=steer)


@dataclass(frozen=True)
class MpcParams:
    N: int = 20
    dt: float = 0.1
    w_lon: float = 1.0
    w_lat: float = 2.0
    w_heading: float = 3.0
    w_speed: float = 1.0
    w_a: float = 0.5
    w_steer: float = 2.0
    jerk_max: float = 1.9
    iterations: int = 2

    def __post_init__(self):
        if self.N < 2 or self.dt <= 0:
            raise ValueError("need N >= 2 and dt > 0")
        weights = (self.w_lon, self.w_lat, self.w_heading, self.w_speed, self.w_a, self.w_steer)
        if min(weights) < 0:
            raise ValueError("weights must be non-negative")
        if max(weights[:4]) <= 0:
            raise ValueError("at least one state weight must be positive")


def _deriv(x, u, L):
    v = x[..., 3]
    th = x[..., 2]
    return np.stack([v * np.cos(th), v * np.sin(th), v * np.tan(u[..., 1]) / L, u[..., 0]], axis=-1)


def _rk4(x, u, dt, L):
    k1 = _deriv(x, u, L)
    k2 = _deriv(x + 0.5 * dt * k1, u, L)
    k3 = _deriv(x + 0.5 * dt * k2, u, L)
    k4 = _deriv(x + dt * k3, u, L)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step(x, u, dt, L=WHEELBASE):
    """Vectorised RK4 step on ``[x, y, heading, v]`` arrays.

    When braking would drive the speed negative the step is split at the
    instant the vehicle comes to rest and the remainder is spent standing still.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v, a = x[..., 3], u[..., 0]
    stop = (a < 0) & (v + a * dt < 0)
    if not np.any(stop):
        return _rk4(x, u, dt, L)
    t_stop = np.where(stop, np.where(a < 0, v / np.where(a < 0, -a, 1.0), dt), dt)
    out = _rk4(x, u, np.where(stop, t_stop, dt)[..., None], L)
    out[..., 3] = np.where(stop, 0.0, out[..., 3])
    return out


def _rk4_scalar(x, y, th, v, a, steer, dt, L):
    # scalar twin of rk4_step; the closed loop calls it thousands of times
    if a < 0 and v + a * dt < 0:
        dt = v / -a
        stopped = True
    else:
        stopped = False
    w = math.tan(steer) / L

    def f(th_, v_):
        return v_ * math.cos(th_), v_ * math.sin(th_), v_ * w

    k1 = f(th, v)
    k2 = f(th + 0.5 * dt * k1[2], v + 0.5 * dt * a)
    k3 = f(th + 0.5 * dt * k2[2], v + 0.5 * dt * a)
    k4 = f(th + dt * k3[2], v + dt * a)
    x += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    y += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    th += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    v = 0.0 if stopped else v + dt * a
    return x, y, th, v


def bicycle_step(state: VehicleState, cmd: ControlCommand, dt: float) -> VehicleState:
    if not 0 < dt <= 0.1 + 1e-12:
        raise ValueError("dt must lie in (0, 0.1]")
    steer = min(max(cmd.steer, -MAX_STEER), MAX_STEER)
    x, y, th, v = _rk4_scalar(state.x, state.y, state.heading, state.v, cmd.a, steer, dt, state.wheelbase)
    return VehicleState(x, y, th, max(v, 0.0), steer, state.wheelbase)


def reference_window(traj, t_now: float, N: int, dt: float):
    """Reference states ``(N+1, 4)`` and feed-forward inputs ``(N, 2)``; the
    last trajectory sample is held beyond its end."""
    times = t_now + np.arange(N + 1) * dt
    tt = np.clip(times, traj.t[0], traj.t[-1])
    heading = np.unwrap(traj.heading)
    xr = np.stack(
        [
            np.interp(tt, traj.t, traj.xy[:, 0]),
            np.interp(tt, traj.t, traj.xy[:, 1]),
            np.interp(tt, traj.t, heading),
            np.interp(tt, traj.t, traj.v),
        ],
        axis=1,
    )
    past = times > traj.t[-1] + 1e-9
    a_ref = np.where(past, 0.0, np.interp(tt, traj.t, traj.a))[:-1]
    kap = np.interp(tt, traj.t, traj.kappa)[:-1]
    ur = np.stack([a_ref, np.arctan(WHEELBASE * kap)], axis=1)
    return xr, ur


def _linearize(xbar, ubar, dt, L, eps=1e-6):
    """Central-difference Jacobians of the RK4 step at every horizon point."""
    n = len(ubar)
    dx = np.concatenate([np.eye(4), -np.eye(4), np.zeros((4, 4))]) * eps
    du = np.concatenate([np.zeros((8, 2)), np.eye(2), -np.eye(2)]) * eps
    out = _rk4(xbar[None] + dx[:, None], ubar[None] + du[:, None], dt, L)
    A = ((out[0:4] - out[4:8]) / (2 * eps)).transpose(1, 2, 0)
    B = ((out[8:10] - out[10:12]) / (2 * eps)).transpose(1, 2, 0)
    return A, B


def _rollout(x0, U, dt, L):
    xs = [tuple(float(c) for c in x0)]
    for a, steer in U.tolist():
        xs.append(_rk4_scalar(*xs[-1], a, steer, dt, L))
    return np.array(xs)


def tracking_cost(X, U, xr, ur, p: MpcParams) -> float:
    """Stage cost shared by the solver and by test oracles."""
    th = xr[1:, 2]
    dx = X[1:, 0] - xr[1:, 0]
    dy = X[1:, 1] - xr[1:, 1]
    lon = np.cos(th) * dx + np.sin(th) * dy
    lat = -np.sin(th) * dx + np.cos(th) * dy
    eh = wrap_angle(X[1:, 2] - xr[1:, 2])
    ev = X[1:, 3] - xr[1:, 3]
    du = U - ur
    return float(
        np.sum(p.w_lon * lon**2 + p.w_lat * lat**2 + p.w_heading * eh**2 + p.w_speed * ev**2)
        + np.sum(p.w_a * du[:, 0] ** 2 + p.w_steer * du[:, 1] ** 2)
    )


def solve_mpc(x0, xr, ur, p: MpcParams, steer_prev=0.0, a_prev=None, L=WHEELBASE, rate_limits=True):
    """Optimal input sequence ``(N, 2)`` by successive linearisation."""
    N, dt = len(ur), p.dt
    xr = xr.copy()
    x0 = np.asarray(x0, dtype=float).copy()
    # keep headings on the same branch as the vehicle
    xr[:, 2] = x0[2] + wrap_angle(xr[:, 2] - x0[2])
    xr[:, 2] = np.unwrap(xr[:, 2])
    U = ur.copy()
    U[:, 0] = np.clip(U[:, 0], -MAX_ACCEL, MAX_ACCEL)
    U[:, 1] = np.clip(U[:, 1], -MAX_STEER, MAX_STEER)
    nu = 2 * N
    # constant pieces: weights and constraint rows on u
    Wu = np.tile([p.w_a, p.w_steer], N)
    D = np.eye(N) - np.eye(N, k=-1)
    for _ in range(p.iterations):
        X = _rollout(x0, U, dt, L)
        A, B = _linearize(X[:-1], U, dt, L)
        # state deviations: dX[k+1] = A_k dX[k] + B_k dU[k], dX[0] = 0
        G = np.zeros((N + 1, 4, nu))
        for k in range(N):
            G[k + 1] = A[k] @ G[k]
            G[k + 1][:, 2 * k : 2 * k + 2] += B[k]
        th = xr[1:, 2]
        c, s = np.cos(th), np.sin(th)
        Q = np.zeros((N, 4, 4))
        Q[:, 0, 0] = p.w_lon * c * c + p.w_lat * s * s
        Q[:, 1, 1] = p.w_lon * s * s + p.w_lat * c * c
        Q[:, 0, 1] = Q[:, 1, 0] = (p.w_lon - p.w_lat) * c * s
        Q[:, 2, 2] = p.w_heading
        Q[:, 3, 3] = p.w_speed
        e = X[1:] - xr[1:]
        e[:, 2] = wrap_angle(e[:, 2])
        QG = np.einsum("kij,kjn->kin", Q, G[1:])
        H = np.einsum("kim,kin->mn", G[1:], QG)
        f = np.einsum("kin,ki->n", QG, e)
        du_bar = (U - ur).ravel()
        H += np.diag(Wu)
        f += Wu * du_bar
        H = 0.5 * (H + H.T) + 1e-9 * np.eye(nu)
        # constraints on absolute inputs u = U + dU
        Ua, Us = U[:, 0], U[:, 1]
        Sa = np.zeros((N, nu))
        Sa[np.arange(N), 2 * np.arange(N)] = 1.0
        Ss = np.zeros((N, nu))
        Ss[np.arange(N), 2 * np.arange(N) + 1] = 1.0
        rows = [Sa, -Sa, Ss, -Ss]
        rhs = [MAX_ACCEL - Ua, MAX_ACCEL + Ua, MAX_STEER - Us, MAX_STEER + Us]
        rate = MAX_STEER_RATE * dt
        first = np.zeros(N)
        first[0] = steer_prev
        ds_bar = D @ Us - first
        rows += [D @ Ss, -(D @ Ss)]
        rhs += [rate - ds_bar, rate + ds_bar]
        if rate_limits and a_prev is not None:
            jmax = p.jerk_max * dt
            first_a = np.zeros(N)
            first_a[0] = a_prev
            da_bar = D @ Ua - first_a
            rows += [D @ Sa, -(D @ Sa)]
            rhs += [jmax - da_bar, jmax + da_bar]
        # non-negative predicted speed
        rows.append(-G[1:, 3, :])
        rhs.append(X[1:, 3])
        A_in = np.vstack(rows)
        b_in = np.concatenate(rhs)
        try:
            res = solve_qp(H, f, A_in=A_in, b_in=b_in)
        except QPInfeasible as exc:
            raise SolverFailure(str(exc)) from exc
        U = U + res.x.reshape(N, 2)
    return U


def mpc_track(state: VehicleState, traj, p: MpcParams = MpcParams(), t_now: float = 0.0, a_prev: float | None = None) -> ControlCommand:
    """First input of the tracking problem; falls back to a gentle brake with
    the steering held when no solution exists."""
    xr, ur = reference_window(traj, t_now, p.N, p.dt)
    x0 = state.as_array()
    relaxed = False
    try:
        U = solve_mpc(x0, xr, ur, p, state.steer, a_prev, state.wheelbase)
    except SolverFailure:
        try:
            U = solve_mpc(x0, xr, ur, p, state.steer, None, state.wheelbase)
            relaxed = True
        except SolverFailure:
            return ControlCommand(-1.0, state.steer, solver_failure=True)
    cmd = ControlCommand(float(U[0, 0]), float(U[0, 1]), relaxed=relaxed)
    return cmd.clamped(state.steer, p.dt)
