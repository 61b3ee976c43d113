"""Speed planning: exact layered search on the s-t graph, then a jerk-optimal
piecewise-cubic refinement solved as a small convex QP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..qp import QPInfeasible, solve_qp
from .stgraph import STGraph

ACCELERATIONS = (-1.5, -0.75, 0.0, 0.75, 1.5)
A_MAX = 1.2
JERK_MAX = 2.0
STOP_DECEL = 1.0


class Infeasible(RuntimeError):
    """No admissible sequence survives every layer."""


@dataclass(frozen=True)
class SearchConfig:
    w_t: float = 1.0
    w_a: float = 0.1
    accelerations: tuple = ACCELERATIONS
    stop_decel: float = STOP_DECEL

    def __post_init__(self):
        acc = np.asarray(self.accelerations)
        if acc.size < 2 or acc[0] >= 0 or acc[-1] <= 0 or np.any(np.diff(acc) <= 0):
            raise ValueError("accelerations must be increasing and straddle zero")
        unit = acc[acc > 0].min()
        if not np.allclose(acc / unit, np.round(acc / unit)):
            raise ValueError("accelerations must be integer multiples of a common unit")


@dataclass(frozen=True)
class CoarseProfile:
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray  # acceleration held over each step, len = layers - 1
    cost: float

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def s_at(self, t):
        """Exact position under piecewise-constant acceleration."""
        t = np.asarray(t, dtype=float)
        dt = self.t[1] - self.t[0]
        k = np.clip(np.floor(t / dt + 1e-9).astype(int), 0, len(self.a) - 1)
        tau = t - self.t[k]
        return self.s[k] + self.v[k] * tau + 0.5 * self.a[k] * tau**2

    def v_at(self, t):
        t = np.asarray(t, dtype=float)
        dt = self.t[1] - self.t[0]
        k = np.clip(np.floor(t / dt + 1e-9).astype(int), 0, len(self.a) - 1)
        return np.maximum(self.v[k] + self.a[k] * (t - self.t[k]), 0.0)


def search_speed_profile(
    graph: STGraph,
    limits: np.ndarray,
    v0: float,
    *,
    s_stop: float | None = None,
    cfg: SearchConfig = SearchConfig(),
) -> CoarseProfile:
    """Minimum-cost acceleration sequence through the layered graph.

    States live on an integer lattice so merging is exact: speed is
    ``v0 + m*u*dt`` (or ``m*u*dt`` after a snap stop) and position is
    ``p*v0*dt/2 + n*u*dt^2/2``. The snap stop brakes to rest within one step
    when the lattice cannot hit zero exactly. Cost is ``w_t`` times the
    terminal shortfall plus ``w_a`` times the sum of squared accelerations.

    A narrow beam pass supplies an upper bound; the exact pass then drops
    states whose optimistic completion cannot beat it, which never removes
    an optimal sequence.
    """
    if v0 < 0:
        raise ValueError("v0 must be non-negative")
    limits = np.asarray(limits, dtype=float)
    if limits.shape != (graph.n_cells,):
        raise ValueError("need one speed limit per cell")
    if graph.occupied[0, graph.cell_of(0.0)]:
        raise Infeasible("start cell occupied")
    search = _LatticeSearch(graph, limits, v0, s_stop, cfg)
    try:
        ub = search.run(beam=64)[0]
    except Infeasible:
        ub = np.inf
    total, accs = search.run(ub=ub)
    dt = graph.dt
    n_layers = len(graph.t)
    v_seq = np.empty(n_layers)
    s_seq = np.empty(n_layers)
    v_seq[0], s_seq[0] = v0, 0.0
    for k, ak in enumerate(accs):
        s_seq[k + 1] = s_seq[k] + v_seq[k] * dt + 0.5 * ak * dt * dt
        v_seq[k + 1] = max(v_seq[k] + ak * dt, 0.0)
    return CoarseProfile(graph.t.copy(), s_seq, v_seq, accs, total)


class _LatticeSearch:
    def __init__(self, graph, limits, v0, s_stop, cfg):
        self.graph, self.limits, self.v0, self.s_stop, self.cfg = graph, limits, v0, s_stop, cfg
        dt, ds = graph.dt, graph.ds
        acc = np.asarray(cfg.accelerations, dtype=float)
        self.acc = acc
        self.unit = float(acc[acc > 0].min())
        self.q_alpha = np.round(acc / self.unit).astype(np.int64)
        self.goal = graph.s_end if s_stop is None else min(s_stop, graph.s_end)
        self.vel_unit = self.unit * dt
        self.pos_unit = self.unit * dt * dt / 2.0
        self.v0_half = v0 * dt / 2.0
        finite = limits[np.isfinite(limits)]
        v_reach = v0 + acc[-1] * dt * (len(graph.t) - 1)
        if finite.size == limits.size:
            v_reach = min(v_reach, max(v0, float(finite.max())))
        self.v_reach = v_reach
        # prefix counts of occupied cells per layer
        self.occ_cum = np.concatenate(
            [np.zeros((len(graph.t), 1), dtype=np.int64), np.cumsum(graph.occupied, axis=1)], axis=1
        )
        self.max_span = min(int(np.ceil((v_reach * dt + acc[-1] * dt * dt) / ds)) + 2, graph.n_cells)
        # span_min[k, c] is the smallest limit over cells c .. c+k
        span_min = np.empty((self.max_span + 1, graph.n_cells))
        span_min[0] = limits
        for k in range(1, self.max_span + 1):
            span_min[k] = np.minimum(span_min[k - 1], limits[np.minimum(np.arange(graph.n_cells) + k, graph.n_cells - 1)])
        self.span_min = span_min

    def speed(self, k):
        return np.where(k[:, 0] == 0, self.v0, 0.0) + k[:, 2] * self.vel_unit

    def pos(self, k):
        return k[:, 1] * self.v0_half + k[:, 3] * self.pos_unit

    def lower_bound(self, cost, v, s, remaining):
        """Cost so far plus the shortfall left after flat-out acceleration."""
        horizon = remaining * self.graph.dt
        a = self.acc[-1]
        vcap = np.maximum(v, self.v_reach)
        t_acc = np.clip((vcap - v) / a, 0.0, horizon)
        reach = s + v * t_acc + 0.5 * a * t_acc**2 + vcap * (horizon - t_acc)
        return cost + self.cfg.w_t * np.maximum(0.0, self.goal - reach)

    def run(self, beam=None, ub=np.inf):
        g, cfg, acc = self.graph, self.cfg, self.acc
        dt, s_end, s_stop = g.dt, g.s_end, self.s_stop
        n_layers = len(g.t)
        occ_cum, limits = self.occ_cum, self.limits
        # columns: phase, p, m, n
        keys = np.zeros((1, 4), dtype=np.int64)
        cost = np.zeros(1)
        history = []
        for layer in range(n_layers - 1):
            ns = len(keys)
            v = self.speed(keys)
            s = self.pos(keys)
            na = len(self.q_alpha)
            src = np.repeat(np.arange(ns), na)
            q = np.tile(self.q_alpha, ns)
            nk = keys[src].copy()
            nk[:, 2] += q
            nk[:, 3] += 2 * keys[src, 2] + q
            nk[:, 1] += np.where(keys[src, 0] == 0, 2, 0)
            a = q * self.unit
            # snap stop from the v0-offset lattice
            snap = np.flatnonzero((keys[:, 0] == 0) & (v > 0.0) & (v <= -acc[0] * dt + 1e-12))
            if snap.size:
                sk = keys[snap].copy()
                sk[:, 0] = 1
                sk[:, 1] += 1
                sk[:, 3] += sk[:, 2]
                sk[:, 2] = 0
                src = np.concatenate([src, snap])
                nk = np.concatenate([nk, sk])
                a = np.concatenate([a, -v[snap] / dt])
            v_new = self.speed(nk)
            s_new = self.pos(nk)
            v_src, s_src = v[src], s[src]
            ok = (v_new >= -1e-12) & (s_new <= s_end + 1e-9)
            if s_stop is not None:
                ok &= (s_new <= s_stop + 1e-9) & (
                    s_new + np.maximum(v_new, 0) ** 2 / (2 * cfg.stop_decel) <= s_stop + 1e-9
                )
            c0 = g.cell_of(s_src)
            c1 = g.cell_of(np.minimum(s_new, s_end))
            blocked = (occ_cum[layer, c1 + 1] - occ_cum[layer, c0] > 0) | (
                occ_cum[layer + 1, c1 + 1] - occ_cum[layer + 1, c0] > 0
            )
            span = c1 - c0
            # spans beyond max_span are never checked, so treat them as inadmissible
            ok &= span <= self.max_span
            lim = self.span_min[np.minimum(span, self.max_span), c0]
            ok &= ~blocked & (np.maximum(v_src, v_new) <= lim + 1e-9)
            c = cost[src] + cfg.w_a * a * a
            remaining = n_layers - 2 - layer
            lb = self.lower_bound(c, v_new, s_new, remaining)
            if np.isfinite(ub):
                ok &= lb <= ub + 1e-9 * max(1.0, abs(ub))
            keep = np.flatnonzero(ok)
            if keep.size == 0:
                raise Infeasible(f"no admissible move out of layer {layer}")
            nk, src, a, c, lb = nk[keep], src[keep], a[keep], c[keep], lb[keep]
            lo_k = nk.min(axis=0)
            span = nk.max(axis=0) - lo_k + 1
            code = (((nk[:, 0] - lo_k[0]) * span[1] + nk[:, 1] - lo_k[1]) * span[2] + nk[:, 2] - lo_k[2]) * span[
                3
            ] + nk[:, 3] - lo_k[3]
            order = np.lexsort((c, code))
            sc = code[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = sc[1:] != sc[:-1]
            pick = order[first]
            if beam is not None and len(pick) > beam:
                pick = pick[np.lexsort((code[pick], lb[pick]))[:beam]]
            history.append((src[pick], a[pick]))
            keys, cost = nk[pick], c[pick]

        s_final = self.pos(keys)
        total = cost + cfg.w_t * (self.goal - s_final)
        best = int(np.lexsort((-s_final, total))[0])
        idx = best
        accs = []
        for src, a in reversed(history):
            accs.append(a[idx])
            idx = src[idx]
        return float(total[best]), np.array(accs[::-1])


def full_stop_profile(v0: float, T: float = 8.0, dt: float = 0.5, decel: float = STOP_DECEL) -> CoarseProfile:
    """Constant deceleration to rest, then hold."""
    n = int(round(T / dt))
    t = np.arange(n + 1) * dt
    v = np.maximum(v0 - decel * t, 0.0)
    a = np.diff(v) / dt
    s = np.concatenate([[0.0], np.cumsum(v[:-1] * dt + 0.5 * a * dt * dt)])
    return CoarseProfile(t, s, v, a, float("nan"))


# ---------------------------------------------------------------------------
# QP refinement


@dataclass(frozen=True)
class RefineConfig:
    w_ref: float = 0.5
    a_max: float = A_MAX
    jerk_max: float = JERK_MAX
    colloc_dt: float = 0.1
    window: float = 3.0


@dataclass
class SpeedProfile:
    """Piecewise cubic ``s(t)``; segment ``i`` has constant jerk ``jerk[i]``."""

    knots: np.ndarray
    s0: np.ndarray  # s, v, a at each knot
    v0: np.ndarray
    a0: np.ndarray
    jerk: np.ndarray
    fallback: bool = False
    objective: float = float("nan")

    @property
    def duration(self) -> float:
        return float(self.knots[-1])

    def _seg(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.jerk) - 1)
        return i, t - self.knots[i]

    def s_at(self, t):
        i, tau = self._seg(t)
        return self.s0[i] + self.v0[i] * tau + self.a0[i] * tau**2 / 2 + self.jerk[i] * tau**3 / 6

    def v_at(self, t):
        i, tau = self._seg(t)
        return self.v0[i] + self.a0[i] * tau + self.jerk[i] * tau**2 / 2

    def a_at(self, t):
        i, tau = self._seg(t)
        return self.a0[i] + self.jerk[i] * tau

    def jerk_at(self, t):
        i, _ = self._seg(t)
        return self.jerk[i]

    def end_state(self, i):
        """``(s, v, a)`` at the right end of segment ``i`` from its own polynomial."""
        h = self.knots[i + 1] - self.knots[i]
        j = self.jerk[i]
        return (
            self.s0[i] + self.v0[i] * h + self.a0[i] * h * h / 2 + j * h**3 / 6,
            self.v0[i] + self.a0[i] * h + j * h * h / 2,
            self.a0[i] + j * h,
        )


def profile_from_jerk(knots, s_init, v_init, a_init, jerk, **kw) -> SpeedProfile:
    n = len(jerk)
    s0, v0, a0 = np.empty(n), np.empty(n), np.empty(n)
    s, v, a = s_init, v_init, a_init
    for i in range(n):
        s0[i], v0[i], a0[i] = s, v, a
        h = knots[i + 1] - knots[i]
        s, v, a = s + v * h + a * h * h / 2 + jerk[i] * h**3 / 6, v + a * h + jerk[i] * h * h / 2, a + jerk[i] * h
    return SpeedProfile(np.asarray(knots, dtype=float), s0, v0, a0, np.asarray(jerk, dtype=float), **kw)


def profile_from_coarse(coarse: CoarseProfile, a_init: float | None = None) -> SpeedProfile:
    """Exact piecewise-quadratic representation of a coarse profile (flagged)."""
    n = len(coarse.a)
    return SpeedProfile(coarse.t.copy(), coarse.s[:-1].copy(), coarse.v[:-1].copy(), coarse.a.copy(), np.zeros(n), fallback=True)


def jerk_maps(knots, times):
    """Affine maps ``x(t) = M @ jerk + base`` for s, v, a given unit initial state.

    Returns ``(Ms, Mv, Ma)`` and a function producing the base terms from the
    initial ``(s0, v0, a0)``.
    """
    knots = np.asarray(knots, dtype=float)
    times = np.asarray(times, dtype=float)
    n = len(knots) - 1
    seg = np.clip(np.searchsorted(knots, times, side="right") - 1, 0, n - 1)
    tau = times - knots[seg]
    Ms = np.zeros((len(times), n))
    Mv = np.zeros((len(times), n))
    Ma = np.zeros((len(times), n))
    h = np.diff(knots)
    for r, (i, tt) in enumerate(zip(seg, tau)):
        # earlier segments contribute through the state they hand over
        for p in range(i):
            rem = knots[i] - knots[p + 1] + tt
            hp = h[p]
            a_p = hp
            v_p = hp * hp / 2
            s_p = hp**3 / 6
            Ms[r, p] = s_p + v_p * rem + a_p * rem * rem / 2
            Mv[r, p] = v_p + a_p * rem
            Ma[r, p] = a_p
        Ms[r, i] = tt**3 / 6
        Mv[r, i] = tt * tt / 2
        Ma[r, i] = tt

    def base(s0, v0, a0):
        return (s0 + v0 * times + a0 * times**2 / 2, v0 + a0 * times, np.full(times.shape, a0))

    return Ms, Mv, Ma, base


def _window_min(values_at, s_grid, lo, hi):
    """Minimum of a per-node array over ``[lo, hi]`` (node grid ``s_grid``)."""
    values_at = np.asarray(values_at, dtype=float)
    ds = s_grid[1] - s_grid[0]
    last = len(values_at) - 1
    i0 = np.clip(np.floor(np.asarray(lo) / ds + 1e-9), 0, last)[:, None]
    i1 = np.clip(np.ceil(np.asarray(hi) / ds - 1e-9), 0, last)[:, None]
    idx = np.arange(len(values_at))[None, :]
    return np.where((idx >= i0) & (idx <= i1), values_at[None, :], np.inf).min(axis=1)


def free_intervals(graph: STGraph, t, s) -> tuple:
    """Largest unoccupied s-interval around each ``s[r]`` at the layers bracketing ``t[r]``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    last = len(graph.t) - 1
    k0 = np.clip(np.floor(t / graph.dt + 1e-9), 0, last).astype(int)
    k1 = np.clip(np.ceil(t / graph.dt - 1e-9), 0, last).astype(int)
    occ = graph.occupied[k0] | graph.occupied[k1]
    c = graph.cell_of(s)[:, None]
    idx = np.arange(graph.n_cells)[None, :]
    ahead = np.where(occ & (idx >= c), idx, graph.n_cells).min(axis=1)
    behind = np.where(occ & (idx <= c), idx, -1).max(axis=1)
    hi = np.where(ahead < graph.n_cells, graph.s_nodes[np.minimum(ahead, graph.n_cells - 1)], graph.s_end)
    lo = np.where(behind >= 0, graph.s_nodes[behind + 1], -np.inf)
    return lo, hi


def free_interval(graph: STGraph, t: float, s: float) -> tuple:
    """Largest unoccupied s-interval around ``s`` at the layers bracketing ``t``."""
    lo, hi = free_intervals(graph, [t], [s])
    return float(lo[0]), float(hi[0])


def refine_speed_qp(
    coarse: CoarseProfile,
    node_limits: np.ndarray,
    graph: STGraph,
    *,
    a0: float = 0.0,
    stop_at: float | None = None,
    stop_knot: int | None = None,
    cfg: RefineConfig = RefineConfig(),
) -> SpeedProfile:
    """Minimum-jerk cubic profile near the coarse one.

    ``node_limits`` gives the speed limit at each graph node. At each
    collocation time the position is kept within ``cfg.window`` of the coarse
    one and inside the free corridor, and the speed below the smallest limit
    over that window. ``stop_at`` adds ``v(T)=0, a(T)=0, s(T)=stop_at``;
    with ``stop_knot`` the rest state is reached at that knot and held, at
    ``stop_at`` if given and anywhere otherwise.
    Falls back to the coarse profile (flagged) when the QP is infeasible.
    """
    knots = coarse.t
    n = len(knots) - 1
    h = np.diff(knots)
    v0 = float(coarse.v[0])
    T = float(knots[-1])
    m = int(round(T / cfg.colloc_dt))
    tc = np.arange(1, m + 1) * cfg.colloc_dt
    Ms, Mv, Ma, base = jerk_maps(knots, tc)
    bs, bv, ba = base(0.0, v0, a0)
    Mk, _, _, base_k = jerk_maps(knots, knots[1:])
    bk = base_k(0.0, v0, a0)[0]

    s_ref_k = coarse.s[1:]
    G = 2.0 * np.diag(h) + 2.0 * cfg.w_ref * Mk.T @ Mk
    g = 2.0 * cfg.w_ref * Mk.T @ (bk - s_ref_k)

    s_c = coarse.s_at(tc)
    lo = np.maximum(s_c - cfg.window, 0.0)
    hi = np.minimum(s_c + cfg.window, graph.s_end)
    f_lo, f_hi = free_intervals(graph, tc, s_c)
    lo = np.maximum(lo, f_lo)
    hi = np.minimum(hi, f_hi)
    vlim = _window_min(np.asarray(node_limits, dtype=float), graph.s_nodes, lo, hi)
    a_bound = np.maximum(cfg.a_max, abs(a0) - cfg.jerk_max * tc)
    rows = [Mv, -Mv, Ma, -Ma, Ms, -Ms, np.eye(n), -np.eye(n)]
    rhs = [
        vlim - bv,
        bv,
        a_bound - ba,
        a_bound + ba,
        hi - bs,
        bs - lo,
        np.full(n, cfg.jerk_max),
        np.full(n, cfg.jerk_max),
    ]
    A_in = np.vstack(rows)
    b_in = np.concatenate(rhs)
    finite = np.isfinite(b_in)
    A_in, b_in = A_in[finite], b_in[finite]
    A_eq = b_eq = None
    if stop_at is not None or stop_knot is not None:
        k = n if stop_knot is None else int(np.clip(stop_knot, 1, n))
        MsT, MvT, MaT, baseT = jerk_maps(knots, knots[k : k + 1])
        sT, vT, aT = baseT(0.0, v0, a0)
        held = np.eye(n)[k:]
        A_eq = np.vstack([MvT, MaT, held])
        b_eq = np.concatenate([[-vT[0], -aT[0]], np.zeros(len(held))])
        if stop_at is not None:
            A_eq = np.vstack([MsT, A_eq])
            b_eq = np.concatenate([[stop_at - sT[0]], b_eq])
    try:
        res = solve_qp(G, g, A_eq, b_eq, A_in, b_in)
    except QPInfeasible:
        return profile_from_coarse(coarse)
    const = cfg.w_ref * float(np.sum((bk - s_ref_k) ** 2))
    return profile_from_jerk(knots, 0.0, v0, a0, res.x, objective=res.objective + const)
