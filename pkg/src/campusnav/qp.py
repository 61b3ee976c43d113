"""Dense strictly-convex QP solver (Goldfarb-Idnani dual active set).

Solves::

    minimize    0.5 x'Gx + g'x
    subject to  A_eq x  = b_eq
                A_in x <= b_in

``G`` must be symmetric positive definite. Problems in this package are small
(tens of variables, a few hundred constraints), so the projection operators are
rebuilt densely at every iteration instead of being updated by QR downdates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class QPInfeasible(RuntimeError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    active: list
    iterations: int


def solve_qp(G, g, A_eq=None, b_eq=None, A_in=None, b_in=None, *, tol=1e-10, max_iter=None) -> QPResult:
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    A_in = np.zeros((0, n)) if A_in is None else np.atleast_2d(np.asarray(A_in, dtype=float))
    b_in = np.zeros(0) if b_in is None else np.atleast_1d(np.asarray(b_in, dtype=float))
    n_eq = A_eq.shape[0]

    # internal form: N_i' x >= c_i ; equalities first
    normals = np.vstack([A_eq, -A_in])
    rhs = np.concatenate([b_eq, -b_in])
    norms = np.linalg.norm(normals, axis=1)
    norms[norms == 0.0] = 1.0

    chol = cho_factor(G)
    G_inv = cho_solve(chol, np.eye(n))
    x = -G_inv @ g
    active: list[int] = []
    u = np.zeros(0)
    max_iter = max_iter or 20 * (n + normals.shape[0]) + 50
    iterations = 0
    pending_eq = list(range(n_eq))

    def operators():
        if not active:
            return G_inv, np.zeros((0, n))
        N = normals[active].T
        GN = G_inv @ N
        M = N.T @ GN
        N_star = np.linalg.solve(M, GN.T)
        return G_inv - GN @ N_star, N_star

    while True:
        # choose next constraint to add
        p = None
        if pending_eq:
            p = pending_eq.pop(0)
            if normals[p] @ x - rhs[p] > 0.0:
                normals[p], rhs[p] = -normals[p], -rhs[p]
            np_vec, cp = normals[p], rhs[p]
            slack = np_vec @ x - cp
            is_eq = True
        else:
            if normals.shape[0] > n_eq:
                slacks = (normals[n_eq:] @ x - rhs[n_eq:]) / norms[n_eq:]
                if active:
                    slacks[[a - n_eq for a in active if a >= n_eq]] = np.inf
                j = int(np.argmin(slacks))
                if slacks[j] < -tol:
                    p = n_eq + j
            if p is None:
                break
            np_vec, cp = normals[p], rhs[p]
            slack = np_vec @ x - cp
            is_eq = False

        u_plus = np.append(u, 0.0)
        while True:
            iterations += 1
            if iterations > max_iter:
                raise QPInfeasible("active-set iteration limit reached")
            H, N_star = operators()
            z = H @ np_vec
            r = N_star @ np_vec
            t1, k = np.inf, None
            for idx, a in enumerate(active):
                if a >= n_eq and r[idx] > 1e-14:
                    ratio = u_plus[idx] / r[idx]
                    if ratio < t1:
                        t1, k = ratio, idx
            zn = z @ np_vec
            if zn <= 1e-12 * max(1.0, np_vec @ np_vec):
                t2 = np.inf
            else:
                t2 = -slack / zn
            if is_eq and t2 == np.inf and abs(slack) <= 1e-9 * norms[p]:
                break  # redundant equality
            if t2 == np.inf and t1 == np.inf:
                raise QPInfeasible(f"constraint {p} cannot be satisfied")
            if t2 == np.inf:
                u_plus[:-1] -= t1 * r
                u_plus[-1] += t1
                del active[k]
                u_plus = np.delete(u_plus, k)
                continue
            t = min(t1, t2)
            x = x + t * z
            u_plus[:-1] -= t * r
            u_plus[-1] += t
            slack = np_vec @ x - cp
            if t == t2:
                active.append(p)
                u = u_plus.copy()
                break
            del active[k]
            u_plus = np.delete(u_plus, k)

    obj = 0.5 * x @ G @ x + g @ x
    return QPResult(x=x, objective=float(obj), active=list(active), iterations=iterations)
