"""Local-polytope LP relaxation solved by alternating-directions dual decomposition.

The graph is split into edge factors.  Node potentials are spread evenly over
incident edges, each edge keeps its own joint marginal ``q_e`` and agreement
with the shared node marginals ``p_i`` is enforced through an augmented
Lagrangian.  Each factor step is a small quadratic program over the
``L * L`` simplex, solved with accelerated projected gradient.

The reported objective is the Lagrangian dual value at the current
multipliers, which upper-bounds the LP optimum (and hence the integral
maximum) at every iteration, converged or not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from ..graph import FactorGraphInstance, ParameterVector, Potentials, potentials


@dataclass(frozen=True)
class RelaxedSolution:
    """Solution of the local-polytope relaxation.

    ``objective`` is a valid upper bound on the integral maximum.
    ``primal_objective`` is the LP value at the (nearly feasible) primal
    iterate and converges to ``objective`` from either side.
    """

    node_marginals: np.ndarray
    edge_marginals: np.ndarray
    objective: float
    primal_objective: float
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    multipliers: Optional[np.ndarray] = None

    def is_fractional(self, atol: float = 1e-4) -> bool:
        m = self.node_marginals
        return bool(np.any(np.minimum(np.abs(m), np.abs(1.0 - m)) > atol))

    def consistency_error(self, edges: np.ndarray) -> float:
        """Largest deviation between edge marginal sums and node marginals."""
        if edges.shape[0] == 0:
            return 0.0
        rows = self.edge_marginals.sum(axis=2) - self.node_marginals[edges[:, 0]]
        cols = self.edge_marginals.sum(axis=1) - self.node_marginals[edges[:, 1]]
        return float(max(np.abs(rows).max(), np.abs(cols).max()))


@nb.njit(cache=True, nogil=True)
def _project_simplex(v, out):
    n = v.size
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(n):
        css += u[k]
        t = (css - 1.0) / (k + 1)
        if u[k] - t > 0.0:
            theta = t
    for k in range(n):
        x = v[k] - theta
        out[k] = x if x > 0.0 else 0.0


@nb.njit(cache=True, nogil=True)
def _factor_qp(w, a, b, eta, q, inner_iters, inner_tol):
    # minimise eta/2 (|rowsum(q) - a|^2 + |colsum(q) - b|^2) - <w, q> over the simplex
    L = a.size
    n = L * L
    step = 1.0 / (2.0 * L * eta)
    x = q.copy()
    y = q.copy()
    x_new = np.empty(n)
    v = np.empty(n)
    rs = np.empty(L)
    cs = np.empty(L)
    t = 1.0
    for _ in range(inner_iters):
        for r in range(L):
            rs[r] = 0.0
            cs[r] = 0.0
        for r in range(L):
            for c in range(L):
                rs[r] += y[r * L + c]
                cs[c] += y[r * L + c]
        for r in range(L):
            for c in range(L):
                k = r * L + c
                g = eta * ((rs[r] - a[r]) + (cs[c] - b[c])) - w[k]
                v[k] = y[k] - step * g
        _project_simplex(v, x_new)
        delta = 0.0
        restart = 0.0
        for k in range(n):
            d = x_new[k] - x[k]
            if abs(d) > delta:
                delta = abs(d)
            restart += (y[k] - x_new[k]) * d
        if restart > 0.0:
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        for k in range(n):
            y[k] = x_new[k] + mom * (x_new[k] - x[k])
            x[k] = x_new[k]
        t = t_new
        if delta < inner_tol:
            break
    for k in range(n):
        q[k] = x[k]


@nb.njit(cache=True, nogil=True)
def _dual_value(w, edges, lam, deg, L):
    E = edges.shape[0]
    N = deg.size
    total = 0.0
    node_sum = np.zeros((N, L))
    for e in range(E):
        i = edges[e, 0]
        j = edges[e, 1]
        best = -np.inf
        for r in range(L):
            for c in range(L):
                val = w[e, r * L + c] + lam[e, 0, r] + lam[e, 1, c]
                if val > best:
                    best = val
        total += best
        for r in range(L):
            node_sum[i, r] += lam[e, 0, r]
            node_sum[j, r] += lam[e, 1, r]
    for i in range(N):
        if deg[i] == 0:
            continue
        best = -np.inf
        for r in range(L):
            if -node_sum[i, r] > best:
                best = -node_sum[i, r]
        total += best
    return total


@nb.njit(cache=True, nogil=True)
def _ad3(w, edges, deg, p, q, lam, eta, max_iters, tol, inner_iters):
    """Run the ADMM loop in place; returns (iterations, converged, r, s, best_dual)."""
    E = edges.shape[0]
    N = p.shape[0]
    L = p.shape[1]
    a = np.empty(L)
    b = np.empty(L)
    p_old = np.empty((N, L))
    rows = np.empty((E, L))
    cols = np.empty((E, L))
    best_dual = _dual_value(w, edges, lam, deg, L)
    inner_tol = min(1e-3 * tol, 1e-11)
    it = 0
    converged = False
    r_norm = np.inf
    s_norm = np.inf
    while it < max_iters:
        it += 1
        for e in range(E):
            i = edges[e, 0]
            j = edges[e, 1]
            for k in range(L):
                a[k] = p[i, k] + lam[e, 0, k] / eta
                b[k] = p[j, k] + lam[e, 1, k] / eta
            _factor_qp(w[e], a, b, eta, q[e], inner_iters, inner_tol)
        for i in range(N):
            for k in range(L):
                p_old[i, k] = p[i, k]
                if deg[i] > 0:
                    p[i, k] = 0.0
        for e in range(E):
            i = edges[e, 0]
            j = edges[e, 1]
            for r in range(L):
                rows[e, r] = 0.0
                cols[e, r] = 0.0
            for r in range(L):
                for c in range(L):
                    rows[e, r] += q[e, r * L + c]
                    cols[e, c] += q[e, r * L + c]
            for k in range(L):
                p[i, k] += rows[e, k]
                p[j, k] += cols[e, k]
        for i in range(N):
            if deg[i] > 0:
                for k in range(L):
                    p[i, k] /= deg[i]
        r2 = 0.0
        for e in range(E):
            i = edges[e, 0]
            j = edges[e, 1]
            for k in range(L):
                di = rows[e, k] - p[i, k]
                dj = cols[e, k] - p[j, k]
                lam[e, 0, k] -= eta * di
                lam[e, 1, k] -= eta * dj
                r2 += di * di + dj * dj
        s2 = 0.0
        for i in range(N):
            for k in range(L):
                d = p[i, k] - p_old[i, k]
                s2 += deg[i] * d * d
        r_norm = np.sqrt(r2)
        s_norm = eta * np.sqrt(s2)
        dv = _dual_value(w, edges, lam, deg, L)
        if dv < best_dual:
            best_dual = dv
        if r_norm <= tol and s_norm <= tol:
            converged = True
            break
    return it, converged, r_norm, s_norm, best_dual


def solve_potentials(
    pot: Potentials,
    max_iters: int = 5000,
    tol: float = 1e-7,
    eta: float = 1.0,
    inner_iters: int = 200,
) -> RelaxedSolution:
    """Solve the local-polytope LP for explicit potential tables."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    N, L = pot.unary.shape
    edges = np.ascontiguousarray(pot.edges, dtype=np.int64).reshape(-1, 2)
    E = edges.shape[0]
    deg = np.bincount(edges.ravel(), minlength=N).astype(np.int64)
    unary = np.asarray(pot.unary, dtype=np.float64)

    # potentials of isolated nodes are solved in closed form
    isolated = deg == 0
    p = np.full((N, L), 1.0 / L)
    constant = 0.0
    if isolated.any():
        best = np.argmax(unary[isolated], axis=1)
        p[isolated] = 0.0
        p[np.flatnonzero(isolated), best] = 1.0
        constant = float(unary[isolated].max(axis=1).sum())

    if E == 0:
        return RelaxedSolution(p, np.zeros((0, L, L)), constant, constant, True, 0, 0.0, 0.0,
                               np.zeros((0, 2, L)))

    safe_deg = np.where(isolated, 1, deg).astype(np.float64)
    share = unary / safe_deg[:, None]
    w = np.asarray(pot.pairwise, dtype=np.float64) + share[edges[:, 0]][:, :, None] + share[edges[:, 1]][:, None, :]
    w = np.ascontiguousarray(w.reshape(E, L * L))
    q = np.full((E, L * L), 1.0 / (L * L))
    lam = np.zeros((E, 2, L))

    it, converged, r_norm, s_norm, dual = _ad3(w, edges, deg, p, q, lam, float(eta), int(max_iters), float(tol),
                                               int(inner_iters))
    primal = float((w * q).sum())
    return RelaxedSolution(
        node_marginals=p,
        edge_marginals=q.reshape(E, L, L),
        objective=float(dual) + constant,
        primal_objective=primal + constant,
        converged=bool(converged),
        iterations=int(it),
        primal_residual=float(r_norm),
        dual_residual=float(s_norm),
        multipliers=lam,
    )


def lp_relaxation(
    instance: FactorGraphInstance,
    params: ParameterVector,
    max_iters: int = 5000,
    tol: float = 1e-7,
) -> RelaxedSolution:
    """Local-polytope relaxation of MAP inference on ``instance``.

    Non-convergence is reported through ``converged``; ``objective`` is a
    valid upper bound either way.
    """
    return solve_potentials(potentials(instance, params), max_iters=max_iters, tol=tol)
