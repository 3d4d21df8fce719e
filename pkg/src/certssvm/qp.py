"""Restricted one-slack QP over a working set of joint constraints.

The dual

    max  sum_j a_j l_j - 1/2 |sum_j a_j d_j|^2   s.t.  a_j >= 0,  sum_j a_j <= C

is solved by pairwise coordinate ascent: an explicit slack multiplier turns
the budget into an equality, and each step moves mass between the most and
least attractive multipliers.  The primal is recovered as
``theta = sum_j a_j d_j`` and ``xi = max(0, max_j l_j - <theta, d_j>)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numba as nb
import numpy as np


class QPError(ValueError):
    pass


@dataclass
class JointConstraint:
    """One aggregated cutting plane ``<theta, delta_psi> >= loss_sum - xi``."""

    delta_psi: np.ndarray
    loss_sum: float
    origin: str = ""
    last_active_iteration: int = 0
    alpha: float = 0.0

    def violation(self, theta: np.ndarray) -> float:
        return float(self.loss_sum - theta @ self.delta_psi)

    def same_as(self, other: "JointConstraint", atol: float = 1e-10) -> bool:
        return abs(self.loss_sum - other.loss_sum) <= atol and bool(
            np.all(np.abs(self.delta_psi - other.delta_psi) <= atol)
        )


@dataclass(frozen=True)
class QPSolution:
    theta: np.ndarray
    xi: float
    alphas: np.ndarray
    objective: float
    dual_objective: float
    kkt_residual: float
    iterations: int


@nb.njit(cache=True)
def _smo(G, ell, alpha, tol, max_iter):
    m = ell.size
    g = ell - G @ alpha
    it = 0
    gap = np.inf
    while it < max_iter:
        i = 0
        for k in range(1, m):
            if g[k] > g[i]:
                i = k
        j = -1
        for k in range(m):
            if alpha[k] > 0.0 and (j < 0 or g[k] < g[j]):
                j = k
        gap = g[i] - g[j]
        if gap <= tol:
            break
        it += 1
        denom = G[i, i] + G[j, j] - 2.0 * G[i, j]
        if denom > 1e-300 and gap / denom < alpha[j]:
            delta = gap / denom
            alpha[j] -= delta
        else:
            delta = alpha[j]
            alpha[j] = 0.0
        alpha[i] += delta
        for k in range(m):
            g[k] -= delta * (G[k, i] - G[k, j])
        if it % 500 == 0:
            g = ell - G @ alpha
    return it, gap


def _dual(G, ell, x):
    return float(x @ ell - 0.5 * x @ G @ x)


def _face_step(G, ell, S, C):
    """Maximiser of the dual on the face ``{a_S : sum a_S = C}``.

    Returns ``(target, None)`` when the face problem has a maximiser, or
    ``(None, d)`` with a zero-curvature ascent direction ``d`` (``G_SS d = 0``,
    ``sum d = 0``, ``<l_S, d> > 0``) when it is unbounded.
    """
    k = S.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G[np.ix_(S, S)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.append(ell[S], C)
    U, sv, Vt = np.linalg.svd(K)
    rank = int(np.sum(sv > sv[0] * 1e-12))
    coef = (U[:, :rank].T @ rhs) / sv[:rank]
    sol = Vt[:rank].T @ coef
    null = Vt[rank:]
    leak = null @ rhs
    if null.shape[0] and np.abs(leak).max() > 1e-9 * max(1.0, np.abs(rhs).max()):
        d = (null.T @ leak)[:k]
        if d @ ell[S] > 0 and np.any(d < 0):
            return None, d
    return sol[:k], None


def _active_set(G, ell, alpha, C, tol, max_rounds):
    """Primal active-set refinement of ``alpha`` in place.

    Moves to the face maximiser when it is nonnegative, otherwise steps toward
    it (or along an unbounded ascent ray) until a multiplier reaches zero and
    drops it.  At a face optimum the most violating outside multiplier joins.
    Every step keeps ``alpha`` feasible and does not decrease the dual.
    """
    for _ in range(max_rounds):
        S = np.flatnonzero(alpha > 0)
        target, ray = _face_step(G, ell, S, C)
        cur = alpha[S]
        if ray is not None:
            neg = ray < 0
            t = float(np.min(cur[neg] / -ray[neg]))
            step = t * ray
        else:
            step = target - cur
            neg = target < 0
            if neg.any():
                t = float(np.min(cur[neg] / (cur[neg] - target[neg])))
                step = t * step
        cand = alpha.copy()
        cand[S] = cur + step
        cand[np.abs(cand) <= 1e-15 * C] = 0.0
        np.clip(cand, 0.0, None, out=cand)
        cand *= C / cand.sum()
        if _dual(G, ell, cand) >= _dual(G, ell, alpha):
            alpha[:] = cand
        if ray is not None or (target is not None and (target < 0).any()):
            continue
        g = ell - G @ alpha
        S = alpha > 0
        nu = g[S].max()
        outside = np.flatnonzero(~S)
        if outside.size == 0 or g[outside].max() <= nu + tol:
            return
        # the entering multiplier starts at zero; the next face solve moves it
        enter = outside[int(np.argmax(g[outside]))]
        j = np.flatnonzero(S)[int(np.argmin(g[S]))]
        denom = G[enter, enter] + G[j, j] - 2.0 * G[enter, j]
        delta = alpha[j] if denom <= 1e-300 else min(alpha[j], (g[enter] - g[j]) / denom)
        alpha[j] -= delta
        alpha[enter] += delta


def solve_restricted_qp(
    working_set: Sequence[JointConstraint],
    C: float,
    tol: float = 1e-8,
    dim: Optional[int] = None,
    alpha0: Optional[np.ndarray] = None,
    max_iter: int = 10_000_000,
) -> QPSolution:
    """Solve the one-slack QP restricted to ``working_set``.

    ``alpha0`` warm-starts the multipliers; it is rescaled if it violates the
    budget.  An empty working set gives ``theta = 0`` (``dim`` sets its size).
    """
    if not C > 0:
        raise QPError("C must be positive")
    m = len(working_set)
    if m == 0:
        z = np.zeros(dim or 0)
        return QPSolution(z, 0.0, np.zeros(0), 0.0, 0.0, 0.0, 0)
    D = np.stack([np.asarray(c.delta_psi, dtype=np.float64) for c in working_set])
    ell = np.array([c.loss_sum for c in working_set], dtype=np.float64)
    if dim is not None and D.shape[1] != dim:
        raise QPError(f"constraint dimension {D.shape[1]} does not match {dim}")
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(ell))):
        raise QPError("working set contains non-finite values")

    # index m is the slack multiplier: zero vector, zero loss
    G = np.zeros((m + 1, m + 1))
    G[:m, :m] = D @ D.T
    ell_ext = np.append(ell, 0.0)
    alpha = np.zeros(m + 1)
    if alpha0 is not None:
        a0 = np.clip(np.asarray(alpha0, dtype=np.float64)[:m], 0.0, None)
        s = a0.sum()
        if s > C:
            a0 *= C / s
        alpha[: a0.size] = a0
    alpha[m] = max(C - alpha[:m].sum(), 0.0)

    # coarse sweeps find the support, an active-set phase lands on the exact
    # optimum (sweeps alone converge only linearly on ill-conditioned faces),
    # and a final sweep certifies the KKT conditions.  The tolerance is
    # floored at the resolution of the gradient arithmetic.
    scale = max(1.0, float(np.abs(ell).max()), C * float(np.diag(G).max()))
    tol_eff = max(float(tol), 1e-14 * scale)
    coarse = max(tol_eff, 1e-6 * scale)
    iters, _ = _smo(G, ell_ext, alpha, coarse, int(max_iter))
    _active_set(G, ell_ext, alpha, C, tol_eff, 4 * (m + 1))
    more, _ = _smo(G, ell_ext, alpha, tol_eff, max(int(max_iter) - iters, 0))
    iters += more
    a = alpha[:m].copy()
    theta = a @ D
    viol = ell - D @ theta
    xi = max(0.0, float(viol.max()))
    half_norm = 0.5 * float(theta @ theta)
    g_full = np.append(viol, 0.0)
    support = alpha > 0
    kkt = float(g_full.max() - g_full[support].min()) if support.any() else 0.0
    return QPSolution(
        theta=theta,
        xi=xi,
        alphas=a,
        objective=half_norm + C * xi,
        dual_objective=float(a @ ell) - half_norm,
        kkt_residual=max(kkt, 0.0),
        iterations=int(iters),
    )


def prune_inactive(
    working_set: Sequence[JointConstraint], current_iteration: int, patience: int = 20
) -> list:
    """Drop constraints not active (alpha > 0) in the last ``patience`` solves.

    ``last_active_iteration`` must be refreshed after every solve; constraints
    active in the latest solve are therefore always kept.
    """
    if patience < 1:
        raise ValueError("patience must be >= 1")
    return [c for c in working_set if current_iteration - c.last_active_iteration < patience]


def mark_active(working_set: Sequence[JointConstraint], alphas: np.ndarray, iteration: int) -> None:
    for c, a in zip(working_set, alphas):
        if a > 0:
            c.last_active_iteration = iteration
