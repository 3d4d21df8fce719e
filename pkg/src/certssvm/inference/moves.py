"""Greedy move-making MAP search (under-generating oracle).

Alternates single-node iterated conditional modes with expansion moves that
relabel a whole same-label connected region, or the whole graph, to a target
label ``alpha``.  A move is accepted only if it strictly improves the score,
so the trajectory of accepted values is increasing and the result never
scores below the initial labeling.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numba as nb
import numpy as np

from ..graph import FactorGraphInstance, ParameterVector, Potentials, potentials
from .result import OracleResult, Quality

_EPS = 1e-10


def adjacency(num_nodes: int, edges: np.ndarray):
    """CSR incidence lists: for node n, ``adj_edge[ptr[n]:ptr[n+1]]`` and the side n sits on."""
    E = edges.shape[0]
    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    eids = np.concatenate([np.arange(E), np.arange(E)])
    sides = np.concatenate([np.zeros(E, np.int64), np.ones(E, np.int64)])
    order = np.argsort(ends, kind="stable")
    ptr = np.zeros(num_nodes + 1, np.int64)
    np.cumsum(np.bincount(ends, minlength=num_nodes), out=ptr[1:])
    return ptr, eids[order].astype(np.int64), sides[order]


@nb.njit(cache=True, nogil=True)
def _total(U, P, edges, y):
    v = 0.0
    for n in range(U.shape[0]):
        v += U[n, y[n]]
    for e in range(edges.shape[0]):
        v += P[e, y[edges[e, 0]], y[edges[e, 1]]]
    return v


@nb.njit(cache=True, nogil=True)
def _descend(U, P, edges, ptr, adj_edge, adj_side, y, traj, eps):
    N, L = U.shape
    n_traj = 0
    value = _total(U, P, edges, y)
    traj[n_traj] = value
    n_traj += 1
    local = np.empty(L)
    cand = np.empty(N, np.int64)
    region = np.empty(N, np.int64)
    seen = np.zeros(N, np.bool_)
    improved = True
    while improved:
        improved = False
        # iterated conditional modes
        for n in range(N):
            for l in range(L):
                local[l] = U[n, l]
            for k in range(ptr[n], ptr[n + 1]):
                e = adj_edge[k]
                if adj_side[k] == 0:
                    other = y[edges[e, 1]]
                    for l in range(L):
                        local[l] += P[e, l, other]
                else:
                    other = y[edges[e, 0]]
                    for l in range(L):
                        local[l] += P[e, other, l]
            best = 0
            for l in range(1, L):
                if local[l] > local[best]:
                    best = l
            if local[best] > local[y[n]] + eps:
                y[n] = best
                value = _total(U, P, edges, y)
                if n_traj < traj.size:
                    traj[n_traj] = value
                    n_traj += 1
                improved = True
        # expansion moves toward each label
        for alpha in range(L):
            for n in range(N):
                cand[n] = alpha
            v = _total(U, P, edges, cand)
            if v > value + eps:
                for n in range(N):
                    y[n] = alpha
                value = v
                if n_traj < traj.size:
                    traj[n_traj] = value
                    n_traj += 1
                improved = True
            for start in range(N):
                if y[start] == alpha:
                    continue
                lab = y[start]
                for n in range(N):
                    seen[n] = False
                    cand[n] = y[n]
                head = 0
                tail = 1
                region[0] = start
                seen[start] = True
                while head < tail:
                    n = region[head]
                    head += 1
                    cand[n] = alpha
                    for k in range(ptr[n], ptr[n + 1]):
                        e = adj_edge[k]
                        m = edges[e, 1] if adj_side[k] == 0 else edges[e, 0]
                        if not seen[m] and y[m] == lab:
                            seen[m] = True
                            region[tail] = m
                            tail += 1
                v = _total(U, P, edges, cand)
                if v > value + eps:
                    for n in range(N):
                        y[n] = cand[n]
                    value = v
                    if n_traj < traj.size:
                        traj[n_traj] = value
                        n_traj += 1
                    improved = True
    return value, n_traj


def _run(pot: Potentials, adj, y0: np.ndarray):
    y = np.array(y0, dtype=np.int64, copy=True)
    traj = np.empty(64 * (y.size + 1) * pot.num_labels)
    value, n = _descend(
        np.ascontiguousarray(pot.unary),
        np.ascontiguousarray(pot.pairwise),
        np.ascontiguousarray(pot.edges, dtype=np.int64),
        adj[0],
        adj[1],
        adj[2],
        y,
        traj,
        _EPS,
    )
    return y, float(value), tuple(traj[:n].tolist())


def move_making_potentials(
    pot: Potentials,
    init,
    restarts: int = 0,
    seed: int = 0,
    extra_inits: Optional[Iterable] = None,
) -> OracleResult:
    """Move-making search from ``init``, then from ``extra_inits`` and ``restarts`` random labelings.

    The best labeling found wins; a later start must be strictly better to
    replace an earlier one.  ``trajectory`` is that of the run from ``init``.
    """
    N, L = pot.unary.shape
    adj = adjacency(N, np.asarray(pot.edges, dtype=np.int64).reshape(-1, 2))
    best_y, best_v, trajectory = _run(pot, adj, np.asarray(init, dtype=np.int64))
    starts = [np.asarray(s, dtype=np.int64) for s in (extra_inits or ())]
    rng = np.random.default_rng(seed)
    starts += [rng.integers(0, L, size=N) for _ in range(restarts)]
    for s in starts:
        y, v, _ = _run(pot, adj, s)
        if v > best_v + _EPS:
            best_y, best_v = y, v
    return OracleResult(best_y, best_v, Quality.UNDER_GENERATING, trajectory=trajectory)


def move_making(
    instance: FactorGraphInstance,
    params: ParameterVector,
    init=None,
    restarts: int = 0,
    seed: int = 0,
) -> OracleResult:
    """Under-generating MAP search; deterministic given ``seed``.

    ``init`` defaults to the all-zeros labeling.
    """
    if init is None:
        init = np.zeros(instance.node_count, dtype=np.int64)
    init = instance.check_labeling(init)
    return move_making_potentials(potentials(instance, params), init, restarts, seed)
