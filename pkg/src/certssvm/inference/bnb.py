"""Exact MAP by best-first branch-and-bound over LP relaxation bounds.

Each subproblem fixes the labels of some nodes.  Fixed nodes are conditioned
out of the potentials, the remaining free graph is bounded by the local
polytope LP, and the node with the most uncertain LP marginal is branched on.
Subproblems whose bound cannot beat the incumbent by more than ``tol`` are
pruned.  The result carries the final global upper bound as a certificate.
"""

from __future__ import annotations

import heapq
import itertools
from typing import Iterable, Optional

import numpy as np

from ..graph import FactorGraphInstance, ParameterVector, Potentials, potentials
from .lp import solve_potentials
from .moves import _run, adjacency
from .result import OracleResult, Quality, SearchBudgetExceeded

DEFAULT_NODE_BUDGET = 100_000


def condition(pot: Potentials, fixed: np.ndarray):
    """Potentials of the free nodes given the fixed ones.

    ``fixed[n]`` is a label or -1.  Returns ``(sub_potentials, constant,
    free_index)`` such that for every completion ``y`` of ``fixed``,
    ``pot.value(y) == sub.value(y[free]) + constant``.
    """
    N, L = pot.unary.shape
    free = np.flatnonzero(fixed < 0)
    is_fixed = fixed >= 0
    pos = np.full(N, -1, dtype=np.int64)
    pos[free] = np.arange(free.size)
    unary = pot.unary[free].copy()
    fixed_nodes = np.flatnonzero(is_fixed)
    constant = float(pot.unary[fixed_nodes, fixed[fixed_nodes]].sum())
    i, j = pot.edges[:, 0], pot.edges[:, 1]
    fi, fj = is_fixed[i], is_fixed[j]
    both = fi & fj
    if both.any():
        e = np.flatnonzero(both)
        constant += float(pot.pairwise[e, fixed[i[e]], fixed[j[e]]].sum())
    left = fi & ~fj
    if left.any():
        e = np.flatnonzero(left)
        np.add.at(unary, pos[j[e]], pot.pairwise[e, fixed[i[e]], :])
    right = ~fi & fj
    if right.any():
        e = np.flatnonzero(right)
        np.add.at(unary, pos[i[e]], pot.pairwise[e, :, fixed[j[e]]])
    keep = ~fi & ~fj
    sub_edges = np.stack([pos[i[keep]], pos[j[keep]]], axis=1) if keep.any() else np.zeros((0, 2), np.int64)
    sub = Potentials(unary, pot.pairwise[keep], sub_edges)
    return sub, constant, free


def _entropy(m: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(m > 0, -m * np.log(m), 0.0)
    return t.sum(axis=1)


def branch_and_bound_potentials(
    pot: Potentials,
    tol: float = 1e-6,
    max_nodes: int = DEFAULT_NODE_BUDGET,
    lp_max_iters: int = 5000,
    lp_tol: float = 1e-7,
    candidates: Optional[Iterable] = None,
) -> OracleResult:
    """Certified MAP for explicit potentials.

    ``candidates`` are labelings used to seed the incumbent (after local
    improvement); they only speed up pruning.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    N, L = pot.unary.shape
    adj = adjacency(N, np.asarray(pot.edges, dtype=np.int64).reshape(-1, 2))

    inc_y = np.zeros(N, dtype=np.int64)
    inc_v = pot.value(inc_y)

    def offer(y):
        nonlocal inc_y, inc_v
        y, v, _ = _run(pot, adj, y)
        if v > inc_v:
            inc_y, inc_v = y, v

    for c in candidates or ():
        offer(np.asarray(c, dtype=np.int64))

    def evaluate(fixed):
        sub, constant, free = condition(pot, fixed)
        y = fixed.copy()
        if free.size == 0:
            return constant, y, -1, False
        sol = solve_potentials(sub, max_iters=lp_max_iters, tol=lp_tol)
        y[free] = np.argmax(sol.node_marginals, axis=1)
        ent = _entropy(sol.node_marginals)
        branch = int(free[int(np.argmax(ent))])
        return sol.objective + constant, y, branch, sol.is_fractional()

    counter = itertools.count()
    root = np.full(N, -1, dtype=np.int64)
    bound, y, branch, fractional = evaluate(root)
    offer(y)
    heap = [(-bound, next(counter), root, branch)]
    pruned_max = -np.inf
    expanded = 1

    while heap:
        neg_b, _, fixed, branch = heap[0]
        if -neg_b <= inc_v + tol:
            break
        heapq.heappop(heap)
        if branch < 0:
            # fully fixed subproblem: bound equals its value, already offered
            pruned_max = max(pruned_max, -neg_b)
            continue
        for label in range(L):
            child = fixed.copy()
            child[branch] = label
            if expanded >= max_nodes:
                upper = max([inc_v, pruned_max] + [-h[0] for h in heap] + [-neg_b])
                raise SearchBudgetExceeded(
                    f"branch-and-bound exceeded {max_nodes} subproblems",
                    inc_y,
                    inc_v,
                    upper,
                    expanded,
                )
            expanded += 1
            b, yc, br, _ = evaluate(child)
            if br < 0 or b > inc_v + tol:
                offer(yc)
            if b > inc_v + tol:
                heapq.heappush(heap, (-b, next(counter), child, br))
            else:
                pruned_max = max(pruned_max, b)

    upper = max([inc_v, pruned_max] + [-h[0] for h in heap])
    return OracleResult(
        inc_y, float(inc_v), Quality.EXACT_CERTIFIED, upper_bound=float(upper), fractional=fractional, expanded=expanded
    )


def branch_and_bound(
    instance: FactorGraphInstance,
    params: ParameterVector,
    tol: float = 1e-6,
    max_nodes: int = DEFAULT_NODE_BUDGET,
    candidates: Optional[Iterable] = None,
) -> OracleResult:
    """Certified MAP labeling: ``upper_bound - value <= tol`` on return.

    Raises ``SearchBudgetExceeded`` (carrying incumbent and bound) when more
    than ``max_nodes`` subproblems would be evaluated.
    """
    return branch_and_bound_potentials(potentials(instance, params), tol=tol, max_nodes=max_nodes,
                                       candidates=candidates)
