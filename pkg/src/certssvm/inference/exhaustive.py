"""Brute-force MAP by enumerating every joint labeling (reference oracle)."""

from __future__ import annotations

import numpy as np

from ..graph import FactorGraphInstance, ParameterVector, Potentials, potentials
from .result import EnumerationBudgetExceeded, OracleResult, Quality

DEFAULT_BUDGET = 2_000_000
_CHUNK = 1 << 16


def enumerate_potentials(pot: Potentials, budget: int = DEFAULT_BUDGET) -> OracleResult:
    N, L = pot.unary.shape
    total = L**N
    if total > budget:
        raise EnumerationBudgetExceeded(f"{L}^{N} = {total} joint states exceeds budget {budget}")
    # node 0 is the most significant digit, so state order is lexicographic order
    radix = L ** np.arange(N - 1, -1, -1, dtype=np.int64)
    e0, e1 = pot.edges[:, 0], pot.edges[:, 1]
    best_val = -np.inf
    best_state = 0
    for start in range(0, total, _CHUNK):
        states = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        labels = (states[:, None] // radix[None, :]) % L
        vals = pot.unary[np.arange(N)[None, :], labels].sum(axis=1)
        if e0.size:
            vals = vals + pot.pairwise[np.arange(e0.size)[None, :], labels[:, e0], labels[:, e1]].sum(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_state = int(states[k])
    y = (best_state // radix) % L
    return OracleResult(y.astype(np.int64), best_val, Quality.EXACT_CERTIFIED, upper_bound=best_val)


def exhaustive_map(
    instance: FactorGraphInstance, params: ParameterVector, budget: int = DEFAULT_BUDGET
) -> OracleResult:
    """Globally optimal labeling; ties go to the lexicographically smallest one.

    Raises ``EnumerationBudgetExceeded`` when ``L ** node_count > budget``.
    """
    return enumerate_potentials(potentials(instance, params), budget)
