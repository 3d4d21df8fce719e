"""Shared builders and independent reference oracles for the test suite.

The oracles here deliberately avoid the package's own potential tables and
enumeration code: scores are summed factor by factor from the raw parameter
blocks, and the local-polytope LP is assembled explicitly for a generic
simplex solver.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from certssvm.graph import FactorGraphInstance, FeatureLayout, ParameterVector


def random_instance(rng, n_nodes, L, d_u=2, d_p=2, edge_prob=0.5, symmetric=True, tree=False):
    uf = rng.normal(size=(n_nodes, d_u))
    if tree:
        edges = [(int(rng.integers(0, i)), i) for i in range(1, n_nodes)]
    else:
        edges = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes) if rng.random() < edge_prob]
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    ef = rng.normal(size=(edges.shape[0], d_p))
    return FactorGraphInstance(uf, edges, ef, L, symmetric)


def random_params(rng, layout: FeatureLayout, scale=1.0):
    tu = rng.normal(scale=scale, size=(layout.num_labels, layout.d_u))
    tp = rng.normal(scale=scale, size=(layout.num_labels, layout.num_labels, layout.d_p))
    if layout.symmetric:
        tp = 0.5 * (tp + tp.transpose(1, 0, 2))
    return ParameterVector.from_blocks(layout, tu, tp)


def reference_score(instance, labeling, params) -> float:
    """Factor-by-factor sum straight from the parameter blocks (plus any offset)."""
    tu = params.theta_unary
    tp = params.theta_pairwise
    total = 0.0
    for i, lab in enumerate(labeling):
        total += float(tu[lab] @ instance.unary_features[i])
        if instance.unary_offset is not None:
            total += float(instance.unary_offset[i, lab])
    for (i, j), g in zip(instance.edges, instance.edge_features):
        total += float(tp[labeling[i], labeling[j]] @ g)
    return total


def brute_force_map(instance, params):
    """(value, labeling) by itertools enumeration; first maximiser in lexicographic order."""
    best_v, best_y = -np.inf, None
    for y in itertools.product(range(instance.num_labels), repeat=instance.node_count):
        v = reference_score(instance, y, params)
        if v > best_v:
            best_v, best_y = v, np.array(y)
    return best_v, best_y


def brute_force_table(unary, pairwise, edges):
    """Max over labelings of explicit potential tables, by enumeration."""
    N, L = unary.shape
    best = -np.inf
    for y in itertools.product(range(L), repeat=N):
        v = sum(unary[i, y[i]] for i in range(N))
        v += sum(pairwise[e, y[i], y[j]] for e, (i, j) in enumerate(edges))
        best = max(best, v)
    return best


def local_polytope_lp(unary, pairwise, edges):
    """Optimum of the local-polytope LP via scipy's HiGHS simplex.

    Variables: node marginals mu_i(a) then edge marginals mu_e(a, b).
    Constraints: each node simplex sums to one, and each edge marginal sums
    to its endpoint marginals along both axes.
    """
    from scipy.optimize import linprog

    N, L = unary.shape
    E = len(edges)
    nv = N * L + E * L * L
    c = -np.concatenate([unary.ravel(), pairwise.reshape(E, L * L).ravel()]) if E else -unary.ravel()
    rows, rhs = [], []
    for i in range(N):
        r = np.zeros(nv)
        r[i * L:(i + 1) * L] = 1
        rows.append(r)
        rhs.append(1.0)
    for e, (i, j) in enumerate(edges):
        base = N * L + e * L * L
        for a in range(L):
            r = np.zeros(nv)
            r[base + a * L: base + (a + 1) * L] = 1
            r[i * L + a] = -1
            rows.append(r)
            rhs.append(0.0)
        for b in range(L):
            r = np.zeros(nv)
            r[base + b: base + L * L: L] = 1
            r[j * L + b] = -1
            rows.append(r)
            rhs.append(0.0)
    res = linprog(c, A_eq=np.array(rows), b_eq=np.array(rhs), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return -res.fun, res.x[: N * L].reshape(N, L)


def primal_grid_search(ws, C, points=21, rounds=120, shrink=0.8, restarts=3):
    """Minimise the primal over theta by zooming grid search.

    Independent of the dual: it never forms multipliers, only evaluates
    ``|theta|^2 / 2 + C * max(0, max_j l_j - <theta, d_j>)`` on grids.  Each
    round lays a randomly rotated grid around the incumbent so the search
    can follow kinks of the hinge that are not axis aligned.  The best of a
    few independent runs is returned; every value is attained by some theta.
    """
    D = np.stack([c.delta_psi for c in ws])
    ell = np.array([c.loss_sum for c in ws])
    dim = D.shape[1]

    def f(P):
        return 0.5 * (P * P).sum(axis=1) + C * np.maximum((ell[None, :] - P @ D.T).max(axis=1), 0.0)

    u = np.linspace(-1.0, 1.0, points)
    U = np.stack(np.meshgrid(*([u] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    overall = np.inf
    for seed in range(restarts):
        rot = np.random.default_rng(seed)
        center = np.zeros(dim)
        best = f(center[None])[0]
        half = C * np.linalg.norm(D, axis=1).max() + 1e-9  # |theta| <= C max |d_j|
        for _ in range(rounds):
            Q, _ = np.linalg.qr(rot.normal(size=(dim, dim)))
            P = center + half * U @ Q.T
            vals = f(P)
            k = int(np.argmin(vals))
            if vals[k] < best:
                best, center = vals[k], P[k]
            half *= shrink
        overall = min(overall, best)
    return overall


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
