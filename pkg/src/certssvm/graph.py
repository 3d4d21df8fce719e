"""Pairwise factor-graph model: instances, joint features, scores and losses.

Every other module talks about CRFs through the types defined here.  A
labeling is a plain integer numpy array of length ``node_count``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ModelError(ValueError):
    """Raised on structurally invalid instances, labelings or parameters."""


class DimensionError(ModelError):
    """Raised when feature or parameter dimensions disagree."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def pair_index(num_labels: int, symmetric: bool) -> np.ndarray:
    """Map a label pair ``(a, b)`` to its row in the pairwise parameter block.

    Asymmetric blocks use ``a * L + b``; symmetric blocks share one row for
    ``(a, b)`` and ``(b, a)``, enumerated over ``a <= b`` in row-major order.
    """
    L = num_labels
    if not symmetric:
        return np.arange(L * L).reshape(L, L)
    idx = np.empty((L, L), dtype=np.int64)
    k = 0
    for a in range(L):
        for b in range(a, L):
            idx[a, b] = idx[b, a] = k
            k += 1
    return idx


def num_pair_blocks(num_labels: int, symmetric: bool) -> int:
    L = num_labels
    return L * (L + 1) // 2 if symmetric else L * L


@dataclass(frozen=True)
class FactorGraphInstance:
    """One training example: graph structure plus unary and edge features.

    Edges are stored canonically as ``(min(i, j), max(i, j))``; duplicates and
    self-loops are rejected.  ``unary_offset`` is an optional ``(N, L)``
    additive channel used for loss augmentation; it never contributes to the
    joint feature map.
    """

    unary_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray
    num_labels: int
    symmetric: bool = True
    unary_offset: Optional[np.ndarray] = None

    def __post_init__(self):
        uf = np.asarray(self.unary_features, dtype=np.float64)
        if uf.ndim != 2 or uf.shape[0] < 1:
            raise DimensionError("unary_features must be a non-empty (N, d_u) array")
        n = uf.shape[0]
        if int(self.num_labels) < 1:
            raise ModelError("num_labels must be positive")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        ef = np.asarray(self.edge_features, dtype=np.float64)
        if ef.ndim == 1 and ef.size == 0:
            ef = ef.reshape(0, 0)
        if ef.ndim != 2 or ef.shape[0] != edges.shape[0]:
            raise DimensionError(
                f"edge_features must have one row per edge ({edges.shape[0]}), got shape {ef.shape}"
            )
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ModelError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ModelError("self-loops are not allowed")
            edges = np.sort(edges, axis=1)
            keys = edges[:, 0] * n + edges[:, 1]
            if np.unique(keys).size != keys.size:
                raise ModelError("duplicate edges")
        if not (np.all(np.isfinite(uf)) and np.all(np.isfinite(ef))):
            raise ModelError("features must be finite")
        object.__setattr__(self, "unary_features", _frozen(uf))
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "edge_features", _frozen(ef))
        object.__setattr__(self, "num_labels", int(self.num_labels))
        object.__setattr__(self, "symmetric", bool(self.symmetric))
        if self.unary_offset is not None:
            off = np.asarray(self.unary_offset, dtype=np.float64)
            if off.shape != (n, self.num_labels):
                raise DimensionError("unary_offset must have shape (N, L)")
            object.__setattr__(self, "unary_offset", _frozen(off))

    @property
    def node_count(self) -> int:
        return self.unary_features.shape[0]

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    @property
    def d_u(self) -> int:
        return self.unary_features.shape[1]

    @property
    def d_p(self) -> int:
        return self.edge_features.shape[1]

    @property
    def layout(self) -> "FeatureLayout":
        return FeatureLayout(self.num_labels, self.d_u, self.d_p, self.symmetric)

    def without_offset(self) -> "FactorGraphInstance":
        return FactorGraphInstance(
            self.unary_features, self.edges, self.edge_features, self.num_labels, self.symmetric
        )

    def check_labeling(self, labeling) -> np.ndarray:
        y = np.asarray(labeling)
        if y.shape != (self.node_count,):
            raise ModelError(f"labeling length {y.size} does not match node_count {self.node_count}")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ModelError("labels must be integers")
        y = y.astype(np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.num_labels):
            raise ModelError("label out of range")
        return y


@dataclass(frozen=True)
class FeatureLayout:
    """Dimensions of the parameter vector for a dataset."""

    num_labels: int
    d_u: int
    d_p: int
    symmetric: bool = True

    @property
    def pair_blocks(self) -> int:
        return num_pair_blocks(self.num_labels, self.symmetric)

    @property
    def unary_size(self) -> int:
        return self.num_labels * self.d_u

    @property
    def size(self) -> int:
        return self.unary_size + self.pair_blocks * self.d_p

    def check(self, instance: FactorGraphInstance) -> None:
        if (instance.num_labels, instance.d_u, instance.d_p, instance.symmetric) != (
            self.num_labels,
            self.d_u,
            self.d_p,
            self.symmetric,
        ):
            raise DimensionError(
                f"instance (L={instance.num_labels}, d_u={instance.d_u}, d_p={instance.d_p}, "
                f"symmetric={instance.symmetric}) does not match layout {self}"
            )


@dataclass(frozen=True)
class ParameterVector:
    """Flat weight vector with unary and pairwise views.

    The flat layout is ``[theta_unary.ravel(), theta_pair_rows.ravel()]`` where
    ``theta_pair_rows`` has one row per label pair block (see ``pair_index``).
    """

    layout: FeatureLayout
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=np.float64).ravel()
        if th.size != self.layout.size:
            raise DimensionError(f"theta has size {th.size}, layout expects {self.layout.size}")
        if not np.all(np.isfinite(th)):
            raise ModelError("theta must be finite")
        object.__setattr__(self, "theta", _frozen(th))

    @classmethod
    def zeros(cls, layout: FeatureLayout) -> "ParameterVector":
        return cls(layout, np.zeros(layout.size))

    @classmethod
    def from_blocks(cls, layout: FeatureLayout, theta_unary, theta_pairwise) -> "ParameterVector":
        """Build from an ``(L, d_u)`` unary block and an ``(L, L, d_p)`` pairwise block.

        In symmetric mode the pairwise block must itself be symmetric in its
        first two axes.
        """
        L = layout.num_labels
        tu = np.asarray(theta_unary, dtype=np.float64).reshape(L, layout.d_u)
        tp = np.asarray(theta_pairwise, dtype=np.float64).reshape(L, L, layout.d_p)
        rows = np.zeros((layout.pair_blocks, layout.d_p))
        idx = pair_index(L, layout.symmetric)
        if layout.symmetric and not np.allclose(tp, tp.transpose(1, 0, 2)):
            raise ModelError("symmetric layout needs theta_pairwise[a, b] == theta_pairwise[b, a]")
        for a in range(L):
            for b in range(L):
                rows[idx[a, b]] = tp[a, b]
        return cls(layout, np.concatenate([tu.ravel(), rows.ravel()]))

    @property
    def theta_unary(self) -> np.ndarray:
        return self.theta[: self.layout.unary_size].reshape(self.layout.num_labels, self.layout.d_u)

    @property
    def pair_rows(self) -> np.ndarray:
        return self.theta[self.layout.unary_size :].reshape(self.layout.pair_blocks, self.layout.d_p)

    @property
    def theta_pairwise(self) -> np.ndarray:
        """Expanded ``(L, L, d_p)`` view; shared rows repeat in symmetric mode."""
        idx = pair_index(self.layout.num_labels, self.layout.symmetric)
        return self.pair_rows[idx]

    def norm_sq(self) -> float:
        return float(self.theta @ self.theta)


@dataclass(frozen=True)
class LossSpec:
    """Per-node weights of the weighted Hamming loss."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ModelError("loss weights must be finite and nonnegative")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def unit(cls, node_count: int) -> "LossSpec":
        return cls(np.ones(node_count))


@dataclass(frozen=True)
class Potentials:
    """Dense log-potentials of one instance under fixed parameters.

    ``unary`` is ``(N, L)``, ``pairwise`` is ``(E, L, L)`` indexed by the labels
    of the canonical endpoints ``edges[e, 0]`` and ``edges[e, 1]``.
    """

    unary: np.ndarray
    pairwise: np.ndarray
    edges: np.ndarray

    @property
    def node_count(self) -> int:
        return self.unary.shape[0]

    @property
    def num_labels(self) -> int:
        return self.unary.shape[1]

    def value(self, labeling) -> float:
        y = np.asarray(labeling, dtype=np.int64)
        total = self.unary[np.arange(y.size), y].sum()
        if self.edges.shape[0]:
            total += self.pairwise[np.arange(self.edges.shape[0]), y[self.edges[:, 0]], y[self.edges[:, 1]]].sum()
        return float(total)


def _check_params(instance: FactorGraphInstance, params: ParameterVector) -> None:
    params.layout.check(instance)


def joint_feature(instance: FactorGraphInstance, labeling) -> np.ndarray:
    """Joint feature vector psi(x, y), laid out like ``ParameterVector.theta``."""
    y = instance.check_labeling(labeling)
    layout = instance.layout
    L = layout.num_labels
    psi_u = np.zeros((L, layout.d_u))
    np.add.at(psi_u, y, instance.unary_features)
    psi_p = np.zeros((layout.pair_blocks, layout.d_p))
    if instance.edge_count:
        rows = pair_index(L, layout.symmetric)[y[instance.edges[:, 0]], y[instance.edges[:, 1]]]
        np.add.at(psi_p, rows, instance.edge_features)
    return np.concatenate([psi_u.ravel(), psi_p.ravel()])


def potentials(instance: FactorGraphInstance, params: ParameterVector) -> Potentials:
    """Evaluate unary and pairwise potential tables, including any loss offset."""
    _check_params(instance, params)
    unary = instance.unary_features @ params.theta_unary.T
    if instance.unary_offset is not None:
        unary = unary + instance.unary_offset
    L = instance.num_labels
    if instance.edge_count:
        pairwise = np.einsum("ed,abd->eab", instance.edge_features, params.theta_pairwise)
    else:
        pairwise = np.zeros((0, L, L))
    return Potentials(unary, pairwise, instance.edges)


def score(instance: FactorGraphInstance, labeling, params: ParameterVector) -> float:
    """<theta, psi(x, y)> plus the loss-augmentation offset, if the instance has one."""
    _check_params(instance, params)
    y = instance.check_labeling(labeling)
    s = float(params.theta @ joint_feature(instance, y))
    if instance.unary_offset is not None:
        s += float(instance.unary_offset[np.arange(y.size), y].sum())
    return s


def factor_score(instance: FactorGraphInstance, labeling, params: ParameterVector) -> float:
    """Same quantity as ``score`` but summed factor by factor over potential tables."""
    y = instance.check_labeling(labeling)
    return potentials(instance, params).value(y)


def loss(truth, candidate, spec: Optional[LossSpec] = None) -> float:
    """Weighted Hamming loss: sum of weights over nodes where the labels differ."""
    t = np.asarray(truth)
    c = np.asarray(candidate)
    if t.shape != c.shape:
        raise ModelError(f"labelings differ in length: {t.size} vs {c.size}")
    if spec is None:
        return float(np.count_nonzero(t != c))
    if spec.weights.shape != t.shape:
        raise ModelError("loss weights must have one entry per node")
    return float(spec.weights[t != c].sum())


def loss_augment(instance: FactorGraphInstance, truth, spec: Optional[LossSpec] = None) -> FactorGraphInstance:
    """Return a view of ``instance`` whose score includes ``loss(truth, .)``.

    The Hamming loss decomposes over nodes, so it becomes an additive unary
    offset ``w_n * [label != truth_n]``.
    """
    y = instance.check_labeling(truth)
    w = LossSpec.unit(instance.node_count).weights if spec is None else spec.weights
    if w.shape != (instance.node_count,):
        raise ModelError("loss weights must have one entry per node")
    offset = w[:, None] * (np.arange(instance.num_labels)[None, :] != y[:, None])
    if instance.unary_offset is not None:
        offset = offset + instance.unary_offset
    return FactorGraphInstance(
        instance.unary_features,
        instance.edges,
        instance.edge_features,
        instance.num_labels,
        instance.symmetric,
        unary_offset=offset,
    )
