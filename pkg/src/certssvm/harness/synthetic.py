"""Synthetic grid CRF benchmark: noisy one-hot unaries over blocky ground truth."""

from __future__ import annotations

import numpy as np

from ..graph import FactorGraphInstance
from ..trainer import Sample
from .data import DatasetFile


def grid_edges(grid_w: int, grid_h: int) -> np.ndarray:
    """4-connected grid edges over nodes numbered row-major (``node = r * grid_w + c``)."""
    idx = np.arange(grid_w * grid_h).reshape(grid_h, grid_w)
    right = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    down = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([right, down]).astype(np.int64)


def _blocky_labels(rng: np.random.Generator, grid_w: int, grid_h: int, L: int) -> np.ndarray:
    img = np.full((grid_h, grid_w), rng.integers(L))
    for _ in range(int(rng.integers(1, 4))):
        h = int(rng.integers(1, grid_h + 1))
        w = int(rng.integers(1, grid_w + 1))
        r = int(rng.integers(0, grid_h - h + 1))
        c = int(rng.integers(0, grid_w - w + 1))
        img[r : r + h, c : c + w] = rng.integers(L)
    return img.ravel()


def generate_synthetic(
    grid_w: int,
    grid_h: int,
    L: int,
    noise_sigma: float,
    n_instances: int,
    seed: int = 0,
    symmetric: bool = True,
) -> DatasetFile:
    """Grid instances with ``d_u = L`` and ``d_p = 2``.

    Unary features are ``one_hot(truth) + N(0, noise_sigma^2)``.  Edge features
    are ``[1, mean |f_i - f_j|]``, a bias and the contrast between the two
    endpoint feature vectors.
    """
    if grid_w < 1 or grid_h < 1:
        raise ValueError("grid dimensions must be >= 1")
    if L < 2:
        raise ValueError("need at least two labels")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    edges = grid_edges(grid_w, grid_h)
    samples = []
    for _ in range(n_instances):
        truth = _blocky_labels(rng, grid_w, grid_h, L)
        feats = np.eye(L)[truth] + noise_sigma * rng.standard_normal((truth.size, L))
        contrast = np.abs(feats[edges[:, 0]] - feats[edges[:, 1]]).mean(axis=1)
        ef = np.stack([np.ones(edges.shape[0]), contrast], axis=1)
        inst = FactorGraphInstance(feats, edges, ef.reshape(-1, 2), L, symmetric)
        samples.append(Sample(inst, truth))
    return DatasetFile(d_u=L, d_p=2, symmetric=symmetric, samples=samples)


def strip_edges(dataset: DatasetFile) -> DatasetFile:
    """Same nodes and truths with every edge removed (unary-only model)."""
    samples = []
    for s in dataset.samples:
        inst = s.instance
        bare = FactorGraphInstance(
            inst.unary_features, np.zeros((0, 2), np.int64), np.zeros((0, dataset.d_p)), inst.num_labels,
            inst.symmetric,
        )
        samples.append(Sample(bare, s.truth, s.loss_spec))
    return DatasetFile(dataset.d_u, dataset.d_p, dataset.symmetric, samples)
