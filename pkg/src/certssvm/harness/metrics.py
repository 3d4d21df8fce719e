"""Node-level segmentation metrics from MAP predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from ..graph import DimensionError, ParameterVector
from ..inference import Tier, branch_and_bound, move_making
from ..trainer import dataset_layout


@dataclass(frozen=True)
class Metrics:
    """Scores derived from a confusion matrix (rows: truth, columns: prediction).

    Per-class entries are NaN for classes absent from both truth and
    prediction (Jaccard) or from the truth (accuracy); class means skip them.
    """

    confusion: np.ndarray
    overall_accuracy: float
    per_class_accuracy: np.ndarray
    mean_class_accuracy: float
    jaccard: np.ndarray
    mean_jaccard: float

    def to_dict(self) -> dict:
        def clean(a):
            return [None if np.isnan(v) else float(v) for v in a]

        return {
            "overall_accuracy": self.overall_accuracy,
            "mean_class_accuracy": self.mean_class_accuracy,
            "per_class_accuracy": clean(self.per_class_accuracy),
            "jaccard": clean(self.jaccard),
            "mean_jaccard": self.mean_jaccard,
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(truths, predictions, num_labels: int) -> np.ndarray:
    conf = np.zeros((num_labels, num_labels), dtype=np.int64)
    for t, p in zip(truths, predictions):
        np.add.at(conf, (np.asarray(t), np.asarray(p)), 1)
    return conf


def metrics_from_confusion(conf: np.ndarray) -> Metrics:
    conf = np.asarray(conf, dtype=np.int64)
    total = conf.sum()
    hits = np.diag(conf).astype(np.float64)
    rows = conf.sum(axis=1).astype(np.float64)
    cols = conf.sum(axis=0).astype(np.float64)
    union = rows + cols - hits
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, hits / rows, np.nan)
        jac = np.where(union > 0, hits / union, np.nan)
    present = ~np.isnan(per_class)
    return Metrics(
        confusion=conf,
        overall_accuracy=float(hits.sum() / total) if total else float("nan"),
        per_class_accuracy=per_class,
        mean_class_accuracy=float(per_class[present].mean()) if present.any() else float("nan"),
        jaccard=jac,
        mean_jaccard=float(np.nanmean(jac)) if (~np.isnan(jac)).any() else float("nan"),
    )


def predict(model: ParameterVector, samples, tier: Tier = Tier.MOVE_MAKING) -> List[np.ndarray]:
    """MAP labelings with the named tier (``MOVE_MAKING`` or ``EXACT``)."""
    tier = Tier(tier)
    if tier is Tier.CACHE:
        raise ValueError("prediction needs an inference tier")
    out = []
    for s in samples:
        inst = s.instance.without_offset()
        if tier is Tier.EXACT:
            out.append(branch_and_bound(inst, model).labeling)
        else:
            out.append(move_making(inst, model).labeling)
    return out


def evaluate(model: ParameterVector, dataset, tier: Tier = Tier.MOVE_MAKING) -> Metrics:
    """Predict every instance of ``dataset`` and score against its ground truth."""
    samples = getattr(dataset, "samples", dataset)
    layout = dataset_layout(samples)
    if layout != model.layout:
        raise DimensionError(f"model layout {model.layout} does not match dataset layout {layout}")
    preds = predict(model, samples, tier)
    conf = confusion_matrix([s.truth for s in samples], preds, layout.num_labels)
    return metrics_from_confusion(conf)
