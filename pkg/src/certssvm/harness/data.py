"""Dataset container and its JSON file format.

A dataset file is a single JSON document::

    {"format": "certssvm-dataset", "version": 1,
     "d_u": ..., "d_p": ..., "symmetric": true,
     "instances": [{"node_count": ..., "num_labels": ..., "edges": [[i, j], ...],
                    "unary_features": [[...], ...], "edge_features": [[...], ...],
                    "truth": [...], "loss_weights": [...] (optional)}, ...]}

Floats are written with ``repr`` precision, so write -> read is lossless.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..graph import FactorGraphInstance, FeatureLayout, LossSpec, ModelError
from ..trainer import Sample

FORMAT = "certssvm-dataset"
VERSION = 1


class DatasetFormatError(ModelError):
    pass


@dataclass
class DatasetFile:
    d_u: int
    d_p: int
    symmetric: bool
    samples: List[Sample] = field(default_factory=list)
    version: int = VERSION

    def __post_init__(self):
        for s in self.samples:
            self._check(s)

    def _check(self, s: Sample) -> None:
        inst = s.instance
        if inst.d_u != self.d_u or inst.d_p != self.d_p or inst.symmetric != self.symmetric:
            raise DatasetFormatError(
                f"instance dimensions (d_u={inst.d_u}, d_p={inst.d_p}, symmetric={inst.symmetric}) "
                f"disagree with header (d_u={self.d_u}, d_p={self.d_p}, symmetric={self.symmetric})"
            )

    @property
    def layout(self) -> FeatureLayout:
        if not self.samples:
            raise DatasetFormatError("dataset has no instances")
        return FeatureLayout(self.samples[0].instance.num_labels, self.d_u, self.d_p, self.symmetric)

    def __len__(self):
        return len(self.samples)

    def to_dict(self) -> dict:
        instances = []
        for s in self.samples:
            inst = s.instance
            d = {
                "node_count": inst.node_count,
                "num_labels": inst.num_labels,
                "edges": inst.edges.tolist(),
                "unary_features": inst.unary_features.tolist(),
                "edge_features": inst.edge_features.tolist(),
                "truth": s.truth.tolist(),
            }
            if s.loss_spec is not None:
                d["loss_weights"] = s.loss_spec.weights.tolist()
            instances.append(d)
        return {
            "format": FORMAT,
            "version": self.version,
            "d_u": self.d_u,
            "d_p": self.d_p,
            "symmetric": self.symmetric,
            "instances": instances,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetFile":
        try:
            if doc.get("format") != FORMAT:
                raise DatasetFormatError(f"not a {FORMAT} document")
            if doc.get("version") != VERSION:
                raise DatasetFormatError(f"unsupported dataset version {doc.get('version')!r}")
            d_u, d_p, symmetric = int(doc["d_u"]), int(doc["d_p"]), bool(doc["symmetric"])
            samples = []
            for k, d in enumerate(doc["instances"]):
                n = int(d["node_count"])
                uf = np.asarray(d["unary_features"], dtype=np.float64).reshape(n, d_u)
                edges = np.asarray(d["edges"], dtype=np.int64).reshape(-1, 2)
                ef = np.asarray(d["edge_features"], dtype=np.float64).reshape(edges.shape[0], d_p)
                inst = FactorGraphInstance(uf, edges, ef, int(d["num_labels"]), symmetric)
                weights = d.get("loss_weights")
                spec = None if weights is None else LossSpec(np.asarray(weights, dtype=np.float64))
                samples.append(Sample(inst, np.asarray(d["truth"]), spec))
        except (KeyError, TypeError, ValueError) as ex:
            if isinstance(ex, DatasetFormatError):
                raise
            raise DatasetFormatError(f"malformed dataset: {ex}") from ex
        return cls(d_u, d_p, symmetric, samples)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file in the same directory and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_dataset(dataset: DatasetFile, path) -> None:
    atomic_write_text(path, dumps_json(dataset.to_dict()))


def load_dataset(path) -> DatasetFile:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as ex:
        raise DatasetFormatError(f"{path}: invalid JSON ({ex})") from ex
    return DatasetFile.from_dict(doc)
