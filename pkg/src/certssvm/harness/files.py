"""Model, certificate and trace files.

All JSON documents carry ``format`` and ``version`` fields; writes go
through a temp file and rename so readers never see partial output.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import os
import tempfile
from dataclasses import asdict
from typing import List, Optional

import numpy as np

from ..graph import FeatureLayout, ParameterVector
from ..trainer import TRACE_COLUMNS, Certificate, TrainConfig, TraceRow, trace_csv_row
from .data import DatasetFormatError, atomic_write_text, dumps_json

MODEL_FORMAT = "certssvm-model"
CERT_FORMAT = "certssvm-certificate"
VERSION = 1


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def config_dict(config: TrainConfig) -> dict:
    return _jsonable(asdict(config))


def config_hash(config: TrainConfig) -> str:
    """SHA-256 of the canonical JSON form of ``config``; worker count excluded."""
    d = config_dict(config)
    d.pop("workers", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def certificate_dict(cert: Certificate) -> dict:
    return {
        "format": CERT_FORMAT,
        "version": VERSION,
        "lower": cert.lower_bound,
        "upper": _jsonable(cert.upper_bound),
        "gap": _jsonable(cert.gap),
        "epsilon": cert.epsilon,
        "C": cert.C,
        "certified": cert.certified,
        "status": cert.status,
        "exact_slack": cert.exact_slack,
    }


def certificate_from_dict(d: dict) -> Certificate:
    if d.get("format") != CERT_FORMAT or d.get("version") != VERSION:
        raise DatasetFormatError("not a certificate document")
    return Certificate(
        lower_bound=float(d["lower"]),
        upper_bound=float(d["upper"]),
        gap=float(d["gap"]),
        epsilon=float(d["epsilon"]),
        C=float(d["C"]),
        certified=bool(d["certified"]),
        status=str(d["status"]),
        exact_slack=float(d.get("exact_slack", 0.0)),
    )


def save_certificate(cert: Certificate, path) -> None:
    atomic_write_text(path, dumps_json(certificate_dict(cert)))


def load_certificate(path) -> Certificate:
    with open(path) as fh:
        return certificate_from_dict(json.load(fh))


def save_model(params: ParameterVector, path, config: Optional[TrainConfig] = None,
               certificate: Optional[Certificate] = None) -> None:
    lay = params.layout
    doc = {
        "format": MODEL_FORMAT,
        "version": VERSION,
        "num_labels": lay.num_labels,
        "d_u": lay.d_u,
        "d_p": lay.d_p,
        "symmetric": lay.symmetric,
        "theta_unary": params.theta_unary.tolist(),
        "theta_pair_rows": params.pair_rows.tolist(),
        "config_hash": config_hash(config) if config is not None else None,
        "config": config_dict(config) if config is not None else None,
        "certificate": certificate_dict(certificate) if certificate is not None else None,
    }
    atomic_write_text(path, dumps_json(doc))


def load_model(path) -> ParameterVector:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as ex:
        raise DatasetFormatError(f"{path}: invalid JSON ({ex})") from ex
    if doc.get("format") != MODEL_FORMAT:
        raise DatasetFormatError(f"{path}: not a model file")
    if doc.get("version") != VERSION:
        raise DatasetFormatError(f"{path}: unsupported model version {doc.get('version')!r}")
    try:
        lay = FeatureLayout(int(doc["num_labels"]), int(doc["d_u"]), int(doc["d_p"]), bool(doc["symmetric"]))
        tu = np.asarray(doc["theta_unary"], dtype=np.float64).reshape(lay.num_labels, lay.d_u)
        rows = np.asarray(doc["theta_pair_rows"], dtype=np.float64).reshape(lay.pair_blocks, lay.d_p)
    except (KeyError, TypeError, ValueError) as ex:
        raise DatasetFormatError(f"{path}: malformed model ({ex})") from ex
    return ParameterVector(lay, np.concatenate([tu.ravel(), rows.ravel()]))


class CsvTraceSink:
    """Streams trace rows to CSV as training runs.

    Rows go to a temp file next to ``path`` (flushed per row, so progress is
    observable) which replaces ``path`` on ``close``.  With ``timing=False``
    the wall-clock column is zeroed so repeated runs are byte-identical.
    """

    def __init__(self, path, timing: bool = True):
        self.path = os.fspath(path)
        self.timing = timing
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        fd, self._tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(self.path))
        self._fh = os.fdopen(fd, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(TRACE_COLUMNS)
        self._last = None

    def __call__(self, row: TraceRow) -> None:
        if self._last is not None and row.iteration <= self._last:
            raise ValueError("trace iterations must be strictly increasing")
        self._last = row.iteration
        self._w.writerow(trace_csv_row(row, self.timing))
        self._fh.flush()

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.close()
        os.replace(self._tmp, self.path)

    def abort(self) -> None:
        if not self._fh.closed:
            self._fh.close()
        if os.path.exists(self._tmp):
            os.unlink(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()


def read_trace_csv(path) -> List[dict]:
    """Rows as dicts with typed values; validates the header and iteration order."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise DatasetFormatError(f"{path}: unexpected trace header {header}")
        rows = []
        for rec in reader:
            row = {
                "iteration": int(rec[0]),
                "tier": rec[1],
                "o_W": float(rec[2]),
                "o_I": float(rec[3]),
                "oracle_calls_cumulative": int(rec[4]),
                "wall_ms": float(rec[5]),
            }
            if rows and row["iteration"] <= rows[-1]["iteration"]:
                raise DatasetFormatError(f"{path}: iterations not strictly increasing")
            rows.append(row)
    return rows
