from .compare import ComparisonReport, compare_caching_strategies, strategy_ladder
from .config import CertificationUnavailable, ExperimentConfig, parse_ladder, parse_tier
from .data import DatasetFile, DatasetFormatError, load_dataset, save_dataset
from .files import (
    CsvTraceSink,
    load_certificate,
    load_model,
    read_trace_csv,
    save_certificate,
    save_model,
)
from .metrics import Metrics, confusion_matrix, evaluate, metrics_from_confusion, predict
from .plots import trace_svg, write_trace_svg
from .synthetic import generate_synthetic, grid_edges, strip_edges

__all__ = [
    "CertificationUnavailable",
    "ComparisonReport",
    "CsvTraceSink",
    "DatasetFile",
    "DatasetFormatError",
    "ExperimentConfig",
    "Metrics",
    "compare_caching_strategies",
    "confusion_matrix",
    "evaluate",
    "generate_synthetic",
    "grid_edges",
    "load_certificate",
    "load_dataset",
    "load_model",
    "metrics_from_confusion",
    "parse_ladder",
    "parse_tier",
    "predict",
    "read_trace_csv",
    "save_certificate",
    "save_dataset",
    "save_model",
    "strategy_ladder",
    "strip_edges",
    "trace_svg",
    "write_trace_svg",
]
