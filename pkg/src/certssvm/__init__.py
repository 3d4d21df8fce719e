"""Certified structural SVM training with a ladder of separation oracles."""

from .graph import (
    DimensionError,
    FactorGraphInstance,
    FeatureLayout,
    LossSpec,
    ModelError,
    ParameterVector,
    Potentials,
    factor_score,
    joint_feature,
    loss,
    loss_augment,
    potentials,
    score,
)
from .inference import OracleResult, Quality, Tier
from .qp import JointConstraint, QPSolution, solve_restricted_qp
from .trainer import (
    BoundTrace,
    Certificate,
    CuttingPlaneTrainer,
    FitResult,
    LadderConfig,
    Sample,
    TrainConfig,
    compute_bounds,
    fit,
    schedule_next_tier,
)

__version__ = "0.1.0"

__all__ = [
    "BoundTrace",
    "Certificate",
    "CuttingPlaneTrainer",
    "DimensionError",
    "FactorGraphInstance",
    "FeatureLayout",
    "FitResult",
    "JointConstraint",
    "LadderConfig",
    "LossSpec",
    "ModelError",
    "OracleResult",
    "ParameterVector",
    "Potentials",
    "QPSolution",
    "Quality",
    "Sample",
    "Tier",
    "TrainConfig",
    "compute_bounds",
    "factor_score",
    "fit",
    "joint_feature",
    "loss",
    "loss_augment",
    "potentials",
    "schedule_next_tier",
    "score",
    "solve_restricted_qp",
]
