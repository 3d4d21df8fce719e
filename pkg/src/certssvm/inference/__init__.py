from .bnb import branch_and_bound, branch_and_bound_potentials, condition
from .exhaustive import enumerate_potentials, exhaustive_map
from .lp import RelaxedSolution, lp_relaxation, solve_potentials
from .moves import move_making, move_making_potentials
from .oracle import loss_augmented_oracle
from .result import (
    EnumerationBudgetExceeded,
    InferenceError,
    OracleResult,
    Quality,
    SearchBudgetExceeded,
    Tier,
)

__all__ = [
    "EnumerationBudgetExceeded",
    "InferenceError",
    "OracleResult",
    "Quality",
    "RelaxedSolution",
    "SearchBudgetExceeded",
    "Tier",
    "branch_and_bound",
    "branch_and_bound_potentials",
    "condition",
    "enumerate_potentials",
    "exhaustive_map",
    "loss_augmented_oracle",
    "lp_relaxation",
    "move_making",
    "move_making_potentials",
    "solve_potentials",
]
