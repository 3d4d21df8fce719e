from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


class Quality(str, enum.Enum):
    CACHED = "cached"
    UNDER_GENERATING = "under_generating"
    RELAXED_UPPER_BOUND = "relaxed_upper_bound"
    EXACT_CERTIFIED = "exact_certified"


class Tier(str, enum.Enum):
    CACHE = "cache"
    MOVE_MAKING = "move_making"
    EXACT = "exact"


class InferenceError(RuntimeError):
    pass


class EnumerationBudgetExceeded(InferenceError):
    """The state space is too large for brute-force enumeration."""


class SearchBudgetExceeded(InferenceError):
    """Branch-and-bound expanded too many subproblems.

    Carries the best incumbent found and the global upper bound at the time
    the search was abandoned; both remain valid.
    """

    def __init__(self, message, labeling, value, upper_bound, expanded):
        super().__init__(message)
        self.labeling = labeling
        self.value = value
        self.upper_bound = upper_bound
        self.expanded = expanded


@dataclass(frozen=True)
class OracleResult:
    """A labeling (or bound) together with what is known about its optimality."""

    labeling: Optional[np.ndarray]
    value: float
    quality: Quality
    upper_bound: float = float("inf")
    fractional: bool = False
    trajectory: Tuple[float, ...] = ()
    expanded: int = 0

    @property
    def gap(self) -> float:
        return self.upper_bound - self.value
