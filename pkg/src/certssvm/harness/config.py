"""Experiment configuration shared by the CLI and scripted runs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

from ..inference import Tier
from ..inference.bnb import DEFAULT_NODE_BUDGET
from ..trainer import LadderConfig, TrainConfig

TIER_ALIASES = {
    "cache": Tier.CACHE,
    "move": Tier.MOVE_MAKING,
    "move_making": Tier.MOVE_MAKING,
    "move-making": Tier.MOVE_MAKING,
    "exact": Tier.EXACT,
}


class CertificationUnavailable(ValueError):
    """A certificate was requested but the ladder has no exact tier."""


def parse_tier(name: str) -> Tier:
    try:
        return TIER_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown tier {name!r} (choose from cache, move, exact)") from None


def parse_ladder(spec: str) -> Tuple[Tier, ...]:
    """``"cache,move,exact"`` -> tier tuple."""
    parts = [p for p in spec.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty ladder")
    return tuple(parse_tier(p) for p in parts)


@dataclass(frozen=True)
class ExperimentConfig:
    C: float = 1.0
    epsilon: float = 1e-4
    tiers: Tuple[Tier, ...] = (Tier.CACHE, Tier.MOVE_MAKING, Tier.EXACT)
    cache_policy: str = "dynamic"
    cache_size: int = 50
    move_restarts: int = 0
    exact_node_budget: int = DEFAULT_NODE_BUDGET
    exact_tol: float = 1e-6
    qp_tol: float = 1e-10
    certify_tol: float = 1e-6
    max_iterations: int = 100_000
    seed: int = 0
    workers: Optional[int] = None
    require_certificate: bool = False
    model_path: Optional[str] = None
    certificate_path: Optional[str] = None
    trace_path: Optional[str] = None

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.exact_node_budget < 1:
            raise ValueError("exact node budget must be >= 1")

    def ladder(self) -> LadderConfig:
        return LadderConfig(
            tiers=self.tiers,
            cache_policy=self.cache_policy,
            move_restarts=self.move_restarts,
            exact_tol=self.exact_tol,
            exact_node_budget=self.exact_node_budget,
        )

    def train_config(self) -> TrainConfig:
        ladder = self.ladder()
        if self.require_certificate and not ladder.certifying:
            raise CertificationUnavailable("a certificate needs a ladder ending in the exact tier")
        return TrainConfig(
            C=self.C,
            epsilon=self.epsilon,
            ladder=ladder,
            cache_size=self.cache_size,
            seed=self.seed,
            qp_tol=self.qp_tol,
            max_iterations=self.max_iterations,
            certify_tol=self.certify_tol,
            workers=self.workers,
        )
