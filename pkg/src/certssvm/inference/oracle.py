from __future__ import annotations

from typing import Iterable, Optional

from ..graph import FactorGraphInstance, LossSpec, ParameterVector, loss_augment, potentials
from .bnb import DEFAULT_NODE_BUDGET, branch_and_bound_potentials
from .moves import move_making_potentials
from .result import OracleResult, Tier


def loss_augmented_oracle(
    instance: FactorGraphInstance,
    truth,
    spec: Optional[LossSpec],
    params: ParameterVector,
    tier: Tier,
    *,
    init=None,
    restarts: int = 0,
    seed: int = 0,
    extra_inits: Optional[Iterable] = None,
    tol: float = 1e-6,
    max_nodes: int = DEFAULT_NODE_BUDGET,
) -> OracleResult:
    """Maximise ``score(y_hat) + loss(truth, y_hat)`` with the oracle named by ``tier``.

    ``value`` is the loss-augmented score of the returned labeling.  The
    move-making tier starts from ``init`` (default: ``truth``); the exact tier
    uses ``extra_inits`` and ``truth`` only to seed its incumbent.
    Budget errors from the exact tier propagate.
    """
    tier = Tier(tier)
    y = instance.check_labeling(truth)
    pot = potentials(loss_augment(instance, y, spec), params)
    if tier is Tier.MOVE_MAKING:
        start = y if init is None else instance.check_labeling(init)
        return move_making_potentials(pot, start, restarts=restarts, seed=seed, extra_inits=extra_inits)
    if tier is Tier.EXACT:
        seeds = [y] + list(extra_inits or ())
        return branch_and_bound_potentials(pot, tol=tol, max_nodes=max_nodes, candidates=seeds)
    raise ValueError(f"tier {tier} has no inference oracle")
