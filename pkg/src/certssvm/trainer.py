"""One-slack cutting-plane training with an oracle ladder and optimality certificate.

Constraints come from three tiers, cheapest first: per-sample caches of
earlier inference results, greedy move-making, and certified
branch-and-bound.  Training stops only when the last tier of the ladder finds
no constraint violated by more than ``epsilon``.  When that tier is exact, the
restricted QP objective (a lower bound on the optimum) and the exact primal
objective (an upper bound) form a certificate.
"""

from __future__ import annotations

import csv
import io
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .graph import FeatureLayout, FactorGraphInstance, LossSpec, ModelError, ParameterVector, joint_feature, loss
from .inference.bnb import DEFAULT_NODE_BUDGET
from .inference.oracle import loss_augmented_oracle
from .inference.result import OracleResult, Quality, SearchBudgetExceeded, Tier
from .qp import JointConstraint, QPSolution, mark_active, prune_inactive, solve_restricted_qp

WORKERS_ENV = "CERTSSVM_WORKERS"


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Sample:
    instance: FactorGraphInstance
    truth: np.ndarray
    loss_spec: Optional[LossSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "truth", self.instance.check_labeling(self.truth))
        if self.loss_spec is not None and self.loss_spec.weights.shape != (self.instance.node_count,):
            raise ModelError("loss weights must have one entry per node")


def dataset_layout(samples: Sequence[Sample]) -> FeatureLayout:
    if not samples:
        raise ModelError("dataset is empty")
    layout = samples[0].instance.layout
    for s in samples[1:]:
        layout.check(s.instance)
    return layout


@dataclass(frozen=True)
class LadderConfig:
    """Ordered oracle tiers plus cache policy.

    ``cache_policy`` is ``"dynamic"`` (keep using the cache only while its
    primal estimate stays close to the last full-oracle estimate) or
    ``"exhaust"`` (use the cache until it yields no violated constraint).
    """

    tiers: Tuple[Tier, ...] = (Tier.CACHE, Tier.MOVE_MAKING, Tier.EXACT)
    cache_policy: str = "dynamic"
    move_restarts: int = 0
    move_warm_start: bool = True
    exact_tol: float = 1e-6
    exact_node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        tiers = tuple(Tier(t) for t in self.tiers)
        object.__setattr__(self, "tiers", tiers)
        if not tiers:
            raise ValueError("ladder needs at least one tier")
        if len(set(tiers)) != len(tiers):
            raise ValueError("ladder tiers must be distinct")
        if Tier.CACHE in tiers[1:]:
            raise ValueError("the cache tier can only come first")
        if tiers == (Tier.CACHE,):
            raise ValueError("ladder needs an inference tier")
        if self.cache_policy not in ("dynamic", "exhaust"):
            raise ValueError(f"unknown cache policy {self.cache_policy!r}")

    @property
    def full_tiers(self) -> Tuple[Tier, ...]:
        return tuple(t for t in self.tiers if t is not Tier.CACHE)

    @property
    def certifying(self) -> bool:
        return self.tiers[-1] is Tier.EXACT


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    epsilon: float = 1e-4
    ladder: LadderConfig = field(default_factory=LadderConfig)
    cache_size: int = 50
    seed: int = 0
    qp_tol: float = 1e-10
    prune_patience: int = 20
    max_iterations: int = 100_000
    certify_tol: float = 1e-6
    workers: Optional[int] = None

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.cache_size < 1:
            raise ValueError("cache_size must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    tier: str
    o_W: float
    o_I: float
    oracle_calls: int
    wall_ms: float
    xi: float
    xi_prime: float
    violated: bool
    working_set_size: int


TRACE_COLUMNS = ("iteration", "tier", "o_W", "o_I", "oracle_calls_cumulative", "wall_ms")


class BoundTrace:
    """Per-iteration record of bounds and oracle usage."""

    def __init__(self):
        self.rows: List[TraceRow] = []

    def append(self, row: TraceRow) -> None:
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def for_tier(self, tier: Tier) -> List[TraceRow]:
        return [r for r in self.rows if r.tier == Tier(tier).value]

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow(trace_csv_row(r, timing))
        return buf.getvalue()


def trace_csv_row(r: TraceRow, timing: bool = True) -> list:
    return [r.iteration, r.tier, repr(r.o_W), repr(r.o_I), r.oracle_calls, f"{r.wall_ms:.3f}" if timing else "0"]


@dataclass(frozen=True)
class Certificate:
    lower_bound: float
    upper_bound: float
    gap: float
    epsilon: float
    C: float
    certified: bool
    status: str
    exact_slack: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def schedule_next_tier(o_C: float, o_Q: float, o_W: float, next_tier: Tier = Tier.MOVE_MAKING) -> Tier:
    """Keep using the cache iff ``o_C - o_Q < (o_Q - o_W) / 2``."""
    if not all(np.isfinite(v) for v in (o_C, o_Q, o_W)):
        raise ValueError("schedule test needs finite objective values")
    return Tier.CACHE if o_C - o_Q < 0.5 * (o_Q - o_W) else Tier(next_tier)


@dataclass(frozen=True)
class LadderState:
    """Outcome of the tier that just ran.

    ``violated`` is None for a cache refusal (all caches empty);
    ``cache_test_passed`` is the dynamic schedule outcome after a cache step.
    """

    tier: Tier
    violated: Optional[bool]
    cache_test_passed: Optional[bool] = None


def ladder_step(state: LadderState, ladder: LadderConfig) -> Optional[Tier]:
    """Next tier to run, or None when training terminates."""
    tiers = ladder.tiers
    tier = Tier(state.tier)
    if tier is Tier.CACHE:
        if not state.violated:
            return ladder.full_tiers[0]
        if ladder.cache_policy == "exhaust" or state.cache_test_passed:
            return Tier.CACHE
        return ladder.full_tiers[0]
    if state.violated:
        return tiers[0]
    k = tiers.index(tier)
    return None if k == len(tiers) - 1 else tiers[k + 1]


def compute_bounds(
    theta: np.ndarray,
    o_W: float,
    C: float,
    epsilon: float,
    xi_prime_by_tier: dict,
    exact_slack: float = 0.0,
    tol: float = 1e-6,
) -> Certificate:
    """Bracket the training optimum.

    The lower bound is the restricted objective ``o_W``; the upper bound is
    ``C * xi'_EXACT + |theta|^2 / 2`` (plus any residual branch-and-bound
    slack).  Under-generating estimates never enter the upper bound.
    """
    half = 0.5 * float(theta @ theta)
    if Tier.EXACT not in xi_prime_by_tier:
        return Certificate(o_W, float("inf"), float("inf"), epsilon, C, False, "uncertified: no exact-tier evaluation")
    upper = C * (xi_prime_by_tier[Tier.EXACT] + exact_slack) + half
    gap = upper - o_W
    certified = gap <= C * epsilon + tol
    status = "certified" if certified else "uncertified: gap above threshold"
    return Certificate(o_W, upper, gap, epsilon, C, certified, status, exact_slack)


@dataclass
class _CacheEntry:
    labeling: np.ndarray
    psi: np.ndarray
    loss: float


@dataclass
class FitResult:
    params: ParameterVector
    certificate: Certificate
    trace: BoundTrace
    working_set_size: int
    oracle_calls: int
    cache_solves: int
    exact_budget_exhausted: bool = False

    def __iter__(self):
        return iter((self.params, self.certificate, self.trace))


class CuttingPlaneTrainer:
    """Stateful trainer; one ``fit`` at a time."""

    def __init__(self, config: TrainConfig = TrainConfig()):
        self.config = config

    # -- per-sample helpers -------------------------------------------------

    def _setup(self, samples: Sequence[Sample]):
        self.samples = list(samples)
        self.layout = dataset_layout(self.samples)
        self.psi_truth = [joint_feature(s.instance, s.truth) for s in self.samples]
        self.caches = [deque(maxlen=self.config.cache_size) for _ in self.samples]
        workers = self.config.workers or int(os.environ.get(WORKERS_ENV, "1"))
        self.workers = max(1, workers)

    def _entry(self, i: int, labeling: np.ndarray) -> _CacheEntry:
        s = self.samples[i]
        return _CacheEntry(labeling, joint_feature(s.instance, labeling), loss(s.truth, labeling, s.loss_spec))

    def _remember(self, i: int, labeling: np.ndarray) -> None:
        cache = self.caches[i]
        for k, e in enumerate(cache):
            if np.array_equal(e.labeling, labeling):
                del cache[k]
                break
        cache.append(self._entry(i, labeling))

    def _best_cached(self, i: int, theta: np.ndarray) -> Optional[Tuple[_CacheEntry, float]]:
        best, best_v = None, -np.inf
        for e in reversed(self.caches[i]):
            v = e.loss - float(theta @ (self.psi_truth[i] - e.psi))
            if v > best_v:
                best, best_v = e, v
        return None if best is None else (best, best_v)

    def _map(self, fn, items):
        if self.workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    def _aggregate(self, entries: Sequence[_CacheEntry], origin: str, theta: np.ndarray):
        delta = np.zeros(self.layout.size)
        loss_sum = 0.0
        for i, e in enumerate(entries):
            delta += self.psi_truth[i] - e.psi
            loss_sum += e.loss
        c = JointConstraint(delta, loss_sum, origin)
        return c, c.violation(theta)

    # -- constraint generation ----------------------------------------------

    def cache_lookup(self, theta: np.ndarray):
        """Most violated constraint over the cached labelings, or None if every cache is empty."""
        if all(len(c) == 0 for c in self.caches):
            return None
        entries = []
        for i, s in enumerate(self.samples):
            found = self._best_cached(i, theta)
            entries.append(found[0] if found else self._entry(i, s.truth))
        return self._aggregate(entries, Tier.CACHE.value, theta)

    def generate_constraint(self, theta: np.ndarray, tier: Tier, iteration: int = 0):
        """Run the tier's oracle on every sample and aggregate one joint constraint.

        Returns ``(constraint, xi_prime, results)``; outputs are added to the caches.
        """
        tier = Tier(tier)
        if tier is Tier.CACHE:
            found = self.cache_lookup(theta)
            return None if found is None else (found[0], found[1], None)
        ladder = self.config.ladder
        params = ParameterVector(self.layout, theta)

        def run(i):
            s = self.samples[i]
            extra = []
            if tier is Tier.EXACT or ladder.move_warm_start:
                found = self._best_cached(i, theta)
                if found is not None:
                    extra.append(found[0].labeling)
            try:
                return loss_augmented_oracle(
                    s.instance,
                    s.truth,
                    s.loss_spec,
                    params,
                    tier,
                    restarts=ladder.move_restarts,
                    seed=[self.config.seed, iteration, i],
                    extra_inits=extra,
                    tol=ladder.exact_tol,
                    max_nodes=ladder.exact_node_budget,
                )
            except SearchBudgetExceeded as ex:
                return OracleResult(ex.labeling, ex.value, Quality.RELAXED_UPPER_BOUND, upper_bound=ex.upper_bound)

        results = self._map(run, list(range(len(self.samples))))
        entries = [self._entry(i, r.labeling) for i, r in enumerate(results)]
        for i, r in enumerate(results):
            self._remember(i, r.labeling)
        c, xi_prime = self._aggregate(entries, tier.value, theta)
        return c, xi_prime, results

    # -- main loop ------------------------------------------------------------

    def fit(self, samples: Sequence[Sample], sink: Optional[Callable[[TraceRow], None]] = None) -> FitResult:
        cfg = self.config
        ladder = cfg.ladder
        self._setup(samples)
        C, eps = cfg.C, cfg.epsilon
        dim = self.layout.size

        theta = np.zeros(dim)
        xi = 0.0
        o_W = 0.0
        W: List[JointConstraint] = []
        retired: List[JointConstraint] = []
        o_Q: Optional[float] = None
        trace = BoundTrace()
        oracle_calls = cache_solves = solves = 0
        exact_eval = None
        budget_hit = False
        status = None
        tier = ladder.tiers[0]
        it = 0
        t0 = time.perf_counter()

        while True:
            if it >= cfg.max_iterations:
                status = "uncertified: iteration limit"
                break
            out = self.generate_constraint(theta, tier, it)
            if out is None:
                tier = ladder_step(LadderState(tier, None), ladder)
                continue
            c, xi_prime, results = out
            it += 1
            if tier is not Tier.CACHE:
                oracle_calls += 1
            o_I = C * xi_prime + 0.5 * float(theta @ theta)
            if tier is not Tier.CACHE:
                o_Q = o_I
            if tier is Tier.EXACT:
                slack = float(sum(r.upper_bound - r.value for r in results))
                exhausted = any(r.quality is Quality.RELAXED_UPPER_BOUND for r in results)
                budget_hit = budget_hit or exhausted
                exact_eval = (theta.copy(), xi_prime, slack, o_I)
            violated = xi_prime - xi >= eps
            if violated and any(c.same_as(w) for w in W):
                violated = False
            if violated:
                c.last_active_iteration = solves
                W.append(c)
                solves += 1
                W, retired, sol = self._solve_with_retired(W, retired, C, dim, solves)
                if tier is Tier.CACHE:
                    cache_solves += 1
                theta, xi, o_W = sol.theta, sol.xi, sol.objective

            test = None
            if tier is Tier.CACHE and violated and ladder.cache_policy == "dynamic":
                test = schedule_next_tier(o_I, o_Q, o_W, ladder.full_tiers[0]) is Tier.CACHE
            row = TraceRow(
                iteration=it,
                tier=tier.value,
                o_W=float(o_W),
                o_I=float(o_I),
                oracle_calls=oracle_calls,
                wall_ms=1000.0 * (time.perf_counter() - t0),
                xi=float(xi),
                xi_prime=float(xi_prime),
                violated=bool(violated),
                working_set_size=len(W),
            )
            trace.append(row)
            if sink is not None:
                sink(row)
            nxt = ladder_step(LadderState(tier, violated, test), ladder)
            if nxt is None:
                break
            tier = nxt

        if exact_eval is not None and np.array_equal(exact_eval[0], theta):
            cert = compute_bounds(theta, o_W, C, eps, {Tier.EXACT: exact_eval[1]}, exact_eval[2], cfg.certify_tol)
        else:
            cert = compute_bounds(theta, o_W, C, eps, {}, 0.0, cfg.certify_tol)
        if status is not None and cert.certified is False:
            cert = Certificate(**{**cert.to_dict(), "status": status})
        if budget_hit and not cert.certified:
            cert = Certificate(**{**cert.to_dict(), "status": "uncertified: exact-tier budget exhausted"})
        return FitResult(
            params=ParameterVector(self.layout, theta),
            certificate=cert,
            trace=trace,
            working_set_size=len(W),
            oracle_calls=oracle_calls,
            cache_solves=cache_solves,
            exact_budget_exhausted=budget_hit,
        )

    def _solve_with_retired(self, W, retired, C, dim, solves):
        """Solve over ``W``, prune, and reactivate retired cuts violated at the new theta.

        Pruned constraints are only set aside: whenever one of them would cut
        off the new solution it returns to the working set and the QP is
        re-solved, so the result is optimal for every constraint seen and the
        restricted objective never decreases.
        """
        tol = max(self.config.qp_tol, 1e-12)
        while True:
            sol = self._solve(W, C, dim)
            mark_active(W, sol.alphas, solves)
            for w_c, a in zip(W, sol.alphas):
                w_c.alpha = a
            kept = prune_inactive(W, solves, self.config.prune_patience)
            kept_ids = {id(k) for k in kept}
            retired = retired + [w for w in W if id(w) not in kept_ids]
            W = kept
            back = [r for r in retired if r.violation(sol.theta) > sol.xi + tol]
            if not back:
                return W, retired, sol
            back_ids = {id(b) for b in back}
            retired = [r for r in retired if id(r) not in back_ids]
            for b in back:
                b.alpha = 0.0
                b.last_active_iteration = solves
            W = W + back

    def _solve(self, W: List[JointConstraint], C: float, dim: int) -> QPSolution:
        alpha0 = np.array([w.alpha for w in W])
        try:
            sol = solve_restricted_qp(W, C, tol=self.config.qp_tol, dim=dim, alpha0=alpha0)
        except ValueError as ex:
            raise TrainingError(f"restricted QP failed: {ex}") from ex
        if not np.all(np.isfinite(sol.theta)):
            raise TrainingError("restricted QP returned non-finite parameters")
        return sol


def fit(
    samples: Sequence[Sample],
    C: float = 1.0,
    epsilon: float = 1e-4,
    ladder: Optional[LadderConfig] = None,
    cache_size: int = 50,
    seed: int = 0,
    sink: Optional[Callable[[TraceRow], None]] = None,
    **kwargs,
) -> FitResult:
    """Train with the cutting-plane method; unpacks as ``(params, certificate, trace)``."""
    cfg = TrainConfig(C=C, epsilon=epsilon, ladder=ladder or LadderConfig(), cache_size=cache_size, seed=seed,
                      **kwargs)
    return CuttingPlaneTrainer(cfg).fit(samples, sink)


def exact_objective(params: ParameterVector, samples: Sequence[Sample], C: float, tol: float = 1e-6) -> float:
    """True primal objective ``|theta|^2/2 + C * sum_i max_y [loss + score(y) - score(truth)]``."""
    total = 0.0
    for s in samples:
        r = loss_augmented_oracle(s.instance, s.truth, s.loss_spec, params, Tier.EXACT, tol=tol)
        total += loss(s.truth, r.labeling, s.loss_spec) - float(
            params.theta @ (joint_feature(s.instance, s.truth) - joint_feature(s.instance, r.labeling))
        )
    return 0.5 * params.norm_sq() + C * total
