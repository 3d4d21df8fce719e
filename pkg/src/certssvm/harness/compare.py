"""Side-by-side training runs under the three cache strategies."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

from ..inference import Tier
from ..trainer import CuttingPlaneTrainer, FitResult, LadderConfig, TrainConfig
from .data import atomic_write_text
from .plots import write_trace_svg

STRATEGIES = ("none", "exhaust", "dynamic")
REPORT_COLUMNS = (
    "strategy", "iterations", "cutting_planes", "full_oracle_calls", "cache_qp_solves", "final_o_W", "gap", "certified",
)


def strategy_ladder(base: LadderConfig, strategy: str) -> LadderConfig:
    """``base`` with the cache tier removed (``none``) or put first with the given policy."""
    full = base.full_tiers
    if strategy == "none":
        return replace(base, tiers=full)
    if strategy in ("exhaust", "dynamic"):
        return replace(base, tiers=(Tier.CACHE,) + full, cache_policy=strategy)
    raise ValueError(f"unknown caching strategy {strategy!r}")


@dataclass
class StrategyRun:
    strategy: str
    result: FitResult

    @property
    def row(self) -> dict:
        r = self.result
        return {
            "strategy": self.strategy,
            "iterations": len(r.trace),
            # rows whose constraint entered the working set
            "cutting_planes": sum(1 for row in r.trace.rows if row.violated),
            "full_oracle_calls": r.oracle_calls,
            "cache_qp_solves": r.cache_solves,
            "final_o_W": r.certificate.lower_bound,
            "gap": r.certificate.gap,
            "certified": r.certificate.certified,
        }


@dataclass
class ComparisonReport:
    runs: Dict[str, StrategyRun]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for run in self.runs.values():
            row = run.row
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in REPORT_COLUMNS)])
        return buf.getvalue()

    def max_relative_spread(self) -> float:
        vals = [run.result.certificate.lower_bound for run in self.runs.values()]
        scale = max(max(abs(v) for v in vals), 1e-300)
        return (max(vals) - min(vals)) / scale


def compare_caching_strategies(
    dataset,
    config: TrainConfig = TrainConfig(),
    out_dir: Optional[str] = None,
    strategies: List[str] = STRATEGIES,
    timing: bool = True,
) -> ComparisonReport:
    """Train once per strategy from the same config.

    With ``out_dir`` set, writes ``caching_comparison.csv`` plus, for each
    strategy, ``trace_<strategy>.csv`` and ``trace_<strategy>.svg``.
    """
    samples = getattr(dataset, "samples", dataset)
    runs = {}
    for name in strategies:
        cfg = replace(config, ladder=strategy_ladder(config.ladder, name))
        runs[name] = StrategyRun(name, CuttingPlaneTrainer(cfg).fit(samples))
    report = ComparisonReport(runs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        atomic_write_text(os.path.join(out_dir, "caching_comparison.csv"), report.to_csv())
        for name, run in runs.items():
            atomic_write_text(os.path.join(out_dir, f"trace_{name}.csv"), run.result.trace.to_csv(timing))
            write_trace_svg(run.result.trace, os.path.join(out_dir, f"trace_{name}.svg"),
                            title=f"cache strategy: {name}")
    return report
