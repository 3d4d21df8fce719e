"""Command-line entry point: ``certssvm {gen,train,eval,compare-caching,trace-plot}``.

Exit codes: 0 success, 2 invalid input or usage, 3 certificate requested but
not obtained.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

from ..graph import ModelError
from ..trainer import WORKERS_ENV, CuttingPlaneTrainer, TrainingError
from .compare import STRATEGIES, compare_caching_strategies
from .config import CertificationUnavailable, ExperimentConfig, parse_ladder, parse_tier
from .data import atomic_write_text, dumps_json, load_dataset, save_dataset
from .files import CsvTraceSink, load_model, read_trace_csv, save_certificate, save_model
from .metrics import evaluate
from .plots import write_trace_svg
from .synthetic import generate_synthetic

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNCERTIFIED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--C", dest="C", type=_positive_float, default=1.0, help="regularisation constant (default 1)")
    g.add_argument("--epsilon", type=_positive_float, default=1e-4, help="stopping threshold (default 1e-4)")
    g.add_argument("--ladder", default="cache,move,exact", help="comma-separated tiers (default cache,move,exact)")
    g.add_argument("--cache-policy", choices=("dynamic", "exhaust"), default="dynamic")
    g.add_argument("--cache-size", type=int, default=50, help="cached labelings per instance (default 50)")
    g.add_argument("--move-restarts", type=int, default=0)
    g.add_argument("--exact-node-budget", type=int, default=None, help="branch-and-bound subproblem limit")
    g.add_argument("--max-iterations", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=None, help=f"parallel oracle workers (env {WORKERS_ENV})")
    g.add_argument("--no-timing", action="store_true", help="write 0 for wall_ms so traces are reproducible")


def _experiment(args, **extra) -> ExperimentConfig:
    kw = dict(
        C=args.C,
        epsilon=args.epsilon,
        tiers=parse_ladder(args.ladder),
        cache_policy=args.cache_policy,
        cache_size=args.cache_size,
        move_restarts=args.move_restarts,
        max_iterations=args.max_iterations,
        seed=args.seed,
        workers=args.workers,
    )
    if args.exact_node_budget is not None:
        kw["exact_node_budget"] = args.exact_node_budget
    kw.update(extra)
    return ExperimentConfig(**kw)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="certssvm", description="Certified cutting-plane structural SVM training.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic grid dataset")
    g.add_argument("--grid-w", type=int, default=4)
    g.add_argument("--grid-h", type=int, default=4)
    g.add_argument("--labels", type=int, default=3)
    g.add_argument("--sigma", type=float, default=1.0, help="unary feature noise")
    g.add_argument("--instances", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--asymmetric", action="store_true", help="separate pairwise weights for (a, b) and (b, a)")
    g.add_argument("-o", "--output", required=True)

    t = sub.add_parser("train", help="train, certify, write model")
    t.add_argument("dataset")
    t.add_argument("--model", default="model.json")
    t.add_argument("--certificate", default="certificate.json")
    t.add_argument("--trace", default="trace.csv")
    t.add_argument("--require-certificate", action="store_true", help="exit 3 unless the run is certified")
    _add_training_flags(t)

    e = sub.add_parser("eval", help="score a model on a dataset")
    e.add_argument("dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--tier", default="move", help="MAP tier for prediction: move or exact (default move)")
    e.add_argument("-o", "--output", default=None, help="also write metrics JSON here")

    c = sub.add_parser("compare-caching", help="train under each cache strategy and report oracle usage")
    c.add_argument("dataset")
    c.add_argument("--out-dir", default="caching")
    c.add_argument("--strategies", default=",".join(STRATEGIES))
    _add_training_flags(c)

    p = sub.add_parser("trace-plot", help="render a trace CSV as SVG")
    p.add_argument("trace")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--title", default="")
    return ap


def _cmd_gen(args) -> int:
    ds = generate_synthetic(args.grid_w, args.grid_h, args.labels, args.sigma, args.instances, args.seed,
                            symmetric=not args.asymmetric)
    save_dataset(ds, args.output)
    print(f"wrote {len(ds)} instances to {args.output}")
    return EXIT_OK


def _cmd_train(args) -> int:
    exp = _experiment(args, require_certificate=args.require_certificate, model_path=args.model,
                      certificate_path=args.certificate, trace_path=args.trace)
    cfg = exp.train_config()
    ds = load_dataset(args.dataset)
    with CsvTraceSink(args.trace, timing=not args.no_timing) as sink:
        result = CuttingPlaneTrainer(cfg).fit(ds.samples, sink)
    cert = result.certificate
    save_certificate(cert, args.certificate)
    save_model(result.params, args.model, cfg, cert)
    print(
        f"iterations={len(result.trace)} oracle_calls={result.oracle_calls} "
        f"lower={cert.lower_bound!r} upper={cert.upper_bound!r} gap={cert.gap:.3e} status={cert.status}"
    )
    if exp.require_certificate and not cert.certified:
        return EXIT_UNCERTIFIED
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.dataset)
    m = evaluate(model, ds, parse_tier(args.tier))
    doc = m.to_dict()
    if args.output:
        atomic_write_text(args.output, dumps_json(doc))
    print(json.dumps({k: doc[k] for k in ("overall_accuracy", "mean_class_accuracy", "mean_jaccard")}))
    return EXIT_OK


def _cmd_compare(args) -> int:
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r} (choose from {', '.join(STRATEGIES)})")
    cfg = _experiment(args).train_config()
    ds = load_dataset(args.dataset)
    report = compare_caching_strategies(ds, cfg, args.out_dir, strategies, timing=not args.no_timing)
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def _cmd_plot(args) -> int:
    write_trace_svg(read_trace_csv(args.trace), args.output, args.title)
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "train": _cmd_train, "eval": _cmd_eval, "compare-caching": _cmd_compare,
            "trace-plot": _cmd_plot}


def _check_env() -> None:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return
    try:
        ok = int(raw) >= 1
    except ValueError:
        ok = False
    if not ok:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as ex:
        print(ex, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as ex:  # --help
        return int(ex.code or 0)
    try:
        _check_env()
        return COMMANDS[args.command](args)
    except CertificationUnavailable as ex:
        print(f"certssvm: {ex}", file=sys.stderr)
        return EXIT_UNCERTIFIED
    except (ValueError, ModelError, TrainingError, OSError) as ex:
        print(f"certssvm: error: {ex}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
