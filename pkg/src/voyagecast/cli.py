"""Batch command-line interface: one subcommand per pipeline stage.

Exit codes: 0 on success, 1 on runtime failures (missing artifacts, schema
mismatches), 2 on usage errors. ``VOYAGECAST_THREADS`` caps numerical
thread-level parallelism and must be set before numpy loads, which is why
stage modules import lazily here.
"""
from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap() -> None:
    cap = os.environ.get("VOYAGECAST_THREADS")
    if not cap:
        return
    try:
        threads = max(1, int(cap))
    except ValueError:
        raise SystemExit(f"voyagecast: invalid VOYAGECAST_THREADS value {cap!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(threads))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voyagecast",
        description="AIS track curation, probabilistic route features, and trajectory forecasting",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    stages = ("synth", "grid", "ingest", "fit-prob", "featurize", "train", "predict", "evaluate")
    for stage in stages:
        sp = sub.add_parser(stage, help=f"run the {stage} stage")
        sp.add_argument("--config", required=True, help="pipeline configuration JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument(
            "--feature-set",
            choices=("standard", "probabilistic", "trigonometric"),
            default=None,
            help="override the configured feature set",
        )
        sp.add_argument(
            "--ablation",
            choices=("c1", "c2", "c3", "c4", "c5"),
            default=None,
            help="override the configured model variant",
        )
        sp.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_thread_cap()

    from .config import MissingArtifact, PipelineConfig
    from .pipeline import STAGE_FUNCTIONS

    try:
        cfg = PipelineConfig.load(args.config)
    except FileNotFoundError:
        print(f"voyagecast: config file {args.config!r} not found", file=sys.stderr)
        return 1
    except (ValueError, TypeError, KeyError) as exc:
        print(f"voyagecast: invalid config: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        cfg.seed = args.seed
    if args.feature_set is not None:
        cfg.feature_set = args.feature_set
    if args.ablation is not None:
        cfg.ablation = args.ablation
    out_dir = args.out if args.out is not None else cfg.paths.out_dir

    try:
        summary = STAGE_FUNCTIONS[args.stage](cfg, out_dir)
    except MissingArtifact as exc:
        print(f"voyagecast: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"voyagecast: {args.stage} failed: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
