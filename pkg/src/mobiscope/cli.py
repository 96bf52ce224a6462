"""Command line entry point: `mobiscope <subcommand> --workdir DIR [--config FILE]`."""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline
from .config import config_help, load_config

STAGES = {
    "synth": "generate a synthetic population with planted ground truth",
    "ingest": "parse, clip and canonicalize the raw post log",
    "trajectories": "build filtered per-user trajectories",
    "metrics": "compute gyradius metrics and the monthly series",
    "centers": "run DBSCAN activity centers and home detection",
    "demographics": "infer race/gender/age from profile names",
    "analyze": "density fits, correlation and KDE rasters",
    "report": "bundle the demographic comparison report and figures",
    "score": "score pipeline outputs against planted ground truth",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mobiscope",
        description="Mobility analytics pipeline for geo-tagged post logs.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in STAGES.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--workdir", required=True, help="checkpoint directory")
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single config key")
        if name == "synth":
            p.add_argument("--seed", type=int, default=42)
            p.add_argument("--n-users", type=int, default=500)
            p.add_argument("--jitter-m", type=float, default=None,
                           help="position jitter sigma (default eps/4)")
        if name == "ingest":
            p.add_argument("--input", default=None, help="posts JSONL (overrides posts_file)")
        if name == "score":
            p.add_argument("--truth", default=None, help="ground-truth JSONL path")
            p.add_argument("--eps-m", type=float, default=None,
                           help="home recovery tolerance (default: eps_m)")
        if name == "report":
            p.add_argument("--no-figures", action="store_true",
                           help="skip PNG rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"mobiscope: bad --set {item!r}, expected KEY=VALUE", file=sys.stderr)
            return 2
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    try:
        cfg = load_config(args.config, overrides=overrides)
        if args.command == "synth":
            result = pipeline.stage_synth(cfg, args.workdir, seed=args.seed,
                                          n_users=args.n_users, jitter_m=args.jitter_m)
        elif args.command == "ingest":
            result = pipeline.stage_ingest(cfg, args.workdir, input_path=args.input)
        elif args.command == "trajectories":
            result = pipeline.stage_trajectories(cfg, args.workdir)
        elif args.command == "metrics":
            result = pipeline.stage_metrics(cfg, args.workdir)
        elif args.command == "centers":
            result = pipeline.stage_centers(cfg, args.workdir)
        elif args.command == "demographics":
            result = pipeline.stage_demographics(cfg, args.workdir)
        elif args.command == "analyze":
            result = pipeline.stage_analyze(cfg, args.workdir)
        elif args.command == "report":
            result = pipeline.stage_report(cfg, args.workdir,
                                           render_figures=not args.no_figures)
        else:
            result = pipeline.stage_score(cfg, args.workdir, truth_path=args.truth,
                                          eps_m=args.eps_m)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"mobiscope {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary = {k: v for k, v in result.items() if k not in ("parameters", "groups")}
    print(json.dumps(summary, default=str, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
