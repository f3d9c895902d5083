"""Command-line entry point for the retrieval and re-ranking pipeline.

Subcommands map one-to-one onto pipeline stages, plus ``run-all`` and
``report``. Every subcommand takes the same flags: --config, --stage-dir,
--seed (overrides the config seed), and --deterministic (forces
single-threaded execution regardless of the config).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import ConfigError, validate_config
from .pipeline import PipelineError, PipelineRun, STAGES

COMMANDS = STAGES + ("run-all", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kglp",
        description="Knowledge-graph link prediction: retrieve, fuse, train, rerank.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("--config", required=True, help="path to the YAML config")
        p.add_argument("--stage-dir", required=True,
                       help="directory holding per-stage artifacts")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded deterministic execution")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="[%(name)s] %(message)s")
    try:
        cfg = validate_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.deterministic:
            cfg = dataclasses.replace(cfg, deterministic=True)
        run = PipelineRun(cfg, args.stage_dir)
        if args.command == "run-all":
            run.run_all()
        elif args.command == "report":
            path = run.emit_report()
            sys.stdout.write(path.read_text(encoding="utf-8"))
        else:
            run.run_stage(args.command)
    except (ConfigError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
