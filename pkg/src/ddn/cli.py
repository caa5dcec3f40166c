"""Command line entry point: ``ddn <subcommand> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import DDNError
from .pipeline import REPORT_TXT, STAGES, ExperimentConfig, run_pipeline, run_stage

log = logging.getLogger("ddn")


def build_parser():
    parser = argparse.ArgumentParser(prog="ddn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [n for n, _ in STAGES] + ["pipeline"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML experiment config; defaults are used when omitted")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="run directory (overrides the config's out)")
    return parser


def load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    cfg.validate()
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "pipeline":
            run_pipeline(cfg)
            print((Path(cfg.out) / REPORT_TXT).read_text(), end="")
        else:
            result = run_stage(args.command, cfg)
            if args.command == "report":
                print(result, end="")
    except DDNError as exc:
        log.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
