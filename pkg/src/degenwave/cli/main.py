"""Command-line entry point.

Every subcommand runs the pipeline up to its stage, reusing cached stage
outputs in the chosen output directory.  Exit codes: 0 success, 2 invalid
configuration, 3 stage failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .pipeline import STAGE_ORDER, PipelineRunner, StageFailure

_SUBCOMMAND_STAGE = {
    "simulate": "simulate",
    "curve": "curve",
    "frames": "frames",
    "energy": "energy",
    "profile-fit": "profile-fit",
    "solitons": "solitons",
    "normcheck": "normcheck",
    "report": "report",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="degenwave",
        description="Blow-up laboratory for radial wave equations with "
                    "degenerate coefficients.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, stage in _SUBCOMMAND_STAGE.items():
        sp = sub.add_parser(name, help=f"run the pipeline up to the {stage} stage")
        sp.add_argument("--config", required=True, help="run configuration file")
        sp.add_argument("--out", default=None,
                        help="output directory (default: from the config)")
        sp.add_argument("--jobs", type=int, default=1,
                        help="worker pool size for per-base-point analyses")
        sp.add_argument("--stage", default=None, choices=STAGE_ORDER,
                        help="force this stage to re-run even when cached")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    runner = PipelineRunner(config, out_dir=args.out, jobs=args.jobs)
    try:
        manifest = runner.run(target=_SUBCOMMAND_STAGE[args.command],
                              force=args.stage)
    except StageFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    for stage, rec in manifest["stages"].items():
        print(f"{stage:12s} {rec['status']:7s} {rec.get('seconds', 0.0):8.2f}s "
              f"({len(rec.get('outputs', []))} outputs)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
