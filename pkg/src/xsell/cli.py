"""Batch CLI: one subcommand per pipeline stage plus ``run`` for the whole
chain. Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, DataError, NumericError
from .pipeline import STAGES, load_config, run_pipeline, run_stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="xsell",
        description=(
            "Cross-sell prediction and explanation pipeline: imbalance-aware "
            "tree ensembles, exact per-customer attributions, and statistical "
            "checks that the explanations are robust and hold next year."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=True, help="pipeline config JSON")
    p = sub.add_parser("run", help="run every stage in order")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            result = run_pipeline(cfg)
            print(f"manifest hash: {result['manifest_hash']}")
            print(f"artifacts: {len(result['artifacts'])}, failed cases: {len(result['failures'])}")
        else:
            written = run_stage(cfg, args.command)
            for path in written:
                print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
