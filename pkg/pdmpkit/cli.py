"""Command-line front end.

    pdmp-kit <subcommand> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]

Exit codes: 0 success, 1 configuration error, 2 explosion suspected,
3 rate bound violated, 4 statistical check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from pdmpkit.config import setup_logging
from pdmpkit.errors import ConfigError
from pdmpkit.experiments.base import ExitCode
from pdmpkit.models.run_config import load_run_config
from pdmpkit.orchestrator import SUBCOMMANDS, Orchestrator

logger = logging.getLogger(__name__)

HELP = {
    "simulate": "simulate one trajectory and write trajectory.csv (and grid.csv)",
    "couple": "check the coupling TV bound of a sampler pair",
    "check-invariance": "test E[Af] = 0 under a candidate measure",
    "bias-sweep": "estimate the bias of rate-capped BPS samplers",
    "equivalence": "KS battery for constructions, superposition, thinning and first jumps",
    "bench": "events per second of the compiled Gaussian BPS loop",
}


def _seed(value: str) -> int:
    seed = int(value, 0)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return seed


def _threads(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdmp-kit", description="PDMP simulation and verification toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", default=None, help="output directory (default: PDMP_OUTPUT_DIR)")
        p.add_argument("--seed", type=_seed, default=None, help="override [engine] seed")
        p.add_argument("--threads", type=_threads, default=None, help="replica worker threads (default: PDMP_THREADS)")
        p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: PDMP_LOG_LEVEL)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level.upper() if args.log_level else None)

    try:
        run_config = load_run_config(args.config).with_seed(args.seed)
    except ConfigError as e:
        logger.error(f"[CLI] {e}")
        print(f"config error: {e}", file=sys.stderr)
        return int(ExitCode.CONFIG)

    result = Orchestrator(run_config, args.out, args.threads).route(args.subcommand)
    print(result.summary)
    for path in result.outputs:
        print(f"  wrote {path}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
