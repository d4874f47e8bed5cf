"""``memcentric`` command line.

Exit codes: 0 success, 1 usage error, 2 configuration or input error,
3 a runtime invariant was violated.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from ..geometry import ConfigError, ProtocolError
from ..pud.layout import CapacityError
from ..pud.ops import PudError
from ..smd import SchedulingError, StarvationError
from .config import SUBCOMMANDS, parse_config
from .report import InvariantViolation, emit
from .runner import run

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="memcentric",
                description="DRAM read-disturbance, in-memory compute and near-memory model driver.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True,
                   help="YAML experiment file, or builtin:<name> for a shipped one")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default from config, else csv)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = parse_config(args.config, overrides=overrides)
        report = run(cfg, args.subcommand)
        fmt = args.format or cfg.output.format
        out = args.out if args.out is not None else cfg.output.path
        if out is not None and args.out is None:
            out = str(cfg.resolve(out))
        emit(report, fmt, out)
    except (ConfigError, CapacityError, PudError) as e:
        print(f"memcentric: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, SchedulingError, StarvationError, InvariantViolation, AssertionError) as e:
        print(f"memcentric: invariant violated: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"memcentric: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
