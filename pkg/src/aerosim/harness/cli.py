"""Command line: ``run``, ``print-default-config`` and ``version``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .. import __version__
from .config import ConfigError, default_config, format_config, parse_config
from .presets import PRESETS, run_preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aerosim", description="Air-to-ground link simulator experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment preset")
    r.add_argument("--preset", required=True, choices=PRESETS)
    r.add_argument("--config", help="configuration file; defaults when omitted")
    r.add_argument("--seed", type=_seed, default=0)
    r.add_argument("--out", required=True, help="output directory")
    sub.add_parser("print-default-config", help="print every key with its default")
    sub.add_parser("version", help="print the package version")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse reports usage errors with code 2
        return int(e.code or 0)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "print-default-config":
        sys.stdout.write(format_config(default_config()))
        return EXIT_OK
    try:
        cfg = parse_config(args.config) if args.config else default_config()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        csv_path, _ = run_preset(args.preset, cfg, args.seed, args.out)
    except Exception as e:  # noqa: BLE001 - any failure past validation is a runtime failure
        print(f"run failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(csv_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
