"""Command-line experiment runner.

    fedgan-lab run --config cfg.json [--seed N] [--out DIR] [--scenario NAME]
    fedgan-lab validate --config cfg.json

Exit codes: 0 success, 2 config error, 3 runtime error, 4 verification
failure inside a scenario. The FEDGAN_LAB_OUT environment variable sets
the default output root when neither --out nor the config names one.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import (
    SCENARIOS,
    ConfigError,
    load_config,
    read_config_file,
    resolve_output_dir,
    validate_config,
)
from .scenarios import run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedgan-lab",
        description="Run desk-scale federated GAN experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and emit artifacts")
    run_p.add_argument("--config", required=True, help="JSON config path")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--scenario", default=None, choices=SCENARIOS,
                       help="override the config scenario")
    run_p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering (tables only)")

    val_p = sub.add_parser("validate", help="list config invariant violations")
    val_p.add_argument("--config", required=True, help="JSON config path")
    return parser


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        if args.scenario is not None:
            config.scenario = args.scenario
        if args.seed is not None:
            config.seed = args.seed
        if args.no_figures:
            config.figures = False
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = resolve_output_dir(config, args.out)
    try:
        passed = run_scenario(config, out_dir)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - map to the runtime exit code
        traceback.print_exc()
        print(f"runtime error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    if not passed:
        print("verification checks failed; see the report artifacts",
              file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        raw = read_config_file(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    diagnostics = validate_config(raw)
    for path, message in diagnostics:
        print(f"{path}: {message}")
    if diagnostics:
        return EXIT_CONFIG
    print("config is valid")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
