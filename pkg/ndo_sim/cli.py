"""Command-line interface for ndo-sim."""

import argparse
import asyncio
import os
import sys
from typing import Any, Callable, List, Optional

from loguru import logger

from . import __version__
from .checks import run_checks
from .config import Config
from .errors import (
    ConfigError,
    InvalidParameterError,
    InvalidStateError,
    NumericalError,
    UnknownPresetError,
    UnsupportedParameterError,
)
from .experiment import ENGINES
from .presets import catalog
from .runner import ExperimentRunner

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def parse_seeds(text: str) -> List[int]:
    """Parse "1-50", "1,2,7" or a mix such as "1-10,20" into a seed list."""
    seeds: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                low, high = (int(v) for v in part.split("-", 1))
                if high < low:
                    raise ValueError(f"empty range {part}")
                seeds.extend(range(low, high + 1))
            else:
                seeds.append(int(part))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid seed list '{text}': {e}") from e
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--env",
        type=str,
        help="Path to environment file (default: .env in the working directory)"
    )

    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Set logging level (overrides LOG_LEVEL env var)"
    )


def create_parser() -> argparse.ArgumentParser:
    """Create command-line argument parser.

    Returns:
        Configured argument parser.
    """
    parser = argparse.ArgumentParser(
        prog="ndo-sim",
        description="Driven dissipative Kerr oscillator: master equation, quantum trajectories and classical dynamics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  ndo-sim list                                  # Show available presets
  ndo-sim describe fig7-chaos                   # Print a preset as JSON
  ndo-sim run fig2-bistable --out runs/fig2     # Run a preset
  ndo-sim run --config my.json --seeds 1-200    # Run a saved configuration
  ndo-sim validate                              # Fast invariant checks
        """
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}"
    )

    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a preset or a configuration file")
    source = run.add_mutually_exclusive_group()
    source.add_argument("--preset", type=str, help="Preset name (prefixes accepted)")
    source.add_argument("--config", type=str, help="Path to an experiment JSON file")
    run.add_argument("name", nargs="?", help="Preset name, same as --preset")
    run.add_argument("--out", type=str, help="Output directory (overrides NDO_OUTPUT_ROOT)")
    run.add_argument("--seeds", type=parse_seeds, help='Trajectory seeds, e.g. "1-50" or "1,2,3"')
    run.add_argument("--trajectories", type=_positive_int, help="Number of trajectories (seeds 1..N)")
    run.add_argument("--dt", type=_positive_float, help="QSD time step")
    run.add_argument(
        "--damping-convention",
        choices=["half", "full"],
        help="Classical damping term: -(gamma/2) alpha or -gamma alpha"
    )
    run.add_argument("--engine", choices=list(ENGINES), help="Engine selection")
    run.add_argument("--workers", type=_positive_int, help="Worker processes (overrides NDO_WORKERS)")
    run.add_argument("--plots", action="store_true", help="Emit matplotlib plot scripts in the bundle")
    _add_common(run)

    listing = commands.add_parser("list", help="List preset names")
    _add_common(listing)

    describe = commands.add_parser("describe", help="Print a preset's full configuration as JSON")
    describe.add_argument("name", help="Preset name (prefixes accepted)")
    _add_common(describe)

    validate = commands.add_parser("validate", help="Run the fast invariant suite")
    _add_common(validate)

    return parser


def _apply_environment(args: argparse.Namespace) -> Config:
    if args.log_level:
        os.environ["LOG_LEVEL"] = args.log_level
    if getattr(args, "plots", False):
        os.environ["NDO_EMIT_PLOTS"] = "true"
    return Config(env_file=args.env)


def _flag_or_env(flag: Any, variable: str, read: Callable[[], Any]) -> Any:
    """A command-line value wins; otherwise an explicitly set environment variable."""
    if flag is not None:
        return flag
    if variable in os.environ:
        return read()
    return None


def _run(args: argparse.Namespace, config: Config) -> int:
    preset = args.preset or args.name
    if args.config and args.name:
        raise ConfigError("give either a preset name or --config, not both")
    if not preset and not args.config:
        raise ConfigError("nothing to run: give a preset name or --config")

    overrides = {
        "trajectories": _flag_or_env(args.trajectories, "NDO_TRAJECTORIES", lambda: config.trajectories),
        "dt": _flag_or_env(args.dt, "NDO_QSD_DT", lambda: config.qsd_dt),
        "workers": _flag_or_env(args.workers, "NDO_WORKERS", lambda: config.workers),
        "seeds": args.seeds,
        "engine": args.engine,
        "damping_convention": _flag_or_env(
            args.damping_convention, "NDO_DAMPING_CONVENTION", lambda: config.damping_convention
        ),
    }
    runner = ExperimentRunner(config)

    if sys.platform == "win32":
        asyncio.set_event_loop_policy(asyncio.WindowsProactorEventLoopPolicy())

    if args.config:
        result = asyncio.run(runner.run_config(args.config, args.out, **overrides))
    else:
        result = asyncio.run(runner.run_preset(preset, args.out, **overrides))
    print(result.output_dir)
    return EXIT_OK


def _describe(args: argparse.Namespace) -> int:
    print(catalog.get(args.name).to_json())
    return EXIT_OK


def _validate(config: Config) -> int:
    ExperimentRunner(config)
    if not config.validate():
        return EXIT_VALIDATION
    results = run_checks()
    for result in results:
        status = "ok  " if result.passed else "FAIL"
        print(f"{status} {result.name:<26} {result.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAILURE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for the CLI."""
    parser = create_parser()
    args = parser.parse_args(argv)

    try:
        config = _apply_environment(args)

        if args.command == "list":
            for name in catalog.names():
                print(name)
            code = EXIT_OK
        elif args.command == "describe":
            code = _describe(args)
        elif args.command == "validate":
            code = _validate(config)
        else:
            code = _run(args, config)

    except KeyboardInterrupt:
        logger.info("Run interrupted by user")
        code = EXIT_FAILURE
    except UnknownPresetError as e:
        logger.error(f"{e}")
        code = EXIT_VALIDATION
    except (ConfigError, InvalidParameterError) as e:
        logger.error(f"Invalid configuration: {e}")
        code = EXIT_VALIDATION
    except (NumericalError, InvalidStateError, UnsupportedParameterError) as e:
        logger.error(f"Numerical failure: {e}")
        code = EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"Run failed: {e}")
        code = EXIT_FAILURE

    sys.exit(code)


if __name__ == "__main__":
    main()
