import argparse
import logging
import os
import pathlib
import sys
import typing

import numpy as np

from . import constants
from .data_types import ExperimentKind
from .errors import CasOptimError
from .errors import ConfigError
from .experiments import load_config
from .experiments import run
from .output import compare_csv

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_SOLVER_FAILURE = 2


def thread_count(environ: typing.Mapping[str, str] | None = None) -> int:
    environ = os.environ if environ is None else environ
    value = environ.get(constants.THREADS_ENV)
    if value is None or value.strip() == "":
        return 1
    try:
        threads = int(value)
    except ValueError as exc:
        raise ConfigError(f"{constants.THREADS_ENV} must be an integer, got {value!r}") from exc
    if threads < 1:
        raise ConfigError(f"{constants.THREADS_ENV} must be at least 1, got {threads}")
    return threads


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cas-optim",
        description="Distortion-optimal waveform design for communication-assisted sensing",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in ["run"] + [kind.value for kind in ExperimentKind]:
        sub = subparsers.add_parser(
            name,
            help="run any experiment" if name == "run" else f"run a {name} experiment",
        )
        sub.add_argument("--config", type=pathlib.Path, required=True)
        sub.add_argument("--out", type=pathlib.Path, default=pathlib.Path("."))
        sub.add_argument("--trace", action="store_true")
        sub.add_argument("--seed", type=int, default=None)
    compare = subparsers.add_parser("compare", help="compare a result file against a golden file")
    compare.add_argument("actual", type=pathlib.Path)
    compare.add_argument("expected", type=pathlib.Path)
    compare.add_argument("--rel-tol", type=float, default=constants.GOLDEN_REL_TOL)
    return parser


def _compare(args: argparse.Namespace) -> int:
    logger = logging.getLogger(__name__)
    problems = compare_csv(args.actual, args.expected, rel_tol=args.rel_tol)
    for problem in problems:
        logger.error("%s", problem)
    if problems:
        return EXIT_SOLVER_FAILURE
    logger.info("%s matches %s", args.actual, args.expected)
    return EXIT_OK


def _run(args: argparse.Namespace) -> int:
    logger = logging.getLogger(__name__)
    try:
        config = load_config(args.config)
        if args.command != "run" and config.kind.value != args.command:
            raise ConfigError(
                f"Config {args.config} describes a {config.kind.value} experiment, not {args.command}"
            )
        n_jobs = thread_count()
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG_ERROR
    try:
        outcome = run(config, args.out, trace=args.trace, seed=args.seed, n_jobs=n_jobs)
    except ConfigError as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG_ERROR
    except (CasOptimError, np.linalg.LinAlgError) as exc:
        logger.error("Experiment failed: %s", exc)
        return EXIT_SOLVER_FAILURE
    for path in outcome.paths:
        print(path)
    return EXIT_OK if outcome.ok else EXIT_SOLVER_FAILURE


def main(argv: typing.Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "compare":
        return _compare(args)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
