"""Shared CLI argument definitions for graphseg.

Every subcommand takes the same common flags (``--config``, ``--out``,
``--seed``, ``--jobs``, ``--deterministic``, ``--log-level``). This module
is the single source of truth for those flags, their environment
variables and their defaults.
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass
from pathlib import Path

from .constants import DEFAULT_JOBS, DEFAULT_SEED

_ENV_SEED = "GRAPHSEG_SEED"
_ENV_JOBS = "GRAPHSEG_JOBS"
_ENV_LOG_LEVEL = "GRAPHSEG_LOG_LEVEL"

_DEFAULT_LOG_LEVEL = "WARNING"
_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _env(name: str) -> str | None:
    """Stripped env value or ``None``; argparse converts and validates string defaults."""
    value = os.environ.get(name, "").strip()
    return value or None


def _log_level(value: str) -> str:
    level = value.strip().upper()
    if level not in _LOG_LEVELS:
        raise argparse.ArgumentTypeError(f"invalid log level {value!r} (choose from {', '.join(_LOG_LEVELS)})")
    return level


def _add_io_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--out", type=Path, default=Path("."), help="Output directory (default: current directory)")


def _add_seed_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=_env(_ENV_SEED),
        help=f"Master seed; overrides the config file (default: config seed, GRAPHSEG_SEED or {DEFAULT_SEED})",
    )


def _add_jobs_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--jobs",
        type=int,
        default=_env(_ENV_JOBS) or DEFAULT_JOBS,
        help="Workers for data-parallel synthesis and evaluation (default: 1 or GRAPHSEG_JOBS)",
    )


def _add_mode_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Single-threaded reference mode: no prefetching, no worker pools",
    )
    parser.add_argument(
        "--log-level",
        type=_log_level,
        default=_env(_ENV_LOG_LEVEL) or _DEFAULT_LOG_LEVEL,
        help="Logging level (default: WARNING or GRAPHSEG_LOG_LEVEL)",
    )


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Add the shared graphseg arguments to *parser*.

    Defaults are resolved from environment variables at call time, so tests
    can monkeypatch env before calling this to control behaviour.
    """
    _add_io_arguments(parser)
    _add_seed_argument(parser)
    _add_jobs_argument(parser)
    _add_mode_arguments(parser)


@dataclass(frozen=True, slots=True)
class CommonArgs:
    """Typed, validated view of the common CLI arguments."""

    config: Path | None
    out_dir: Path
    seed: int | None
    jobs: int
    deterministic: bool
    log_level: str

    @staticmethod
    def from_namespace(ns: argparse.Namespace) -> "CommonArgs":
        """Build a ``CommonArgs`` from a parsed ``argparse.Namespace``.

        Deterministic mode forces a single worker.
        """
        return CommonArgs(
            config=ns.config,
            out_dir=ns.out,
            seed=ns.seed,
            jobs=1 if ns.deterministic else max(int(ns.jobs), 1),
            deterministic=bool(ns.deterministic),
            log_level=ns.log_level,
        )

    def resolve_seed(self, config_seed: int | None) -> int:
        """Flag (or env) first, then the config file, then the built-in default."""
        if self.seed is not None:
            return self.seed
        return DEFAULT_SEED if config_seed is None else config_seed
