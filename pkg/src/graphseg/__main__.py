from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, NamedTuple

from .bootstrap import RunOutcome, run_ablate, run_eval, run_gradcheck, run_infer, run_synth, run_train
from .cli import CommonArgs, add_common_arguments
from .config import AblateFileConfig, SynthFileConfig, TrainFileConfig, load_config
from .constants import DEFAULT_SEED, RUN_MANIFEST_NAME
from .exceptions import ConfigError, GraphSegError, NumericalCheckError, StorageError
from .formatters import run_manifest, write_json

_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 rather than argparse's 2, which is reserved for I/O failures."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


class _Run(NamedTuple):
    outcome: RunOutcome
    config: dict[str, Any]
    seed: int
    manifest_dir: Path


def _require_config(common: CommonArgs, command: str) -> Path:
    if common.config is None:
        raise ConfigError(f"{command} needs --config")
    return common.config


def _cmd_synth(args: argparse.Namespace, common: CommonArgs) -> _Run:
    config = load_config(common.config, SynthFileConfig) if common.config else SynthFileConfig()
    seed = common.resolve_seed(config.seed)
    outcome = run_synth(config, common.out_dir, seed, jobs=common.jobs)
    return _Run(outcome, config.model_dump(mode="json"), seed, common.out_dir)


def _cmd_train(args: argparse.Namespace, common: CommonArgs) -> _Run:
    config = load_config(common.config, TrainFileConfig) if common.config else TrainFileConfig()
    seed = common.resolve_seed(config.seed)
    outcome = run_train(config, common.out_dir, seed, deterministic=common.deterministic, resume=args.resume)
    return _Run(outcome, config.model_dump(mode="json"), seed, common.out_dir)


def _cmd_eval(args: argparse.Namespace, common: CommonArgs) -> _Run:
    config = load_config(common.config, TrainFileConfig) if common.config else None
    outcome = run_eval(args.checkpoint, args.test_dir, common.out_dir, config=config, jobs=common.jobs)
    dumped = config.model_dump(mode="json") if config else {}
    return _Run(outcome, dumped, common.resolve_seed(None), common.out_dir)


def _mask_path(out: Path) -> Path:
    return out if out.suffix else out / "mask.png"


def _cmd_infer(args: argparse.Namespace, common: CommonArgs) -> _Run:
    out_mask = _mask_path(common.out_dir)
    outcome = run_infer(args.checkpoint, args.image, out_mask)
    resolved = {"checkpoint": str(args.checkpoint), "image": str(args.image), "out_mask": str(out_mask)}
    return _Run(outcome, resolved, common.resolve_seed(None), out_mask.parent)


def _cmd_gradcheck(args: argparse.Namespace, common: CommonArgs) -> _Run:
    seed = common.resolve_seed(None)
    return _Run(run_gradcheck(common.out_dir, seed), {}, seed, common.out_dir)


def _cmd_ablate(args: argparse.Namespace, common: CommonArgs) -> _Run:
    config = load_config(_require_config(common, "ablate"), AblateFileConfig)
    seed = common.resolve_seed(None)
    outcome = run_ablate(config, common.out_dir, seed, jobs=common.jobs, deterministic=common.deterministic)
    return _Run(outcome, config.model_dump(mode="json"), seed, common.out_dir)


Handler = Callable[[argparse.Namespace, CommonArgs], _Run]


def _add_subcommand(subparsers: Any, name: str, handler: Handler, help_text: str) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, help=help_text, description=help_text)
    add_common_arguments(parser)
    parser.set_defaults(handler=handler)
    return parser


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser with one subparser per command."""
    parser = _Parser(prog="graphseg", description="Synthesize, train and evaluate graphics-pattern segmentation cascades.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_subcommand(subparsers, "synth", _cmd_synth, "Materialize a fixed synthetic test set")
    train = _add_subcommand(subparsers, "train", _cmd_train, "Train a cascade stage by stage")
    train.add_argument("--resume", action="store_true", help="Continue after the latest stage checkpoint in --out")
    evaluate = _add_subcommand(subparsers, "eval", _cmd_eval, "Evaluate a checkpoint on a test set")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--test-dir", type=Path, required=True)
    infer = _add_subcommand(subparsers, "infer", _cmd_infer, "Predict the pattern mask of one image (--out is the mask path)")
    infer.add_argument("--checkpoint", type=Path, required=True)
    infer.add_argument("--image", type=Path, required=True)
    _add_subcommand(subparsers, "gradcheck", _cmd_gradcheck, "Finite-difference check of every differentiable op")
    _add_subcommand(subparsers, "ablate", _cmd_ablate, "Run one ablation study")
    return parser


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, NumericalCheckError):
        return EXIT_NUMERICAL
    if isinstance(exc, StorageError):
        return EXIT_IO
    return EXIT_USAGE


def _record_failure(command: str, common: CommonArgs, manifest_dir: Path, exc: Exception) -> None:
    """Best-effort ``run.json`` for a failed command; a second storage error is only logged."""
    seed = DEFAULT_SEED if common.seed is None else common.seed
    try:
        write_json(manifest_dir / RUN_MANIFEST_NAME, run_manifest(command, {}, seed, "failed", error=str(exc)))
    except StorageError as write_exc:
        _log.debug("could not record failure manifest: %s", write_exc)


def _execute(command: str, handler: Handler, args: argparse.Namespace, common: CommonArgs) -> int:
    try:
        run = handler(args, common)
        manifest = run_manifest(command, run.config, run.seed, run.outcome.status, run.outcome.warnings, **run.outcome.extra)
        write_json(run.manifest_dir / RUN_MANIFEST_NAME, manifest)
    except (GraphSegError, ValueError) as exc:
        sys.stderr.write(f"graphseg {command}: {exc}\n")
        if not isinstance(exc, ConfigError):
            _record_failure(command, common, common.out_dir if command != "infer" else _mask_path(common.out_dir).parent, exc)
        return _exit_code(exc)
    for warning in run.outcome.warnings:
        sys.stderr.write(f"warning: {warning}\n")
    sys.stderr.write(run.outcome.summary + "\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, configure logging once, run one command and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    common = CommonArgs.from_namespace(args)
    logging.basicConfig(level=common.log_level, format="%(levelname)s %(name)s: %(message)s")
    return _execute(args.command, args.handler, args, common)


if __name__ == "__main__":
    raise SystemExit(main())
