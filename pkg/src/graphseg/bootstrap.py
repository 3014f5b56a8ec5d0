"""Composition root for graphseg commands.

Builds image and pattern sources, data streams and models from validated
config files, runs one command, writes its artifacts and returns a
``RunOutcome`` for ``__main__`` to report. Nothing here parses arguments
or exits the process.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from .cascade import CascadeModel, CascadePredictor, count_parameters, predict_soft
from .config import AblateFileConfig, SynthFileConfig, TrainFileConfig
from .constants import CALIBRATION_NAME, CONFIG_NAME, DEFAULT_GRID_STEP, LOSS_CURVE_NAME, PR_CURVES_NAME, REPORT_NAME
from .exceptions import ConfigError, DimensionError, StorageError
from .experiments import AblationPlan, run_ablation, stage_schedule
from .formatters import ReportFormatter, TrainingFormatter, write_json
from .gradcheck import assert_suite, run_suite
from .imgproc import read_image, write_mask, write_soft_mask
from .metrics import evaluate_dataset
from .models import Calibration, ModelConfig
from .patterns import ProceduralPatternSource, SpriteDirectorySource
from .protocols import ImageSource, PatternSource
from .storage import Checkpoint, CheckpointStore, final_checkpoint_path, stage_checkpoint_path
from .synthgen import DirectoryImageSource, ProceduralImageSource, SynthStream, base_image_pool, build_test_set
from .trainer import checkpoint_manifest, select_final_threshold, train_cascade

_log = logging.getLogger(__name__)

ABLATION_NAME = "ablation.json"
GRADCHECK_NAME = "gradcheck.json"


class RunOutcome(NamedTuple):
    """What a command did: status for ``run.json``, warnings, a one-line summary and extra manifest fields."""

    status: str
    summary: str
    warnings: list[str]
    extra: dict[str, Any]


def build_image_source(base_dir: Path | None) -> ImageSource:
    """Directory of natural images when configured, procedural colour fields otherwise."""
    if base_dir is None:
        return ProceduralImageSource()
    return DirectoryImageSource(Path(base_dir))


def build_pattern_source(sprite_dir: Path | None) -> PatternSource:
    if sprite_dir is None:
        return ProceduralPatternSource()
    return SpriteDirectorySource(Path(sprite_dir))


def build_stream(config: TrainFileConfig, seed: int) -> SynthStream:
    stream_config = config.data.to_stream_config(resolution=config.model.input_size)
    images = build_image_source(config.data.base_dir)
    return SynthStream(images, build_pattern_source(config.data.sprite_dir), stream_config, seed)


def check_compatible(checkpoint: Checkpoint, config: ModelConfig) -> None:
    """Raise ``ConfigError`` unless *checkpoint* was trained with *config*."""
    expected = config.config_hash()
    if checkpoint.config_hash != expected:
        raise ConfigError(f"model config hash {expected[:12]} does not match checkpoint hash {str(checkpoint.config_hash)[:12]}")


def load_model(path: str | Path) -> tuple[CascadeModel, Checkpoint]:
    """Rebuild a model from a checkpoint file, verifying its manifest is self-consistent."""
    checkpoint = CheckpointStore(path).load()
    config = checkpoint.model_config
    if checkpoint.config_hash != config.config_hash():
        raise StorageError(f"checkpoint {path} manifest hash does not match its model config")
    model = CascadeModel(config)
    try:
        model.load_state_dict(checkpoint.parameters)
    except DimensionError as exc:
        raise StorageError(f"checkpoint {path} does not fit its model config: {exc}") from exc
    return model, checkpoint


def decision_threshold(checkpoint: Checkpoint) -> float:
    """Calibrated mIoU threshold, else the last stage threshold, else 0.5."""
    value = checkpoint.manifest.get("miou_threshold")
    if value is None and checkpoint.manifest.get("calibration"):
        value = checkpoint.manifest["calibration"][-1]["threshold"]
    return 0.5 if value is None else float(value)


def run_synth(config: SynthFileConfig, out_dir: Path, seed: int, *, jobs: int = 1) -> RunOutcome:
    """Materialize a fixed test set under *out_dir*."""
    grid = config.to_grid(seed)
    images = build_image_source(config.base_dir)
    manifest = build_test_set(
        base_image_pool(images, grid), out_dir, grid, patterns=build_pattern_source(config.sprite_dir), jobs=jobs
    )
    count = sum(len(cell["samples"]) for cell in manifest["cells"])
    return RunOutcome("ok", f"synth: wrote {count} samples in {len(manifest['cells'])} cells to {out_dir}", [], {"samples": count})


def _latest_stage(out_dir: Path, levels: int) -> int | None:
    found = [lvl for lvl in range(levels) if stage_checkpoint_path(out_dir, lvl).is_file()]
    return max(found) if found else None


def resume_from(model: CascadeModel, out_dir: Path, seed: int) -> tuple[int, list[Calibration]]:
    """Load the latest stage checkpoint under *out_dir*; return the next level and the prior calibrations."""
    last = _latest_stage(out_dir, model.num_levels)
    if last is None:
        _log.warning("no stage checkpoint under %s; training from scratch", out_dir)
        return 0, []
    checkpoint = CheckpointStore(stage_checkpoint_path(out_dir, last)).load()
    check_compatible(checkpoint, model.config)
    if checkpoint.manifest.get("seed") != seed:
        raise ConfigError(f"seed {seed} does not match checkpoint seed {checkpoint.manifest.get('seed')}")
    model.load_state_dict(checkpoint.parameters)
    _log.info("resuming after stage %d from %s", last, out_dir)
    return last + 1, [Calibration(**c) for c in checkpoint.manifest.get("calibration", [])]


def _calibration_warnings(calibrations: Sequence[Calibration]) -> list[str]:
    warnings = []
    for level, calibration in enumerate(calibrations):
        if not calibration.feasible:
            warnings.append(f"stage {level}: recall floor unreachable (recall {calibration.recall:.3f})")
        elif not calibration.precision_feasible:
            warnings.append(f"stage {level}: precision floor unreachable (precision {calibration.precision:.3f})")
    return warnings


def run_train(
    config: TrainFileConfig, out_dir: Path, seed: int, *, deterministic: bool = True, resume: bool = False
) -> RunOutcome:
    """Stage-wise training with per-stage checkpoints, then the final model and its curves."""
    model = CascadeModel.seeded(config.model.to_model_config(), seed)
    stream = build_stream(config, seed)
    template = config.stage.to_stage_config()
    start, prior = resume_from(model, out_dir, seed) if resume else (0, [])
    stages = stage_schedule(template, model.num_levels)
    results = train_cascade(
        model, stream, stages, seed, run_dir=out_dir, start_level=start, prior=prior, deterministic=deterministic
    )
    calibrations = [*prior, *(r.calibration for r in results)]
    miou = select_final_threshold(model, stream, template.validation_samples, template.threshold_grid)
    manifest = checkpoint_manifest(
        model, seed, model.num_levels - 1, calibrations, steps=sum(s.steps for s in stages), miou_threshold=miou
    )
    CheckpointStore(final_checkpoint_path(out_dir)).save(model.state_dict(), manifest)
    write_json(out_dir / CONFIG_NAME, config.model_dump(mode="json") | {"seed": seed})
    TrainingFormatter().write_loss_curve(results, out_dir / LOSS_CURVE_NAME)
    TrainingFormatter().write_calibration(calibrations, miou, out_dir / CALIBRATION_NAME)
    warnings = _calibration_warnings(calibrations)
    summary = f"train: {model.num_levels} levels, {count_parameters(model)} parameters, mIoU threshold {miou:.2f}"
    extra = {"start_level": start, "miou_threshold": miou, "config_hash": model.config.config_hash()}
    return RunOutcome("completed_with_warnings" if warnings else "ok", summary, warnings, extra)


def run_eval(
    checkpoint_path: Path,
    test_dir: Path,
    out_dir: Path,
    *,
    config: TrainFileConfig | None = None,
    jobs: int = 1,
) -> RunOutcome:
    """Evaluate a checkpoint on a synthesized test set; write ``report.json`` and ``pr_curves.csv``."""
    model, checkpoint = load_model(checkpoint_path)
    grid_step = DEFAULT_GRID_STEP
    if config is not None:
        check_compatible(checkpoint, config.model.to_model_config())
        grid_step = config.stage.threshold_grid
    miou = checkpoint.manifest.get("miou_threshold")
    report = evaluate_dataset(CascadePredictor(model), test_dir, grid_step, miou_threshold=miou, jobs=jobs)
    ReportFormatter().write_report(report, out_dir / REPORT_NAME)
    ReportFormatter().write_pr_curves(report, out_dir / PR_CURVES_NAME)
    warnings = [] if miou is not None else ["mIoU threshold selected on the evaluated set"]
    overall = report.overall
    summary = f"eval: {len(report.cells)} cells, mIoU {overall.miou:.3f}, MAE {overall.mae:.4f}, max-F0.3 {overall.max_f03:.3f}"
    return RunOutcome("ok", summary, warnings, {"checkpoint": str(checkpoint_path), "test_dir": str(test_dir)})


def soft_mask_path(out_mask: Path) -> Path:
    return out_mask.with_name(f"{out_mask.stem}_soft{out_mask.suffix or '.png'}")


def run_infer(checkpoint_path: Path, image_path: Path, out_mask: Path) -> RunOutcome:
    """Predict one image; write the binarized mask and the soft mask next to it."""
    model, checkpoint = load_model(checkpoint_path)
    threshold = decision_threshold(checkpoint)
    soft = predict_soft(model, read_image(image_path))
    write_mask(out_mask, soft >= threshold)
    write_soft_mask(soft_mask_path(out_mask), soft)
    positive = float(np.mean(soft >= threshold))
    summary = f"infer: {positive:.1%} of pixels above threshold {threshold:.2f}, mask written to {out_mask}"
    return RunOutcome("ok", summary, [], {"threshold": threshold, "positive_fraction": positive})


def run_gradcheck(out_dir: Path, seed: int) -> RunOutcome:
    """Run the finite-difference suite, record every result, then raise on any failure."""
    results = run_suite(seed)
    write_json(out_dir / GRADCHECK_NAME, [r._asdict() for r in results])
    assert_suite(results)
    worst = max(r.max_error for r in results)
    return RunOutcome("ok", f"gradcheck: {len(results)} checks passed, worst relative error {worst:.2e}", [], {})


def run_ablate(config: AblateFileConfig, out_dir: Path, seed: int, *, jobs: int = 1, deterministic: bool = True) -> RunOutcome:
    """Run one ablation study and write ``ablation.json``."""
    model_config = config.model.to_model_config()
    plan = AblationPlan(
        kind=config.kind,
        model=model_config,
        stage=config.stage.to_stage_config(),
        stream=config.data.to_stream_config(resolution=model_config.input_size),
        grid=config.test.to_grid(seed),
        seeds=tuple(config.seeds),
        qualities=tuple(config.qualities),
    )
    images = build_image_source(config.data.base_dir)
    patterns = build_pattern_source(config.data.sprite_dir)
    payload = run_ablation(plan, images, patterns, out_dir, jobs=jobs, deterministic=deterministic)
    write_json(out_dir / ABLATION_NAME, payload)
    verdicts = {name: check.get("holds") for name, check in payload["checks"].items() if isinstance(check, dict)}
    summary = f"ablate {config.kind}: {len(payload['rows'])} runs, checks {json.dumps(verdicts)}"
    return RunOutcome("ok", summary, [], {"kind": config.kind})
