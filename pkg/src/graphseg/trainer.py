"""Stage-wise cascade training with per-image class balancing and threshold calibration.

Stage ℓ optimizes only level-ℓ parameters on the cumulative mask ``M̃_ℓ``;
coarser levels are frozen, so their factors in the product act as fixed
gates and the loss gradient reaching ``M_ℓ`` vanishes wherever the coarse
product is 0. After the step budget, a threshold ``τ_ℓ`` is calibrated on
a fresh validation batch against the precision/recall constraints.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .cascade import CascadeModel, forward
from .exceptions import ContractError, DimensionError
from .metrics import mean_precision_recall, select_miou_threshold, threshold_grid
from .models import Calibration, PyramidBatch, StageConfig, StageResult
from .ops import add, weighted_bce
from .optim import AdamState, adam_step, collect_grads
from .storage import CheckpointStore, stage_checkpoint_path
from .synthgen import SynthStream, stage_batches
from .tensor import Tensor

_log = logging.getLogger(__name__)

JOINT_STAGE_KEY = 1000
FINAL_VALIDATION_KEY = 2000


def _area_matrix(in_size: int, out_size: int) -> np.ndarray:
    """``out x in`` matrix averaging the input cells each output cell overlaps."""
    span = in_size / out_size
    starts = np.arange(out_size)[:, None] * span
    cells = np.arange(in_size)[None, :]
    overlap = np.clip(np.minimum(starts + span, cells + 1) - np.maximum(starts, cells), 0.0, None)
    return overlap / span


def downsample_gt(mask: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Area-average a {0, 1} mask (or a stack ``N x H x W``) and binarize; 0.5 ties go to 1."""
    height, width = mask.shape[-2:]
    if target_h > height or target_w > width or min(target_h, target_w) < 1:
        raise DimensionError(f"cannot downsample a {height}x{width} mask to {target_h}x{target_w}")
    if (target_h, target_w) == (height, width):
        return (np.asarray(mask) > 0).astype(np.uint8)
    rows, cols = _area_matrix(height, target_h), _area_matrix(width, target_w)
    averaged = np.einsum("ph,...hw,qw->...pq", rows, np.asarray(mask, dtype=np.float64), cols)
    return (averaged >= 0.5 - 1e-9).astype(np.uint8)


def class_weights(masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-image ``(1/α, 1/(1-α))`` with ``α`` the positive fraction, clamped to ``[1/HW, 1-1/HW]``."""
    flat = np.asarray(masks, dtype=np.float64).reshape(masks.shape[0], -1)
    pixels = flat.shape[1]
    alpha = flat.mean(axis=1)
    clamped = np.clip(alpha, 1.0 / pixels, 1.0 - 1.0 / pixels)
    hits = int(np.count_nonzero(clamped != alpha))
    if hits:
        _log.warning("class-balance clamp applied to %d of %d images (empty or full masks)", hits, len(alpha))
    return 1.0 / clamped, 1.0 / (1.0 - clamped)


def balanced_bce(pred: Tensor, masks: np.ndarray) -> Tensor:
    """Batch mean of per-image weighted BCE for ``N x 1 x H x W`` predictions."""
    pos, neg = class_weights(masks)
    return weighted_bce(pred, masks[:, None].astype(pred.dtype), pos, neg)


def stage_loss(model: CascadeModel, batch: PyramidBatch, masks: np.ndarray, level: int) -> Tensor:
    """Balanced BCE of the cumulative mask ``M̃_level`` against full-resolution masks.

    Levels below *level* are expected to be frozen (``set_trainable``);
    their factors then enter the product as constants.
    """
    if masks.shape[0] != batch.batch_size or tuple(masks.shape[1:]) != batch.full_size:
        raise DimensionError(f"masks of shape {masks.shape} do not match the pyramid batch")
    output = forward(model, batch, up_to_level=level)
    return balanced_bce(output.cumulative_masks[level], masks)


def calibrate_threshold(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    p_min: float,
    r_min: float,
    grid_step: float,
) -> Calibration:
    """Largest ``τ`` in ``{step, ..., 1-step}`` meeting both mean-precision and mean-recall floors.

    Falls back to the largest ``τ`` meeting recall alone (precision
    infeasible), then to the ``τ`` with the highest recall (infeasible).
    """
    thresholds = threshold_grid(grid_step, closed=False)
    precision, recall = mean_precision_recall(preds, gts, thresholds)
    recall_ok = recall >= r_min
    both = recall_ok & (precision >= p_min)
    if both.any():
        idx = int(np.flatnonzero(both)[-1])
        return Calibration(float(thresholds[idx]), float(precision[idx]), float(recall[idx]))
    if recall_ok.any():
        idx = int(np.flatnonzero(recall_ok)[-1])
        _log.warning("precision floor %.2f unreachable at recall %.2f; using τ=%.2f", p_min, r_min, thresholds[idx])
        return Calibration(float(thresholds[idx]), float(precision[idx]), float(recall[idx]), precision_feasible=False)
    idx = int(np.argmax(recall))
    _log.warning("recall floor %.2f unreachable (best %.3f at τ=%.2f)", r_min, recall[idx], thresholds[idx])
    return Calibration(
        float(thresholds[idx]), float(precision[idx]), float(recall[idx]), feasible=False, precision_feasible=False
    )


def _assert_frozen(frozen: dict[str, Tensor]) -> None:
    leaked = [name for name, param in frozen.items() if param.grad is not None and np.any(param.grad)]
    if leaked:
        raise ContractError(f"frozen parameters received gradients: {', '.join(leaked)}")


def _validation_soft(model: CascadeModel, images: np.ndarray, level: int) -> list[np.ndarray]:
    output = forward(model, model.batch_pyramid(images), up_to_level=level)
    return list(output.cumulative_masks[level].data[:, 0])


def _calibrate_level(model: CascadeModel, stream: SynthStream, config: StageConfig) -> Calibration:
    images, masks = stream.validation(config.level, config.validation_samples)
    soft = _validation_soft(model, images, config.level)
    return calibrate_threshold(soft, list(masks), config.p_min, config.r_min, config.threshold_grid)


def train_stage(
    model: CascadeModel,
    stream: SynthStream,
    config: StageConfig,
    rng: np.random.Generator | None = None,
    *,
    deterministic: bool = True,
) -> StageResult:
    """Adam-train level ``config.level`` alone, then calibrate its threshold.

    When *rng* is given it supplies the data seed of this stage, so a stage
    is reproducible from ``(model state, rng)`` alone.
    """
    if rng is not None:
        stream = dataclasses.replace(stream, seed=int(rng.integers(0, 2**63 - 1)))
    level = config.level
    model.set_trainable([level])
    params = model.parameters(level)
    frozen = {name: p for name, p in model.parameters().items() if name not in params}
    state = AdamState.for_parameters(params, learning_rate=config.learning_rate)
    losses: list[float] = []
    batches = stage_batches(stream, level, config.steps, config.batch_size, deterministic=deterministic)
    for step, (images, masks) in enumerate(batches):
        loss = stage_loss(model, model.batch_pyramid(images), masks, level)
        model.zero_grad()
        loss.backward()
        _assert_frozen(frozen)
        adam_step(params, collect_grads(params), state)
        losses.append(loss.item())
        _log.debug("stage %d step %d loss %.6f", level, step, losses[-1])
    model.set_trainable([])
    calibration = _calibrate_level(model, stream, config)
    _log.info("stage %d done: τ=%.2f precision=%.3f recall=%.3f", level, calibration.threshold, calibration.precision, calibration.recall)
    return StageResult(level, calibration, tuple(losses), {name: p.data.copy() for name, p in params.items()})


def checkpoint_manifest(
    model: CascadeModel, seed: int, stage: int, calibrations: Sequence[Calibration], *, steps: int = 0, **extra: Any
) -> dict[str, Any]:
    """Checkpoint manifest; *steps* counts optimizer steps taken through *stage*."""
    return {
        "model": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "seed": seed,
        "stage": stage,
        "steps": steps,
        "calibration": [c.to_dict() for c in calibrations],
        **extra,
    }


def _check_schedule(model: CascadeModel, stage_configs: Sequence[StageConfig]) -> None:
    levels = [cfg.level for cfg in stage_configs]
    if levels != list(range(model.num_levels)):
        raise DimensionError(f"stage configs must cover levels 0..{model.num_levels - 1} in order, got {levels}")


def train_cascade(
    model: CascadeModel,
    stream: SynthStream,
    stage_configs: Sequence[StageConfig],
    seed: int,
    *,
    run_dir: str | Path | None = None,
    start_level: int = 0,
    prior: Sequence[Calibration] = (),
    deterministic: bool = True,
) -> list[StageResult]:
    """Train stages ``start_level..L`` coarse to fine, checkpointing after each.

    Stage ℓ draws its data seed from ``default_rng([seed, ℓ])``, so resuming
    from the checkpoint of stage ℓ-1 reproduces stage ℓ exactly.
    """
    _check_schedule(model, stage_configs)
    calibrations = list(prior)
    results: list[StageResult] = []
    for config in stage_configs[start_level:]:
        _log.info("stage %d: %d steps, batch %d", config.level, config.steps, config.batch_size)
        result = train_stage(model, stream, config, np.random.default_rng([seed, config.level]), deterministic=deterministic)
        if result.infeasible:
            _log.warning("stage %d calibration infeasible (recall %.3f < %.2f)", config.level, result.calibration.recall, config.r_min)
        results.append(result)
        calibrations.append(result.calibration)
        if run_dir is not None:
            path = stage_checkpoint_path(run_dir, config.level)
            steps = sum(cfg.steps for cfg in stage_configs[: config.level + 1])
            manifest = checkpoint_manifest(model, seed, config.level, calibrations, steps=steps)
            CheckpointStore(path).save(model.state_dict(), manifest)
            _log.info("wrote checkpoint %s", path)
    return results


def _joint_loss(model: CascadeModel, batch: PyramidBatch, masks: np.ndarray) -> Tensor:
    """Sum over levels of balanced BCE between raw ``M_ℓ`` and the downsampled masks."""
    output = forward(model, batch)
    total: Tensor | None = None
    for mask in output.per_level_masks:
        level_gt = downsample_gt(masks, mask.shape[2], mask.shape[3])
        term = balanced_bce(mask, level_gt)
        total = term if total is None else add(total, term)
    assert total is not None
    return total


def train_joint(
    model: CascadeModel,
    stream: SynthStream,
    stage_configs: Sequence[StageConfig],
    seed: int,
    *,
    deterministic: bool = True,
) -> list[StageResult]:
    """Optimize every level at once with per-level supervision, then calibrate each level.

    Uses the summed step budget of *stage_configs* and the batch size and
    learning rate of the first stage.
    """
    _check_schedule(model, stage_configs)
    first = stage_configs[0]
    steps = sum(cfg.steps for cfg in stage_configs)
    stream = dataclasses.replace(stream, seed=int(np.random.default_rng([seed, JOINT_STAGE_KEY]).integers(0, 2**63 - 1)))
    model.set_trainable(range(model.num_levels))
    params = model.parameters()
    state = AdamState.for_parameters(params, learning_rate=first.learning_rate)
    losses: list[float] = []
    for step, (images, masks) in enumerate(stage_batches(stream, JOINT_STAGE_KEY, steps, first.batch_size, deterministic=deterministic)):
        loss = _joint_loss(model, model.batch_pyramid(images), masks)
        model.zero_grad()
        loss.backward()
        adam_step(params, collect_grads(params), state)
        losses.append(loss.item())
        _log.debug("joint step %d loss %.6f", step, losses[-1])
    model.set_trainable([])
    return [
        StageResult(cfg.level, _calibrate_level(model, stream, cfg), tuple(losses), {n: p.data.copy() for n, p in model.parameters(cfg.level).items()})
        for cfg in stage_configs
    ]


def select_final_threshold(model: CascadeModel, stream: SynthStream, count: int, grid_step: float) -> float:
    """mIoU-maximizing threshold of the full cascade on a fresh validation batch."""
    images, masks = stream.validation(FINAL_VALIDATION_KEY, count)
    soft = _validation_soft(model, images, model.num_levels - 1)
    return select_miou_threshold(soft, list(masks), grid_step)
