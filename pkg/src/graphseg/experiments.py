"""Ablation studies: cascade depth, training schedule, JPEG robustness, attribute randomization.

Each ablation trains a handful of model variants on the same seeded data
stream, evaluates them on one fixed synthesized test set and reports the
directional comparisons the study is meant to show.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, NamedTuple, Sequence

import numpy as np

from .cascade import CascadeModel, CascadePredictor, count_parameters
from .constants import SIZE_LEVELS
from .imgproc import jpeg_degrade
from .metrics import evaluate_dataset
from .models import DatasetGrid, EvalReport, ModelConfig, StageConfig, StageResult, StreamConfig
from .protocols import ImageSource, MaskPredictor, PatternSource
from .synthgen import SynthStream, base_image_pool, build_test_set
from .trainer import select_final_threshold, train_cascade, train_joint

_log = logging.getLogger(__name__)

AblationKind = Literal["depth", "training_mode", "jpeg", "attributes"]
TrainingMode = Literal["stagewise", "joint"]


def matched_depth_configs(channels: int = 16, input_size: int = 64) -> dict[str, ModelConfig]:
    """Cascades of 1-4 levels (and a single-scale 3-level) with roughly equal parameter counts."""
    return {
        "1-level": ModelConfig(levels=1, channels=channels, resblocks=12, input_size=input_size),
        "2-level": ModelConfig(levels=2, channels=channels, resblocks=6, input_size=input_size),
        "3-level": ModelConfig(levels=3, channels=channels, resblocks=4, input_size=input_size),
        "4-level": ModelConfig(levels=4, channels=channels, resblocks=3, input_size=input_size),
        "ss-3-level": ModelConfig(levels=3, channels=channels, resblocks=4, single_scale=True, input_size=input_size),
    }


def stage_schedule(template: StageConfig, levels: int) -> list[StageConfig]:
    return [dataclasses.replace(template, level=lvl) for lvl in range(levels)]


class TrainedVariant(NamedTuple):
    model: CascadeModel
    results: list[StageResult]
    miou_threshold: float


def train_variant(
    model_config: ModelConfig,
    stream: SynthStream,
    stage_template: StageConfig,
    seed: int,
    *,
    mode: TrainingMode = "stagewise",
    deterministic: bool = True,
) -> TrainedVariant:
    """Initialize, train and threshold one model."""
    model = CascadeModel.seeded(model_config, seed)
    stages = stage_schedule(stage_template, model_config.levels)
    if mode == "joint":
        results = train_joint(model, stream, stages, seed, deterministic=deterministic)
    else:
        results = train_cascade(model, stream, stages, seed, deterministic=deterministic)
    threshold = select_final_threshold(model, stream, stage_template.validation_samples, stage_template.threshold_grid)
    return TrainedVariant(model, results, threshold)


@dataclass(frozen=True, slots=True, eq=False)
class JpegDegradedPredictor:
    """Re-compresses every input at a fixed quality before predicting."""

    inner: MaskPredictor
    quality: int

    def predict_soft(self, image: np.ndarray) -> np.ndarray:
        return self.inner.predict_soft(jpeg_degrade(image, self.quality))


def jpeg_sweep(
    predictor: MaskPredictor,
    test_dir: str | Path,
    qualities: Sequence[int],
    *,
    miou_threshold: float | None = None,
    jobs: int = 1,
) -> dict[int, float]:
    """Overall max-F_0.3 of *predictor* on a test set re-degraded at each quality."""
    scores = {}
    for quality in qualities:
        report = evaluate_dataset(JpegDegradedPredictor(predictor, int(quality)), test_dir, miou_threshold=miou_threshold, jobs=jobs)
        scores[int(quality)] = report.overall.max_f03
        _log.info("jpeg sweep q=%d max-F0.3=%.4f", quality, scores[int(quality)])
    return scores


def size_miou(report: EvalReport) -> dict[str, float]:
    """Count-weighted mIoU per size level across categories, plus ``overall``."""
    out: dict[str, float] = {}
    for size in SIZE_LEVELS:
        cells = [c for c in report.cells if c.size == size]
        total = sum(c.count for c in cells)
        if total:
            out[size] = sum(c.miou * c.count for c in cells) / total
    out["overall"] = report.overall.miou
    return out


@dataclass(frozen=True, slots=True)
class AblationPlan:
    """What to compare, on which seeds, with which shared training and test settings."""

    kind: AblationKind
    model: ModelConfig
    stage: StageConfig
    stream: StreamConfig
    grid: DatasetGrid
    seeds: tuple[int, ...] = (0, 1, 2)
    qualities: tuple[int, ...] = (70, 85, 100)


class Variant(NamedTuple):
    name: str
    model: ModelConfig
    stream: StreamConfig
    mode: TrainingMode


def plan_variants(plan: AblationPlan) -> list[Variant]:
    if plan.kind == "depth":
        configs = matched_depth_configs(plan.model.channels, plan.model.input_size)
        return [Variant(name, cfg, plan.stream, "stagewise") for name, cfg in configs.items()]
    if plan.kind == "training_mode":
        return [Variant("stagewise", plan.model, plan.stream, "stagewise"), Variant("joint", plan.model, plan.stream, "joint")]
    if plan.kind == "jpeg":
        no_jpeg = dataclasses.replace(plan.stream, jpeg_quality_range=None)
        return [Variant("jpeg", plan.model, plan.stream, "stagewise"), Variant("no_jpeg", plan.model, no_jpeg, "stagewise")]
    return [
        Variant(mode, plan.model, dataclasses.replace(plan.stream, attribute_mode=mode), "stagewise")
        for mode in ("aligned", "simple", "none")
    ]


def _variant_metrics(plan: AblationPlan, trained: TrainedVariant, test_dir: Path, jobs: int) -> dict[str, float]:
    predictor = CascadePredictor(trained.model)
    if plan.kind == "jpeg":
        sweep = jpeg_sweep(predictor, test_dir, plan.qualities, miou_threshold=trained.miou_threshold, jobs=jobs)
        return {f"max_f0.3@q{q}": score for q, score in sweep.items()}
    report = evaluate_dataset(predictor, test_dir, miou_threshold=trained.miou_threshold, jobs=jobs)
    return {f"miou_{name}": value for name, value in size_miou(report).items()}


def run_ablation(
    plan: AblationPlan,
    images: ImageSource,
    patterns: PatternSource,
    out_dir: str | Path,
    *,
    jobs: int = 1,
    deterministic: bool = True,
) -> dict[str, Any]:
    """Train every variant on every seed and evaluate on one shared test set."""
    grid = dataclasses.replace(plan.grid, jpeg_quality_range=None) if plan.kind == "jpeg" else plan.grid
    test_dir = Path(out_dir) / "testset"
    build_test_set(base_image_pool(images, grid), test_dir, grid, patterns=patterns, jobs=jobs)
    rows = []
    for seed in plan.seeds:
        for variant in plan_variants(plan):
            _log.info("ablation %s: training %s (seed %d)", plan.kind, variant.name, seed)
            stream = SynthStream(images, patterns, dataclasses.replace(variant.stream, resolution=variant.model.input_size), seed)
            trained = train_variant(variant.model, stream, plan.stage, seed, mode=variant.mode, deterministic=deterministic)
            rows.append(
                {
                    "seed": seed,
                    "variant": variant.name,
                    "parameters": count_parameters(trained.model),
                    "miou_threshold": trained.miou_threshold,
                    "metrics": _variant_metrics(plan, trained, test_dir, jobs),
                }
            )
    return {"kind": plan.kind, "seeds": list(plan.seeds), "rows": rows, "checks": directional_checks(plan.kind, rows)}


def _by_seed(rows: Sequence[dict[str, Any]]) -> dict[int, dict[str, dict[str, float]]]:
    table: dict[int, dict[str, dict[str, float]]] = {}
    for row in rows:
        table.setdefault(row["seed"], {})[row["variant"]] = row["metrics"]
    return table


def _majority(votes: Sequence[bool]) -> dict[str, Any]:
    return {"per_seed": list(votes), "holds": bool(votes) and sum(votes) * 2 > len(votes)}


def directional_checks(kind: AblationKind, rows: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """Per-seed outcome of the comparison each ablation is expected to show, with a majority verdict."""
    table = _by_seed(rows)
    if kind == "depth":
        small = [t["3-level"].get("miou_small", 0.0) > t["1-level"].get("miou_small", 0.0) for t in table.values()]
        gap = [_size_gap(t["3-level"]) < _size_gap(t["1-level"]) for t in table.values()]
        return {"3-level beats 1-level on small": _majority(small), "3-level has smaller size gap": _majority(gap)}
    if kind == "training_mode":
        votes = [t["stagewise"]["miou_overall"] >= t["joint"]["miou_overall"] for t in table.values()]
        return {"stagewise >= joint": _majority(votes)}
    if kind == "jpeg":
        votes = [_jpeg_drop(t["no_jpeg"]) > _jpeg_drop(t["jpeg"]) for t in table.values()]
        return {"no-jpeg model loses more at low quality": _majority(votes)}
    means = {
        name: float(np.mean([t[name]["miou_overall"] for t in table.values()]))
        for name in ("aligned", "simple", "none")
    }
    return {"mean_miou": means}


def _size_gap(metrics: dict[str, float]) -> float:
    return abs(metrics.get("miou_large", 0.0) - metrics.get("miou_small", 0.0))


def _jpeg_drop(metrics: dict[str, float]) -> float:
    keys = sorted(metrics, key=lambda k: int(k.rsplit("q", 1)[1]))
    return metrics[keys[-1]] - metrics[keys[0]]
