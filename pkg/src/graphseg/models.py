"""Core domain models for graphseg.

Configuration objects and results are frozen dataclasses: once a stage has
been trained or a report computed, the record must not change under the
caller's feet. Containers holding ``numpy`` arrays use ``eq=False`` because
element-wise array comparison has no single truth value.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Literal
import hashlib
import json

import numpy as np

from .constants import (
    CATEGORIES,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CHANNELS,
    DEFAULT_GRID_STEP,
    DEFAULT_JPEG_QUALITY_RANGE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LEVELS,
    DEFAULT_MATCH_PROBABILITY,
    DEFAULT_P_MIN,
    DEFAULT_R_MIN,
    DEFAULT_RESBLOCKS,
    DEFAULT_SEED,
    DEFAULT_SIGMA_STEP,
    DEFAULT_STAGE_STEPS,
    DEFAULT_STRENGTH_RANGE,
    DEFAULT_TEST_RESOLUTION,
    DEFAULT_TRAIN_RESOLUTION,
    DEFAULT_VALIDATION_SAMPLES,
    SIZE_LEVELS,
    SIZE_TAXONOMY,
    TRAIN_SIZE_WEIGHTS,
)

Category = Literal["sticker", "line", "text", "logo"]
SizeLevel = Literal["small", "medium", "large"]
AttributeMode = Literal["aligned", "simple", "none"]
PlacementMode = Literal["match", "mismatch", "simple", "none"]


@dataclass(frozen=True, slots=True)
class Window:
    """Half-open pixel rectangle ``[top, bottom) x [left, right)``."""

    top: int
    left: int
    bottom: int
    right: int

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def area(self) -> int:
        return max(self.height, 0) * max(self.width, 0)

    def dilate(self, fraction: float, height: int, width: int) -> "Window":
        """Grow each side by *fraction* of the window's extent, clamped to the image."""
        dy = int(round(self.height * fraction))
        dx = int(round(self.width * fraction))
        return Window(
            top=max(self.top - dy, 0),
            left=max(self.left - dx, 0),
            bottom=min(self.bottom + dy, height),
            right=min(self.right + dx, width),
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.top, self.left, self.bottom, self.right)


@dataclass(frozen=True, slots=True)
class AttributeStats:
    """Colour statistics in HSV space used to align patterns with their surroundings.

    Invariants: ``brightness`` and ``saturation`` in [0, 1]; ``hue`` in
    [0, 2π) radians; both contrasts non-negative.
    """

    brightness: float
    saturation: float
    hue: float
    local_contrast: float
    global_contrast: float


@dataclass(frozen=True, slots=True, eq=False)
class ScalePyramid:
    """Images ``X_ℓ`` ordered coarse to fine with their scale factors ``σ_ℓ``.

    The last level is the full-resolution input (``σ_L == 1``).
    """

    levels: tuple[np.ndarray, ...]
    scale_factors: tuple[float, ...]

    @property
    def full_size(self) -> tuple[int, int]:
        height, width = self.levels[-1].shape[:2]
        return int(height), int(width)


@dataclass(frozen=True, slots=True, eq=False)
class PyramidBatch:
    """A batch of pyramids in network layout: each level is ``N x 3 x h x w``."""

    levels: tuple[np.ndarray, ...]
    scale_factors: tuple[float, ...]
    full_size: tuple[int, int]

    @property
    def batch_size(self) -> int:
        return int(self.levels[0].shape[0])


@dataclass(frozen=True, slots=True, eq=False)
class Pattern:
    """An RGBA sprite (straight alpha, values in [0, 1]) tagged with its category.

    ``size_param`` records the category's own size measure when the sprite
    was rasterized at final scale (stroke width ratio for lines, glyph size
    for text); it is ``None`` for sprites that are scaled at placement time.
    """

    sprite: np.ndarray
    category: Category
    size_param: float | None = None

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"Pattern.category must be one of {CATEGORIES}, got {self.category!r}")
        if self.sprite.ndim != 3 or self.sprite.shape[2] != 4:
            raise ValueError("Pattern.sprite must be an H x W x 4 RGBA array")

    @property
    def native_size(self) -> tuple[int, int]:
        return int(self.sprite.shape[0]), int(self.sprite.shape[1])

    @property
    def alpha(self) -> np.ndarray:
        return self.sprite[..., 3]

    @property
    def coverage(self) -> float:
        """Fraction of sprite pixels whose alpha exceeds 0.5."""
        return float(np.mean(self.alpha > 0.5))


@dataclass(frozen=True, slots=True)
class PlacedPattern:
    """Manifest record for one pattern composited into a sample."""

    category: Category
    bbox: tuple[int, int, int, int]
    area_fraction: float
    attribute_mode: PlacementMode
    size_param: float | None = None
    bbox_area_fraction: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self) | {"bbox": list(self.bbox)}


@dataclass(frozen=True, slots=True, eq=False)
class SynthSample:
    """A synthesized ``(image, mask)`` pair plus the placements that produced it.

    ``size_param`` is the drawn value of the category's size measure (total
    coverage, stroke width ratio or glyph size).
    """

    image: np.ndarray
    mask: np.ndarray
    placements: tuple[PlacedPattern, ...]
    jpeg_quality: int | None = None
    size_param: float = 0.0

    @property
    def mask_fraction(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True, slots=True)
class SynthesisConfig:
    """Everything ``synthesize`` needs to draw one sample for one taxonomy cell.

    ``area_range`` is the category's size measure range (coverage ratio,
    stroke width ratio or glyph size). ``bbox_range`` is only used for text.
    ``jpeg_quality_range=None`` disables the compression step.
    """

    category: Category = "sticker"
    size_level: SizeLevel = "small"
    area_range: tuple[float, float] = (0.001, 0.016)
    count_range: tuple[int, int] = (1, 2)
    match_probability: float = DEFAULT_MATCH_PROBABILITY
    jpeg_quality_range: tuple[int, int] | None = DEFAULT_JPEG_QUALITY_RANGE
    seed: int = 0
    attribute_mode: AttributeMode = "aligned"
    strength_range: tuple[float, float] = DEFAULT_STRENGTH_RANGE
    bbox_range: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        lo, hi = self.area_range
        if not 0.0 < lo < hi <= 0.6:
            raise ValueError(f"area_range must satisfy 0 < lo < hi <= 0.6, got {self.area_range}")
        if self.count_range[0] < 1 or self.count_range[1] < self.count_range[0]:
            raise ValueError(f"count_range must satisfy 1 <= min <= max, got {self.count_range}")
        if not 0.0 <= self.match_probability <= 1.0:
            raise ValueError("match_probability must lie in [0, 1]")
        if self.jpeg_quality_range is not None:
            qlo, qhi = self.jpeg_quality_range
            if not 1 <= qlo <= qhi <= 100:
                raise ValueError(f"jpeg_quality_range must lie in [1, 100], got {self.jpeg_quality_range}")
        if self.category not in CATEGORIES or self.size_level not in SIZE_LEVELS:
            raise ValueError(f"unknown cell ({self.category!r}, {self.size_level!r})")

    @classmethod
    def for_cell(cls, category: str, size_level: str, **overrides: Any) -> "SynthesisConfig":
        """Build the config of a taxonomy cell; keyword overrides win over the table."""
        lo, hi, cmin, cmax, blo, bhi = SIZE_TAXONOMY[(category, size_level)]
        values: dict[str, Any] = {
            "category": category,
            "size_level": size_level,
            "area_range": (lo, hi),
            "count_range": (cmin, cmax),
            "bbox_range": (blo, bhi),
        }
        values.update(overrides)
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, slots=True)
class DatasetGrid:
    """Which taxonomy cells a fixed test set covers, and how many images per cell."""

    categories: tuple[str, ...] = CATEGORIES
    sizes: tuple[str, ...] = SIZE_LEVELS
    images_per_cell: int = 5
    image_size: int = DEFAULT_TEST_RESOLUTION
    seed: int = DEFAULT_SEED
    jpeg_quality_range: tuple[int, int] | None = DEFAULT_JPEG_QUALITY_RANGE
    area_overrides: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = set(self.categories) - set(CATEGORIES) | set(self.sizes) - set(SIZE_LEVELS)
        if unknown:
            raise ValueError(f"unknown categories or sizes: {sorted(unknown)}")
        if self.images_per_cell < 1:
            raise ValueError("images_per_cell must be >= 1")

    def cells(self) -> list[tuple[str, str]]:
        return [(category, size) for category in self.categories for size in self.sizes]

    def cell_config(self, category: str, size: str) -> SynthesisConfig:
        """Test-time synthesis config of one cell: no attribute randomization, optional area override."""
        overrides: dict[str, Any] = {}
        if f"{category}/{size}" in self.area_overrides:
            overrides["area_range"] = tuple(self.area_overrides[f"{category}/{size}"])
        return SynthesisConfig.for_cell(
            category, size, attribute_mode="none", jpeg_quality_range=self.jpeg_quality_range, seed=self.seed, **overrides
        )


@dataclass(frozen=True, slots=True)
class StreamConfig:
    """Mixture of taxonomy cells and synthesis knobs for on-the-fly training data."""

    categories: tuple[str, ...] = CATEGORIES
    size_weights: tuple[float, ...] = tuple(TRAIN_SIZE_WEIGHTS[s] for s in SIZE_LEVELS)
    resolution: int = DEFAULT_TRAIN_RESOLUTION
    attribute_mode: AttributeMode = "aligned"
    match_probability: float = DEFAULT_MATCH_PROBABILITY
    strength_range: tuple[float, float] = DEFAULT_STRENGTH_RANGE
    jpeg_quality_range: tuple[int, int] | None = DEFAULT_JPEG_QUALITY_RANGE

    def __post_init__(self) -> None:
        if not self.categories or set(self.categories) - set(CATEGORIES):
            raise ValueError(f"categories must be a non-empty subset of {CATEGORIES}")
        if len(self.size_weights) != len(SIZE_LEVELS) or min(self.size_weights) < 0 or sum(self.size_weights) <= 0:
            raise ValueError("size_weights needs one non-negative weight per size level")

    @property
    def size_probabilities(self) -> np.ndarray:
        weights = np.asarray(self.size_weights, dtype=np.float64)
        return weights / weights.sum()

    def cell(self, category: str, size_level: str) -> SynthesisConfig:
        return SynthesisConfig.for_cell(
            category,
            size_level,
            attribute_mode=self.attribute_mode,
            match_probability=self.match_probability,
            strength_range=self.strength_range,
            jpeg_quality_range=self.jpeg_quality_range,
        )


@dataclass(frozen=True, slots=True)
class ModelConfig:
    """Shape of a cascade: level count, scale step, width and depth per level."""

    levels: int = DEFAULT_LEVELS
    sigma_step: float = DEFAULT_SIGMA_STEP
    channels: int = DEFAULT_CHANNELS
    resblocks: int = DEFAULT_RESBLOCKS
    single_scale: bool = False
    input_size: int = DEFAULT_TRAIN_RESOLUTION

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.sigma_step <= 1.0:
            raise ValueError("sigma_step must be > 1")
        if self.channels < 2 or self.channels % 2:
            raise ValueError("channels must be an even number >= 2")
        if self.resblocks < 0:
            raise ValueError("resblocks must be >= 0")

    @property
    def scale_factors(self) -> tuple[float, ...]:
        """``σ_ℓ`` for ℓ = 0..L (coarse to fine); all ones for single-scale models."""
        if self.single_scale:
            return tuple(1.0 for _ in range(self.levels))
        return tuple(self.sigma_step ** (self.levels - 1 - lvl) for lvl in range(self.levels))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        return cls(**data)

    def config_hash(self) -> str:
        """Stable SHA-256 of the canonical JSON form; ties checkpoints to configs."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True, slots=True)
class StageConfig:
    """Budget and constraints of one stage of cascade training."""

    level: int = 0
    steps: int = DEFAULT_STAGE_STEPS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    p_min: float = DEFAULT_P_MIN
    r_min: float = DEFAULT_R_MIN
    threshold_grid: float = DEFAULT_GRID_STEP
    validation_samples: int = DEFAULT_VALIDATION_SAMPLES

    def __post_init__(self) -> None:
        if not (0.0 < self.p_min <= 1.0 and 0.0 < self.r_min <= 1.0):
            raise ValueError("p_min and r_min must lie in (0, 1]")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if not 0.0 < self.threshold_grid < 1.0:
            raise ValueError("threshold_grid must lie in (0, 1)")


@dataclass(frozen=True, slots=True)
class Calibration:
    """Outcome of threshold calibration against the precision/recall constraints.

    ``feasible`` is ``False`` when no grid threshold reaches ``r_min``;
    ``precision_feasible`` is ``False`` when recall could be met but not
    together with ``p_min``.
    """

    threshold: float
    precision: float
    recall: float
    feasible: bool = True
    precision_feasible: bool = True

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, slots=True, eq=False)
class StageResult:
    """Trained parameters, calibrated threshold and loss curve of one stage."""

    level: int
    calibration: Calibration
    loss_curve: tuple[float, ...]
    parameters: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def infeasible(self) -> bool:
        return not self.calibration.feasible

    def to_dict(self) -> dict[str, Any]:
        return {"level": self.level, **self.calibration.to_dict(), "steps": len(self.loss_curve)}


@dataclass(frozen=True, slots=True)
class PRPoint:
    """Dataset-mean precision and recall at one threshold."""

    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True, slots=True)
class CellReport:
    """Metrics for one (category, size) cell, or the overall row."""

    category: str
    size: str
    count: int
    miou: float
    mae: float
    max_f03: float
    max_f2: float
    pr_curve: tuple[PRPoint, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "size": self.size,
            "count": self.count,
            "miou": self.miou,
            "mae": self.mae,
            "max_f0.3": self.max_f03,
            "max_f2": self.max_f2,
        }


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Per-cell metrics, an overall row, and the thresholds used to produce them."""

    cells: tuple[CellReport, ...]
    overall: CellReport
    miou_threshold: float
    grid_step: float

    def cell(self, category: str, size: str) -> CellReport:
        for item in self.cells:
            if item.category == category and item.size == size:
                return item
        raise KeyError((category, size))

    def to_dict(self) -> dict[str, Any]:
        return {
            "miou_threshold": self.miou_threshold,
            "grid_step": self.grid_step,
            "cells": [c.to_dict() for c in self.cells],
            "overall": self.overall.to_dict(),
        }

    def to_pretty_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
