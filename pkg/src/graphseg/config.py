"""JSON config files for the ``synth``, ``train`` and ``ablate`` commands.

Schemas reject unknown keys. Every validation problem surfaces as a
``ConfigError`` whose message starts with the dotted path of the offending
field, e.g. ``area_ranges: ...`` or ``stage.p_min: ...``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

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
    DEFAULT_SIGMA_STEP,
    DEFAULT_STAGE_STEPS,
    DEFAULT_STRENGTH_RANGE,
    DEFAULT_TEST_RESOLUTION,
    DEFAULT_TRAIN_RESOLUTION,
    DEFAULT_VALIDATION_SAMPLES,
    MIN_IMAGE_SIZE,
    SIZE_LEVELS,
    TRAIN_SIZE_WEIGHTS,
)
from .exceptions import ConfigError, StorageError
from .models import DatasetGrid, ModelConfig, StageConfig, StreamConfig

CategoryName = Literal["sticker", "line", "text", "logo"]
SizeName = Literal["small", "medium", "large"]

Schema = TypeVar("Schema", bound=BaseModel)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_quality(value: tuple[int, int] | None) -> tuple[int, int] | None:
    if value is not None and not 1 <= value[0] <= value[1] <= 100:
        raise ValueError("JPEG quality range needs 1 <= lo <= hi <= 100")
    return value


class ModelSection(_Section):
    levels: int = Field(DEFAULT_LEVELS, ge=1)
    sigma_step: float = Field(DEFAULT_SIGMA_STEP, gt=1.0)
    channels: int = Field(DEFAULT_CHANNELS, ge=2)
    resblocks: int = Field(DEFAULT_RESBLOCKS, ge=0)
    single_scale: bool = False
    input_size: int = Field(DEFAULT_TRAIN_RESOLUTION, ge=MIN_IMAGE_SIZE)

    @field_validator("channels")
    @classmethod
    def check_channels(cls, value: int) -> int:
        if value % 2:
            raise ValueError("channels must be even (the head halves them)")
        return value

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(**self.model_dump())


class StageSection(_Section):
    steps: int = Field(DEFAULT_STAGE_STEPS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0.0)
    p_min: float = Field(DEFAULT_P_MIN, gt=0.0, le=1.0)
    r_min: float = Field(DEFAULT_R_MIN, gt=0.0, le=1.0)
    threshold_grid: float = Field(DEFAULT_GRID_STEP, gt=0.0, lt=1.0)
    validation_samples: int = Field(DEFAULT_VALIDATION_SAMPLES, ge=1)

    def to_stage_config(self) -> StageConfig:
        """Template for every level; ``level`` is filled in per stage."""
        return StageConfig(**self.model_dump())


class DataSection(_Section):
    """On-the-fly training data: where images and sprites come from and how they are mixed."""

    base_dir: Path | None = None
    sprite_dir: Path | None = None
    categories: tuple[CategoryName, ...] = CATEGORIES  # type: ignore[assignment]
    size_weights: tuple[float, float, float] = tuple(TRAIN_SIZE_WEIGHTS[s] for s in SIZE_LEVELS)  # type: ignore[assignment]
    attribute_mode: Literal["aligned", "simple", "none"] = "aligned"
    match_probability: float = Field(DEFAULT_MATCH_PROBABILITY, ge=0.0, le=1.0)
    strength_range: tuple[float, float] = DEFAULT_STRENGTH_RANGE
    jpeg_quality_range: tuple[int, int] | None = DEFAULT_JPEG_QUALITY_RANGE

    @field_validator("categories")
    @classmethod
    def check_categories(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if not value:
            raise ValueError("at least one category is required")
        return value

    @field_validator("size_weights")
    @classmethod
    def check_size_weights(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if min(value) < 0 or sum(value) <= 0:
            raise ValueError("size weights must be non-negative with a positive sum")
        return value

    @field_validator("strength_range")
    @classmethod
    def check_strength(cls, value: tuple[float, float]) -> tuple[float, float]:
        if not 0.0 <= value[0] <= value[1] <= 1.0:
            raise ValueError("strength range needs 0 <= lo <= hi <= 1")
        return value

    @field_validator("jpeg_quality_range")
    @classmethod
    def check_quality(cls, value: tuple[int, int] | None) -> tuple[int, int] | None:
        return _check_quality(value)

    def to_stream_config(self, resolution: int) -> StreamConfig:
        fields = self.model_dump(exclude={"base_dir", "sprite_dir"})
        return StreamConfig(resolution=resolution, **fields)


class GridSection(_Section):
    """Cells, size and count of a fixed synthesized test set."""

    categories: tuple[CategoryName, ...] = CATEGORIES  # type: ignore[assignment]
    sizes: tuple[SizeName, ...] = SIZE_LEVELS  # type: ignore[assignment]
    images_per_cell: int = Field(5, ge=1)
    image_size: int = Field(DEFAULT_TEST_RESOLUTION, ge=MIN_IMAGE_SIZE)
    jpeg_quality_range: tuple[int, int] | None = DEFAULT_JPEG_QUALITY_RANGE
    area_ranges: dict[str, tuple[float, float]] = Field(default_factory=dict)

    @field_validator("jpeg_quality_range")
    @classmethod
    def check_quality(cls, value: tuple[int, int] | None) -> tuple[int, int] | None:
        return _check_quality(value)

    @field_validator("area_ranges")
    @classmethod
    def check_area_ranges(cls, value: dict[str, tuple[float, float]]) -> dict[str, tuple[float, float]]:
        for key, (lo, hi) in value.items():
            category, _, size = key.partition("/")
            if category not in CATEGORIES or size not in SIZE_LEVELS:
                raise ValueError(f"key {key!r} is not '<category>/<size>'")
            if not 0.0 < lo < hi <= 0.6:
                raise ValueError(f"area range for {key} needs 0 < lo < hi <= 0.6, got ({lo}, {hi})")
        return value

    def to_grid(self, seed: int) -> DatasetGrid:
        return DatasetGrid(
            categories=tuple(self.categories),
            sizes=tuple(self.sizes),
            images_per_cell=self.images_per_cell,
            image_size=self.image_size,
            seed=seed,
            jpeg_quality_range=self.jpeg_quality_range,
            area_overrides=dict(self.area_ranges),
        )


class SynthFileConfig(GridSection):
    """``graphseg synth`` config: a test-set grid plus its image and sprite sources."""

    seed: int | None = None
    base_dir: Path | None = None
    sprite_dir: Path | None = None


class TrainFileConfig(_Section):
    seed: int | None = None
    model: ModelSection = ModelSection()
    stage: StageSection = StageSection()
    data: DataSection = DataSection()


class AblateFileConfig(_Section):
    kind: Literal["depth", "training_mode", "jpeg", "attributes"]
    seeds: tuple[int, ...] = (0, 1, 2)
    model: ModelSection = ModelSection()
    stage: StageSection = StageSection()
    data: DataSection = DataSection()
    test: GridSection = GridSection(image_size=DEFAULT_TRAIN_RESOLUTION, images_per_cell=4)
    qualities: tuple[int, ...] = (70, 85, 100)

    @field_validator("seeds")
    @classmethod
    def check_seeds(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if not value:
            raise ValueError("seeds must not be empty")
        return value

    @field_validator("qualities")
    @classmethod
    def check_qualities(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if len(value) < 2 or any(not 1 <= q <= 100 for q in value):
            raise ValueError("qualities needs at least two values in [1, 100]")
        return value


def _describe(exc: ValidationError) -> str:
    first = exc.errors()[0]
    path = ".".join(str(part) for part in first["loc"]) or "<root>"
    extra = f" (+{exc.error_count() - 1} more)" if exc.error_count() > 1 else ""
    return f"{path}: {first['msg']}{extra}"


def parse_config(raw: object, schema: type[Schema]) -> Schema:
    try:
        return schema.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc


def load_config(path: str | Path, schema: type[Schema]) -> Schema:
    """Read a JSON config file and validate it against *schema*."""
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read config {config_path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON: {exc}") from exc
    return parse_config(raw, schema)
