import dataclasses
import math

import pytest

from graphseg.constants import CATEGORIES, SIZE_LEVELS
from graphseg.exceptions import ConfigError, DimensionError, GraphSegError, SizeError, StorageError
from graphseg.models import (
    Calibration,
    DatasetGrid,
    ModelConfig,
    PlacedPattern,
    StageConfig,
    StageResult,
    StreamConfig,
    SynthesisConfig,
    Window,
)


def test_window_geometry() -> None:
    w = Window(2, 3, 10, 7)
    assert (w.height, w.width, w.area) == (8, 4, 32)
    assert w.as_tuple() == (2, 3, 10, 7)


def test_window_dilate_clamps_to_image() -> None:
    assert Window(2, 2, 10, 10).dilate(0.25, 11, 12) == Window(0, 0, 11, 12)
    assert Window(4, 4, 8, 8).dilate(0.25, 64, 64) == Window(3, 3, 9, 9)


def test_every_taxonomy_cell_builds() -> None:
    for category in CATEGORIES:
        for size in SIZE_LEVELS:
            config = SynthesisConfig.for_cell(category, size)
            assert config.area_range[0] < config.area_range[1]


def test_text_cells_carry_a_bbox_range() -> None:
    assert SynthesisConfig.for_cell("text", "large").bbox_range == (0.25, 0.6)
    assert SynthesisConfig.for_cell("logo", "large").bbox_range == (0.0, 0.0)


@pytest.mark.parametrize(
    "overrides",
    [
        {"count_range": (0, 2)},
        {"count_range": (3, 2)},
        {"match_probability": 1.5},
        {"jpeg_quality_range": (0, 50)},
        {"category": "banner"},
    ],
)
def test_synthesis_config_rejects_bad_values(overrides: dict) -> None:
    with pytest.raises(ValueError):
        SynthesisConfig(**overrides)


def test_dataset_grid_cells_and_validation() -> None:
    assert len(DatasetGrid().cells()) == 12
    with pytest.raises(ValueError, match="unknown"):
        DatasetGrid(sizes=("huge",))
    with pytest.raises(ValueError):
        DatasetGrid(images_per_cell=0)


def test_stream_config_probabilities() -> None:
    probs = StreamConfig(size_weights=(1.0, 1.0, 2.0)).size_probabilities
    assert probs.tolist() == [0.25, 0.25, 0.5]
    with pytest.raises(ValueError):
        StreamConfig(size_weights=(0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        StreamConfig(categories=())


def test_model_config_scale_factors() -> None:
    assert ModelConfig(levels=3).scale_factors == pytest.approx((2.0, math.sqrt(2.0), 1.0))
    assert ModelConfig(levels=3, single_scale=True).scale_factors == (1.0, 1.0, 1.0)


@pytest.mark.parametrize("overrides", [{"levels": 0}, {"sigma_step": 1.0}, {"channels": 3}, {"resblocks": -1}])
def test_model_config_validation(overrides: dict) -> None:
    with pytest.raises(ValueError):
        ModelConfig(**overrides)


def test_model_config_dict_round_trip_and_hash() -> None:
    config = ModelConfig(levels=2, channels=4)
    assert ModelConfig.from_dict(config.to_dict()) == config
    assert config.config_hash() == ModelConfig(levels=2, channels=4).config_hash()
    assert config.config_hash() != dataclasses.replace(config, resblocks=2).config_hash()


@pytest.mark.parametrize(
    "overrides", [{"p_min": 0.0}, {"r_min": 1.5}, {"steps": 0}, {"batch_size": 0}, {"threshold_grid": 1.0}]
)
def test_stage_config_validation(overrides: dict) -> None:
    with pytest.raises(ValueError):
        StageConfig(**overrides)


def test_stage_result_reports_infeasibility() -> None:
    result = StageResult(1, Calibration(0.01, 0.2, 0.8, feasible=False, precision_feasible=False), (1.0, 0.5))
    assert result.infeasible
    assert result.to_dict() == {
        "level": 1,
        "threshold": 0.01,
        "precision": 0.2,
        "recall": 0.8,
        "feasible": False,
        "precision_feasible": False,
        "steps": 2,
    }


def test_placed_pattern_to_dict_lists_bbox() -> None:
    placed = PlacedPattern("logo", (1, 2, 3, 4), 0.1, "match")
    assert placed.to_dict()["bbox"] == [1, 2, 3, 4]


def test_frozen_values_cannot_change() -> None:
    with pytest.raises(dataclasses.FrozenInstanceError):
        ModelConfig().levels = 4  # type: ignore[misc]


def test_exceptions_share_a_base() -> None:
    for exc in (ConfigError, DimensionError, SizeError, StorageError):
        assert issubclass(exc, GraphSegError)
    assert issubclass(ConfigError, ValueError)
    assert not issubclass(StorageError, ValueError)
