"""Unit tests for ablation planning, JPEG sweeps and directional checks."""

from __future__ import annotations

import numpy as np
import pytest

from graphseg.cascade import CascadeModel, count_parameters
from graphseg.experiments import (
    AblationPlan,
    JpegDegradedPredictor,
    directional_checks,
    matched_depth_configs,
    plan_variants,
    size_miou,
    stage_schedule,
)
from graphseg.imgproc import jpeg_degrade
from graphseg.models import CellReport, DatasetGrid, EvalReport, ModelConfig, StageConfig, StreamConfig
from graphseg.protocols import MaskPredictor


def _plan(kind: str) -> AblationPlan:
    return AblationPlan(
        kind=kind,  # type: ignore[arg-type]
        model=ModelConfig(channels=4, input_size=32),
        stage=StageConfig(),
        stream=StreamConfig(resolution=32),
        grid=DatasetGrid(image_size=32),
    )


# planning

def test_matched_depth_configs_have_similar_sizes() -> None:
    counts = {name: count_parameters(CascadeModel(cfg)) for name, cfg in matched_depth_configs().items()}
    assert set(counts) == {"1-level", "2-level", "3-level", "4-level", "ss-3-level"}
    assert max(counts.values()) / min(counts.values()) < 1.25
    assert counts["ss-3-level"] == counts["3-level"]


def test_stage_schedule_numbers_levels() -> None:
    stages = stage_schedule(StageConfig(steps=3), 4)
    assert [s.level for s in stages] == [0, 1, 2, 3]
    assert all(s.steps == 3 for s in stages)


@pytest.mark.parametrize(
    ("kind", "names"),
    [
        ("depth", ["1-level", "2-level", "3-level", "4-level", "ss-3-level"]),
        ("training_mode", ["stagewise", "joint"]),
        ("jpeg", ["jpeg", "no_jpeg"]),
        ("attributes", ["aligned", "simple", "none"]),
    ],
)
def test_plan_variants(kind: str, names: list[str]) -> None:
    assert [v.name for v in plan_variants(_plan(kind))] == names


def test_jpeg_variants_differ_only_in_compression() -> None:
    with_jpeg, without = plan_variants(_plan("jpeg"))
    assert with_jpeg.stream.jpeg_quality_range == (70, 100)
    assert without.stream.jpeg_quality_range is None
    assert without.stream.attribute_mode == with_jpeg.stream.attribute_mode


def test_attribute_variants_set_the_mode() -> None:
    assert [v.stream.attribute_mode for v in plan_variants(_plan("attributes"))] == ["aligned", "simple", "none"]


# predictors and summaries

class _Identity:
    def predict_soft(self, image: np.ndarray) -> np.ndarray:
        return image[..., 0]


def test_jpeg_degraded_predictor_recompresses(base_image: np.ndarray) -> None:
    predictor = JpegDegradedPredictor(_Identity(), 60)
    assert isinstance(predictor, MaskPredictor)
    np.testing.assert_array_equal(predictor.predict_soft(base_image), jpeg_degrade(base_image, 60)[..., 0])


def test_size_miou_weights_by_count() -> None:
    cells = (
        CellReport("logo", "small", 1, 0.2, 0.0, 0.0, 0.0),
        CellReport("text", "small", 3, 0.6, 0.0, 0.0, 0.0),
        CellReport("logo", "large", 2, 0.9, 0.0, 0.0, 0.0),
    )
    report = EvalReport(cells=cells, overall=CellReport("all", "all", 6, 0.55, 0.0, 0.0, 0.0), miou_threshold=0.5, grid_step=0.01)
    out = size_miou(report)
    assert out["small"] == pytest.approx(0.5)
    assert out["large"] == pytest.approx(0.9)
    assert "medium" not in out
    assert out["overall"] == 0.55


# directional checks

def _row(seed: int, variant: str, **metrics: float) -> dict:
    return {"seed": seed, "variant": variant, "metrics": metrics}


def test_depth_checks_vote_per_seed() -> None:
    rows = [
        _row(0, "1-level", miou_small=0.2, miou_large=0.8),
        _row(0, "3-level", miou_small=0.5, miou_large=0.8),
        _row(1, "1-level", miou_small=0.4, miou_large=0.7),
        _row(1, "3-level", miou_small=0.3, miou_large=0.7),
        _row(2, "1-level", miou_small=0.1, miou_large=0.9),
        _row(2, "3-level", miou_small=0.4, miou_large=0.85),
    ]
    checks = directional_checks("depth", rows)
    small = checks["3-level beats 1-level on small"]
    assert small["per_seed"] == [True, False, True]
    assert small["holds"] is True
    assert checks["3-level has smaller size gap"]["per_seed"] == [True, False, True]


def test_training_mode_tie_counts_for_stagewise() -> None:
    rows = [_row(0, "stagewise", miou_overall=0.5), _row(0, "joint", miou_overall=0.5)]
    assert directional_checks("training_mode", rows)["stagewise >= joint"] == {"per_seed": [True], "holds": True}


def test_jpeg_check_compares_quality_drops() -> None:
    rows = [
        _row(0, "jpeg", **{"max_f0.3@q70": 0.70, "max_f0.3@q100": 0.75}),
        _row(0, "no_jpeg", **{"max_f0.3@q70": 0.50, "max_f0.3@q100": 0.76}),
        _row(1, "jpeg", **{"max_f0.3@q70": 0.70, "max_f0.3@q100": 0.72}),
        _row(1, "no_jpeg", **{"max_f0.3@q70": 0.71, "max_f0.3@q100": 0.72}),
    ]
    check = directional_checks("jpeg", rows)["no-jpeg model loses more at low quality"]
    assert check["per_seed"] == [True, False]
    assert check["holds"] is False


def test_attribute_check_reports_means() -> None:
    rows = [
        _row(seed, name, miou_overall=value)
        for seed in (0, 1)
        for name, value in (("aligned", 0.6 + seed * 0.1), ("simple", 0.5), ("none", 0.4))
    ]
    means = directional_checks("attributes", rows)["mean_miou"]
    assert means == pytest.approx({"aligned": 0.65, "simple": 0.5, "none": 0.4})


def test_depth_checks_fail_when_most_seeds_disagree() -> None:
    rows = [
        _row(0, "1-level", miou_small=0.5, miou_large=0.6),
        _row(0, "3-level", miou_small=0.4, miou_large=0.9),
        _row(1, "1-level", miou_small=0.3, miou_large=0.8),
        _row(1, "3-level", miou_small=0.3, miou_large=0.8),
    ]
    checks = directional_checks("depth", rows)
    assert checks["3-level beats 1-level on small"] == {"per_seed": [False, False], "holds": False}
    assert checks["3-level has smaller size gap"]["holds"] is False


@pytest.mark.parametrize(
    ("joint", "per_seed", "holds"),
    [
        ((0.4, 0.6, 0.4), [True, False, True], True),
        ((0.6, 0.6, 0.4), [False, False, True], False),
    ],
)
def test_training_mode_majority_over_three_seeds(joint: tuple[float, ...], per_seed: list[bool], holds: bool) -> None:
    rows = [r for seed, j in enumerate(joint) for r in (_row(seed, "stagewise", miou_overall=0.5), _row(seed, "joint", miou_overall=j))]
    assert directional_checks("training_mode", rows)["stagewise >= joint"] == {"per_seed": per_seed, "holds": holds}


def test_jpeg_check_holds_when_clean_model_drops_further() -> None:
    rows = [
        _row(seed, variant, **{"max_f0.3@q30": low, "max_f0.3@q70": 0.7, "max_f0.3@q100": 0.8})
        for seed in (0, 1, 2)
        for variant, low in (("jpeg", 0.75), ("no_jpeg", 0.5 if seed < 2 else 0.78))
    ]
    check = directional_checks("jpeg", rows)["no-jpeg model loses more at low quality"]
    assert check == {"per_seed": [True, True, False], "holds": True}


def test_even_split_is_not_a_majority() -> None:
    rows = [
        _row(0, "stagewise", miou_overall=0.6), _row(0, "joint", miou_overall=0.5),
        _row(1, "stagewise", miou_overall=0.4), _row(1, "joint", miou_overall=0.5),
    ]
    assert directional_checks("training_mode", rows)["stagewise >= joint"]["holds"] is False
