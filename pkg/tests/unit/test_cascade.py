"""Unit tests for the cascade network: shapes, product masks, prediction and parameter counts."""

from __future__ import annotations

import math

import numpy as np
import pytest

from graphseg.cascade import CascadeModel, CascadePredictor, count_parameters, forward, predict_mask, predict_soft
from graphseg.exceptions import DimensionError, SizeError
from graphseg.imgproc import build_pyramid
from graphseg.models import ModelConfig
from graphseg.protocols import MaskPredictor


def _model(levels: int = 3, channels: int = 4, resblocks: int = 1, seed: int = 0) -> CascadeModel:
    return CascadeModel.seeded(ModelConfig(levels=levels, channels=channels, resblocks=resblocks), seed)


def _image(size: int = 32, seed: int = 1) -> np.ndarray:
    return np.random.default_rng(seed).random((size, size, 3)).astype(np.float32)


def _bilinear_oracle(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel bilinear resize, one output pixel at a time."""
    in_h, in_w = mask.shape
    out = np.zeros((out_h, out_w))

    def source(i: int, n_in: int, n_out: int) -> tuple[int, int, float]:
        pos = min(max((i + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1)
        lo = int(math.floor(pos))
        return lo, min(lo + 1, n_in - 1), pos - lo

    for y in range(out_h):
        y0, y1, fy = source(y, in_h, out_h)
        for x in range(out_w):
            x0, x1, fx = source(x, in_w, out_w)
            top = (1 - fx) * mask[y0, x0] + fx * mask[y0, x1]
            bottom = (1 - fx) * mask[y1, x0] + fx * mask[y1, x1]
            out[y, x] = (1 - fy) * top + fy * bottom
    return out


# forward

def test_level_shapes_follow_the_pyramid() -> None:
    model = _model()
    output = forward(model, model.pyramid(_image()))
    assert [m.shape for m in output.per_level_masks] == [(1, 1, 16, 16), (1, 1, 23, 23), (1, 1, 32, 32)]
    assert [v.shape[1] for v in output.features] == [4, 4, 4]
    assert all(m.shape == (1, 1, 32, 32) for m in output.cumulative_masks)


def test_single_level_cumulative_equals_own_mask() -> None:
    model = _model(levels=1)
    output = forward(model, model.pyramid(_image()))
    np.testing.assert_array_equal(output.cumulative_masks[0].data, output.per_level_masks[0].data)


def test_saturated_heads_give_all_ones() -> None:
    model = _model()
    for net in model.subnets:
        net.head_out.bias.data[...] = 50.0
    output = forward(model, model.pyramid(_image()))
    for cumulative in output.cumulative_masks:
        np.testing.assert_allclose(cumulative.data, 1.0, atol=1e-6)


def test_cumulative_mask_matches_scalar_recomposition() -> None:
    model = _model()
    output = forward(model, model.pyramid(_image()))
    expected = np.ones((32, 32))
    for mask in output.per_level_masks:
        expected *= _bilinear_oracle(mask.data[0, 0].astype(np.float64), 32, 32)
    assert np.max(np.abs(output.cumulative_masks[2].data[0, 0] - expected)) < 1e-6


def test_cumulative_masks_are_monotone_and_bounded() -> None:
    model = _model(seed=4)
    output = forward(model, model.pyramid(_image(seed=2)))
    for coarse, fine in zip(output.cumulative_masks, output.cumulative_masks[1:]):
        assert np.all(fine.data <= coarse.data + 1e-7)
    for mask in (*output.per_level_masks, *output.cumulative_masks):
        assert not np.isnan(mask.data).any()
        assert mask.data.min() >= 0.0 and mask.data.max() <= 1.0


def test_forward_is_deterministic() -> None:
    model = _model()
    image = _image()
    first = forward(model, model.pyramid(image)).final.data
    second = forward(model, model.pyramid(image)).final.data
    np.testing.assert_array_equal(first, second)


def test_partial_forward_stops_at_level() -> None:
    model = _model()
    output = forward(model, model.pyramid(_image()), up_to_level=1)
    assert len(output.cumulative_masks) == 2


def test_pyramid_with_too_few_levels_raises() -> None:
    model = _model()
    with pytest.raises(DimensionError, match="levels"):
        forward(model, build_pyramid(_image(), 2, math.sqrt(2.0)), up_to_level=2)


def test_pyramid_with_other_scales_raises() -> None:
    model = _model()
    with pytest.raises(DimensionError, match="scale factors"):
        forward(model, build_pyramid(_image(), 3, 1.5))


def test_single_scale_model_sees_full_resolution_everywhere() -> None:
    model = CascadeModel.seeded(ModelConfig(levels=2, channels=2, resblocks=0, single_scale=True), 0)
    output = forward(model, model.pyramid(_image()))
    assert all(m.shape == (1, 1, 32, 32) for m in output.per_level_masks)


# predict_mask

def test_thresholds_around_the_extremes() -> None:
    model = _model()
    image = _image()
    soft = predict_soft(model, image)
    assert soft.min() > 0.0
    assert predict_mask(model, image, float(soft.min()) * 0.999).all()
    assert not predict_mask(model, image, float(soft.max()) + 1e-6).any()


def test_final_positives_are_a_subset_of_each_level() -> None:
    model = _model(seed=7)
    image = _image(seed=3)
    output = forward(model, model.pyramid(image))
    tau = float(np.median(output.final.data))
    final = output.final.data >= tau
    for upsampled in output.upsampled_masks:
        assert not np.any(final & ~(upsampled.data >= tau))


def test_threshold_outside_open_interval_raises() -> None:
    with pytest.raises(ValueError):
        predict_mask(_model(), _image(), 1.0)


def test_image_below_pyramid_minimum_raises() -> None:
    with pytest.raises(SizeError):
        predict_soft(_model(), _image(size=10))


# parameters

def test_parameter_count_of_smallest_level() -> None:
    model = CascadeModel(ModelConfig(levels=1, channels=2, resblocks=4))
    assert count_parameters(model) == 381


def test_doubling_width_roughly_quadruples_residual_parameters() -> None:
    def block_params(channels: int) -> int:
        model = CascadeModel(ModelConfig(levels=1, channels=channels, resblocks=4))
        return sum(p.data.size for name, p in model.parameters().items() if ".block" in name)

    assert 3.5 < block_params(16) / block_params(8) < 4.5


def test_default_model_stays_under_a_million_parameters() -> None:
    assert count_parameters(CascadeModel(ModelConfig())) < 1_000_000


def test_finer_levels_take_image_plus_features() -> None:
    model = _model(channels=4)
    assert model.subnets[0].entry.weight.shape[1] == 3
    assert model.subnets[1].entry.weight.shape[1] == 7


def test_seeded_models_are_reproducible() -> None:
    config = ModelConfig(levels=2, channels=2, resblocks=1)
    first = CascadeModel.seeded(config, 3).state_dict()
    second = CascadeModel.seeded(config, 3).state_dict()
    assert all(np.array_equal(first[name], second[name]) for name in first)


def test_state_dict_round_trip() -> None:
    source, target = _model(seed=1), _model(seed=2)
    target.load_state_dict(source.state_dict())
    image = _image()
    np.testing.assert_array_equal(predict_soft(source, image), predict_soft(target, image))


def test_load_state_dict_rejects_other_shapes() -> None:
    with pytest.raises(DimensionError):
        _model(channels=4).load_state_dict(_model(channels=2).state_dict())


def test_set_trainable_freezes_other_levels() -> None:
    model = _model()
    model.set_trainable([1])
    flags = {name.split(".")[0]: p.requires_grad for name, p in model.parameters().items()}
    assert flags == {"level0": False, "level1": True, "level2": False}


def test_frozen_coarse_parameters_still_shape_the_output() -> None:
    model = _model()
    model.set_trainable([])
    image = _image()
    before = predict_soft(model, image)
    model.subnets[0].head_out.bias.data += 1.0
    assert not np.allclose(before, predict_soft(model, image))


def test_float64_copy_agrees_with_float32() -> None:
    model = _model()
    image = _image()
    np.testing.assert_allclose(predict_soft(model.astype(np.dtype(np.float64)), image), predict_soft(model, image), atol=1e-5)


def test_predictor_satisfies_protocol() -> None:
    predictor = CascadePredictor(_model())
    assert isinstance(predictor, MaskPredictor)
    assert predictor.predict_soft(_image()).shape == (32, 32)
