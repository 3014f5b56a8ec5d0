"""Unit tests for pyramids, HSV statistics, attribute adjustment, JPEG simulation and image I/O."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from graphseg.exceptions import SizeError, StorageError
from graphseg.imgproc import (
    adjust_attributes,
    build_pyramid,
    compute_stats,
    jpeg_degrade,
    perturb_attributes,
    psnr,
    random_crop_resize,
    read_image,
    read_mask,
    resize_nearest,
    round_half_up,
    single_scale_pyramid,
    to_hsv,
    write_image,
    write_mask,
)
from graphseg.models import AttributeStats, Window
from graphseg.synthgen import ProceduralImageSource


def _solid(color: tuple[float, float, float], size: int = 16) -> np.ndarray:
    return np.broadcast_to(np.asarray(color, dtype=np.float64), (size, size, 3)).copy()


# build_pyramid

def test_round_half_up_breaks_ties_upward() -> None:
    assert round_half_up(2.5) == 3
    assert round_half_up(181.02) == 181


def test_single_level_pyramid_is_the_image(base_image: np.ndarray) -> None:
    pyramid = build_pyramid(base_image, 1, math.sqrt(2.0))
    assert pyramid.scale_factors == (1.0,)
    np.testing.assert_array_equal(pyramid.levels[0], base_image)


def test_three_level_pyramid_sizes_on_256() -> None:
    pyramid = build_pyramid(_solid((0.2, 0.4, 0.6), 256), 3, math.sqrt(2.0))
    assert [level.shape[:2] for level in pyramid.levels] == [(128, 128), (181, 181), (256, 256)]
    assert pyramid.scale_factors[0] == pytest.approx(2.0)
    assert pyramid.full_size == (256, 256)


def test_constant_image_stays_constant_at_every_level() -> None:
    pyramid = build_pyramid(_solid((0.5, 0.5, 0.5), 64), 3, math.sqrt(2.0))
    for level in pyramid.levels:
        np.testing.assert_allclose(level, 0.5, atol=1e-6)


def test_pyramid_level_below_minimum_raises() -> None:
    with pytest.raises(SizeError):
        build_pyramid(_solid((0.1, 0.1, 0.1), 12), 3, 2.0)


def test_tiny_image_raises() -> None:
    with pytest.raises(SizeError):
        build_pyramid(_solid((0.1, 0.1, 0.1), 4), 1, 2.0)


def test_single_scale_pyramid_repeats_full_resolution(base_image: np.ndarray) -> None:
    pyramid = single_scale_pyramid(base_image, 3)
    assert pyramid.scale_factors == (1.0, 1.0, 1.0)
    assert all(level.shape == base_image.shape for level in pyramid.levels)


# compute_stats

def test_stats_of_pure_red() -> None:
    stats = compute_stats(_solid((1.0, 0.0, 0.0)))
    assert stats.hue == pytest.approx(0.0)
    assert stats.saturation == pytest.approx(1.0)
    assert stats.brightness == pytest.approx(1.0)
    assert stats.local_contrast == pytest.approx(0.0)
    assert stats.global_contrast == pytest.approx(0.0)


def test_stats_of_black() -> None:
    stats = compute_stats(_solid((0.0, 0.0, 0.0)))
    assert stats.brightness == 0.0
    assert stats.local_contrast == 0.0


def test_checkerboard_brightness_and_contrast() -> None:
    board = (np.indices((8, 8)).sum(axis=0) % 2).astype(np.float64)
    stats = compute_stats(np.repeat(board[..., None], 3, axis=2))
    assert stats.brightness == pytest.approx(0.5)
    assert stats.global_contrast == pytest.approx(0.5)


def test_window_stats_use_only_the_window() -> None:
    image = _solid((0.0, 0.0, 0.0))
    image[:8, :8] = 1.0
    stats = compute_stats(image, Window(0, 0, 8, 8))
    assert stats.brightness == pytest.approx(1.0)
    assert stats.global_contrast == pytest.approx(np.std(to_hsv(image)[..., 2]))


def test_degenerate_window_raises() -> None:
    with pytest.raises(SizeError):
        compute_stats(_solid((0.5, 0.5, 0.5)), Window(4, 4, 5, 5))


def test_window_outside_image_raises() -> None:
    with pytest.raises(SizeError):
        compute_stats(_solid((0.5, 0.5, 0.5)), Window(10, 10, 30, 30))


def test_stats_ignore_pixel_order() -> None:
    rng = np.random.default_rng(5)
    image = rng.random((20, 20, 3))
    shuffled = image.reshape(400, 3)[rng.permutation(400)].reshape(20, 20, 3)
    first, second = compute_stats(image), compute_stats(shuffled)
    for name in ("brightness", "saturation", "local_contrast", "global_contrast"):
        assert getattr(first, name) == pytest.approx(getattr(second, name), abs=1e-12), name
    assert abs((first.hue - second.hue + math.pi) % (2 * math.pi) - math.pi) < 1e-9


# adjust_attributes

def _sprite(rng: np.random.Generator) -> np.ndarray:
    sprite = np.ones((12, 12, 4), dtype=np.float64)
    sprite[..., :3] = rng.uniform(0.4, 0.6, size=(12, 12, 3))
    sprite[:2, :, 3] = 0.0
    return sprite


def test_match_with_zero_strength_is_unchanged(rng: np.random.Generator) -> None:
    sprite = _sprite(rng)
    target = AttributeStats(0.9, 0.8, 1.0, 0.2, 0.3)
    np.testing.assert_array_equal(adjust_attributes(sprite, target, "match", 0.0, rng), sprite)


def test_full_match_reaches_target_brightness(rng: np.random.Generator) -> None:
    sprite = _sprite(rng)
    target = AttributeStats(brightness=0.5, saturation=0.3, hue=2.0, local_contrast=0.05, global_contrast=0.1)
    out = adjust_attributes(sprite, target, "match", 1.0, rng)
    opaque = sprite[..., 3] > 0.5
    assert float(to_hsv(out[..., :3])[..., 2][opaque].mean()) == pytest.approx(0.5, abs=1e-6)


def test_mismatch_moves_hue_at_least_a_quarter_turn(rng: np.random.Generator) -> None:
    red = np.zeros((8, 8, 4))
    red[..., 0] = 1.0
    red[..., 3] = 1.0
    gray = AttributeStats(brightness=0.5, saturation=0.0, hue=0.0, local_contrast=0.0, global_contrast=0.0)
    out = adjust_attributes(red, gray, "mismatch", 1.0, rng)
    hue = float(to_hsv(out[..., :3])[..., 0].mean())
    assert min(hue, 1.0 - hue) * 2.0 * math.pi >= math.pi / 2.0 - 1e-6


def test_adjustment_keeps_alpha_and_range(rng: np.random.Generator) -> None:
    sprite = _sprite(rng)
    target = AttributeStats(0.95, 0.9, 4.0, 0.4, 0.4)
    for out in (
        adjust_attributes(sprite, target, "mismatch", 0.8, rng),
        perturb_attributes(sprite, 1.0, rng),
    ):
        np.testing.assert_array_equal(out[..., 3], sprite[..., 3])
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_strength_out_of_range_raises(rng: np.random.Generator) -> None:
    with pytest.raises(ValueError):
        adjust_attributes(_sprite(rng), AttributeStats(0.5, 0.5, 0.0, 0.1, 0.1), "match", 1.5, rng)


# jpeg_degrade

def test_quality_100_on_smooth_gradient_is_high_psnr() -> None:
    ys, xs = np.mgrid[0:64, 0:64] / 63.0
    image = np.stack([xs, ys, np.full_like(xs, 0.5)], axis=-1)
    assert psnr(image, jpeg_degrade(image, 100)) >= 40.0


@pytest.mark.parametrize("quality", [5, 50, 95])
def test_constant_image_stays_constant(quality: int) -> None:
    out = jpeg_degrade(_solid((0.3, 0.6, 0.2), 20), quality)
    spread = out.reshape(-1, 3).max(axis=0) - out.reshape(-1, 3).min(axis=0)
    assert np.all(spread <= 1.0 / 255.0)


def test_mean_psnr_increases_with_quality() -> None:
    source = ProceduralImageSource()
    images = [source.sample(np.random.default_rng([3, i]), 64) for i in range(20)]
    means = [np.mean([psnr(img, jpeg_degrade(img, q)) for img in images]) for q in (70, 85, 100)]
    assert means[0] < means[1] < means[2]


def test_recompressing_never_raises_psnr() -> None:
    rng = np.random.default_rng(5)
    for _ in range(25):
        noise = rng.random((40, 37, 3)).astype(np.float32)
        image = (noise + np.roll(noise, 1, axis=0)) / 2
        quality = int(rng.integers(1, 101))
        once = jpeg_degrade(image, quality)
        twice = jpeg_degrade(once, quality)
        assert psnr(twice, image) <= psnr(once, image) + 1e-9, quality


def test_jpeg_keeps_odd_sizes() -> None:
    assert jpeg_degrade(_solid((0.1, 0.2, 0.3), 13), 80).shape == (13, 13, 3)


def test_jpeg_quality_out_of_range_raises() -> None:
    with pytest.raises(ValueError):
        jpeg_degrade(_solid((0.1, 0.2, 0.3)), 0)


def test_psnr_of_identical_images_is_infinite(base_image: np.ndarray) -> None:
    assert psnr(base_image, base_image) == float("inf")


# resampling

def test_resize_nearest_keeps_flat_values() -> None:
    sprite = np.zeros((4, 4, 4))
    sprite[:2] = 1.0
    out = resize_nearest(sprite, 9, 7)
    assert set(np.unique(out)) <= {0.0, 1.0}
    assert out.shape == (9, 7, 4)


def test_random_crop_resize_shape(base_image: np.ndarray, rng: np.random.Generator) -> None:
    out = random_crop_resize(base_image, 32, rng)
    assert out.shape == (32, 32, 3)
    assert out.dtype == np.float32


# I/O

def test_image_and_mask_round_trip(tmp_path: Path, base_image: np.ndarray) -> None:
    write_image(tmp_path / "img.png", base_image)
    np.testing.assert_allclose(read_image(tmp_path / "img.png"), base_image, atol=1.0 / 255.0)
    mask = np.zeros((64, 64), dtype=np.uint8)
    mask[10:20, 5:9] = 1
    write_mask(tmp_path / "nested" / "mask.png", mask)
    np.testing.assert_array_equal(read_mask(tmp_path / "nested" / "mask.png"), mask)


def test_reading_missing_image_raises_storage_error(tmp_path: Path) -> None:
    with pytest.raises(StorageError, match="missing.png"):
        read_image(tmp_path / "missing.png")
