"""Image I/O, scale pyramids, HSV attribute statistics and JPEG degradation.

Images are ``H x W x 3`` float arrays with values in [0, 1] (RGB). Sprites
are ``H x W x 4`` with straight alpha. Masks are ``H x W`` arrays in {0, 1}.
All functions are pure: randomness comes in through an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Literal

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from PIL import Image as PILImage
from scipy import ndimage
from scipy.fft import dctn, idctn

from .constants import MIN_IMAGE_SIZE
from .exceptions import SizeError, StorageError
from .models import AttributeStats, ScalePyramid, Window
from .ops import interpolation_matrix

_log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# Annex K base quantization tables (luminance, chrominance), row-major 8x8.
_LUMA_TABLE = np.array(
    [
        16, 11, 10, 16, 24, 40, 51, 61,
        12, 12, 14, 19, 26, 58, 60, 55,
        14, 13, 16, 24, 40, 57, 69, 56,
        14, 17, 22, 29, 51, 87, 80, 62,
        18, 22, 37, 56, 68, 109, 103, 77,
        24, 35, 55, 64, 81, 104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99,
    ],
    dtype=np.float64,
).reshape(8, 8)
_CHROMA_TABLE = np.array(
    [
        17, 18, 24, 47, 99, 99, 99, 99,
        18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99,
        47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99,
    ],
    dtype=np.float64,
).reshape(8, 8)


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def ensure_image(image: np.ndarray) -> np.ndarray:
    """Validate an RGB image array and return it as floats."""
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[2] != 3:
        raise ValueError(f"image must be H x W x 3, got shape {array.shape}")
    if array.shape[0] < MIN_IMAGE_SIZE or array.shape[1] < MIN_IMAGE_SIZE:
        raise SizeError(f"image must be at least {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}, got {array.shape[:2]}")
    return array if np.issubdtype(array.dtype, np.floating) else array.astype(np.float32) / 255.0


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path: str | Path) -> np.ndarray:
    """Load any Pillow-readable image as an ``H x W x 3`` float32 RGB array."""
    try:
        with PILImage.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise StorageError(f"failed to read image {path}: {exc}") from exc


def read_sprite(path: str | Path) -> np.ndarray:
    """Load an RGBA sprite as an ``H x W x 4`` float32 array."""
    try:
        with PILImage.open(path) as img:
            return np.asarray(img.convert("RGBA"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise StorageError(f"failed to read sprite {path}: {exc}") from exc


def read_mask(path: str | Path) -> np.ndarray:
    """Load a 0/255 single-channel PNG as a {0, 1} uint8 mask."""
    try:
        with PILImage.open(path) as img:
            return (np.asarray(img.convert("L")) > 127).astype(np.uint8)
    except OSError as exc:
        raise StorageError(f"failed to read mask {path}: {exc}") from exc


def _save(img: PILImage.Image, path: str | Path) -> None:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        img.save(target, format="PNG")
    except OSError as exc:
        raise StorageError(f"failed to write {target}: {exc}") from exc


def write_image(path: str | Path, image: np.ndarray) -> None:
    mode = "RGBA" if image.shape[-1] == 4 else "RGB"
    _save(PILImage.fromarray(to_uint8(image), mode), path)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    _save(PILImage.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, "L"), path)


def write_soft_mask(path: str | Path, soft: np.ndarray) -> None:
    _save(PILImage.fromarray(to_uint8(soft), "L"), path)


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel bilinear resize of an ``H x W x C`` array (same kernel as the network)."""
    height, width = image.shape[:2]
    if (height, width) == (out_h, out_w):
        return image.copy()
    rows = interpolation_matrix(height, out_h, image.dtype)
    cols = interpolation_matrix(width, out_w, image.dtype)
    return np.einsum("ph,hwc,qw->pqc", rows, image, cols, optimize=True)


def resize_nearest(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resample of the two leading axes (keeps flat colours and hard alpha)."""
    height, width = array.shape[:2]
    rows = np.minimum(((np.arange(out_h) + 0.5) * height / out_h).astype(int), height - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * width / out_w).astype(int), width - 1)
    return array[rows][:, cols]


def gaussian_blur(image: np.ndarray, std: float) -> np.ndarray:
    """Separable Gaussian low-pass over the spatial axes, truncated at 3 std."""
    return ndimage.gaussian_filter(image, sigma=(std, std, 0.0), truncate=3.0, mode="nearest")


def build_pyramid(image: np.ndarray, num_levels: int, sigma_step: float) -> ScalePyramid:
    """Blur-and-resample ``image`` into ``num_levels`` scales, coarse first.

    Level ℓ has scale ``σ_ℓ = sigma_step ** (num_levels - 1 - ℓ)`` and size
    ``round(H / σ_ℓ) x round(W / σ_ℓ)`` (round half up). The finest level is
    the input itself.
    """
    if num_levels < 1 or sigma_step <= 1.0:
        raise ValueError("build_pyramid needs num_levels >= 1 and sigma_step > 1")
    image = ensure_image(image)
    height, width = image.shape[:2]
    factors = tuple(sigma_step ** (num_levels - 1 - lvl) for lvl in range(num_levels - 1)) + (1.0,)
    levels = [_pyramid_level(image, height, width, sigma) for sigma in factors[:-1]]
    levels.append(image)
    return ScalePyramid(levels=tuple(levels), scale_factors=factors)


def _pyramid_level(image: np.ndarray, height: int, width: int, sigma: float) -> np.ndarray:
    out_h, out_w = round_half_up(height / sigma), round_half_up(width / sigma)
    if out_h < MIN_IMAGE_SIZE or out_w < MIN_IMAGE_SIZE:
        raise SizeError(f"pyramid level at scale {sigma:.3f} would be {out_h}x{out_w}, below {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    blurred = gaussian_blur(image, 0.5 * sigma)
    return resize_image(blurred, out_h, out_w).astype(image.dtype, copy=False)


def single_scale_pyramid(image: np.ndarray, num_levels: int) -> ScalePyramid:
    """Pyramid whose every level is the full-resolution image."""
    image = ensure_image(image)
    return ScalePyramid(levels=(image,) * num_levels, scale_factors=(1.0,) * num_levels)


def to_hsv(rgb: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] to HSV with hue in [0, 1) turns (float64)."""
    return rgb_to_hsv(np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0))


def circular_mean(angles: np.ndarray) -> float:
    """Mean direction of *angles* (radians) in [0, 2π)."""
    if angles.size == 0:
        return 0.0
    mean = math.atan2(float(np.sin(angles).mean()), float(np.cos(angles).mean()))
    return mean % TWO_PI


def _validate_window(window: Window, height: int, width: int) -> None:
    inside = 0 <= window.top < window.bottom <= height and 0 <= window.left < window.right <= width
    if not inside or window.area < 4:
        raise SizeError(f"window {window.as_tuple()} is degenerate or outside a {height}x{width} image")


def compute_stats(image: np.ndarray, window: Window | None = None) -> AttributeStats:
    """Brightness, saturation, hue and contrasts over *window* (default: whole image).

    ``global_contrast`` is always measured over the whole image.
    """
    hsv = to_hsv(image)
    if window is not None:
        _validate_window(window, hsv.shape[0], hsv.shape[1])
        region = hsv[window.top : window.bottom, window.left : window.right]
    else:
        region = hsv
    return AttributeStats(
        brightness=float(region[..., 2].mean()),
        saturation=float(region[..., 1].mean()),
        hue=circular_mean(region[..., 0].ravel() * TWO_PI),
        local_contrast=float(region[..., 2].std()),
        global_contrast=float(hsv[..., 2].std()),
    )


def _angle_difference(target: float, source: float) -> float:
    """Signed shortest rotation from *source* to *target*, in (-π, π]."""
    diff = (target - source) % TWO_PI
    return diff - TWO_PI if diff > math.pi else diff


def _away(current: float, target: float, rng: np.random.Generator) -> float:
    """Direction (+1/-1) that moves *current* further from *target*."""
    if current == target:
        return 1.0 if rng.random() < 0.5 else -1.0
    return 1.0 if current > target else -1.0


def adjust_attributes(
    sprite: np.ndarray,
    target: AttributeStats,
    mode: Literal["match", "mismatch"],
    strength: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Move a sprite's colour attributes toward (match) or away from (mismatch) *target*.

    Statistics of the sprite are taken over its opaque pixels (alpha > 0.5).
    The alpha channel is returned untouched and colours stay in [0, 1].
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    if mode == "match" and strength == 0.0:
        return sprite.copy()
    hsv = to_hsv(sprite[..., :3])
    opaque = sprite[..., 3] > 0.5
    if not opaque.any():
        opaque = np.ones(opaque.shape, dtype=bool)
    if mode == "match":
        _match_hsv(hsv, opaque, target, strength)
    elif mode == "mismatch":
        _mismatch_hsv(hsv, opaque, target, strength, rng)
    else:
        raise ValueError(f"unknown attribute mode {mode!r}")
    return _recombine(hsv, sprite)


def _scale_contrast(value: np.ndarray, opaque: np.ndarray, gain: float) -> None:
    centre = float(value[opaque].mean())
    value[...] = centre + (value - centre) * gain


def _match_hsv(hsv: np.ndarray, opaque: np.ndarray, target: AttributeStats, strength: float) -> None:
    value, sat = hsv[..., 2], hsv[..., 1]
    spread = float(value[opaque].std())
    if spread > 0.0:
        ratio = min(target.local_contrast / spread, 4.0)
        _scale_contrast(value, opaque, 1.0 + strength * (ratio - 1.0))
    value += strength * (target.brightness - float(value[opaque].mean()))
    sat += strength * (target.saturation - float(sat[opaque].mean()))
    hue_now = circular_mean(hsv[..., 0][opaque] * TWO_PI)
    hsv[..., 0] += strength * _angle_difference(target.hue, hue_now) / TWO_PI


def _mismatch_hsv(
    hsv: np.ndarray, opaque: np.ndarray, target: AttributeStats, strength: float, rng: np.random.Generator
) -> None:
    value, sat = hsv[..., 2], hsv[..., 1]
    spread = float(value[opaque].std())
    gain = 1.0 + strength if spread >= target.local_contrast else 1.0 - 0.5 * strength
    _scale_contrast(value, opaque, gain)
    value += 0.5 * strength * _away(float(value[opaque].mean()), target.brightness, rng)
    sat += 0.5 * strength * _away(float(sat[opaque].mean()), target.saturation, rng)
    hsv[..., 0] += rng.uniform(math.pi / 2.0, 3.0 * math.pi / 2.0) / TWO_PI


def perturb_attributes(sprite: np.ndarray, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Random brightness/saturation/hue change that ignores the destination image."""
    hsv = to_hsv(sprite[..., :3])
    hsv[..., 2] += strength * rng.uniform(-0.3, 0.3)
    hsv[..., 1] *= 1.0 + strength * rng.uniform(-0.5, 0.5)
    hsv[..., 0] += strength * rng.uniform(-0.25, 0.25)
    return _recombine(hsv, sprite)


def _recombine(hsv: np.ndarray, sprite: np.ndarray) -> np.ndarray:
    hsv[..., 0] %= 1.0
    np.clip(hsv[..., 1:], 0.0, 1.0, out=hsv[..., 1:])
    out = sprite.astype(np.float64, copy=True)
    out[..., :3] = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    return out.astype(sprite.dtype, copy=False)


def _quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((base * scale + 50.0) / 100.0), 1.0, 255.0)


def _rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def _ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    return np.stack([y + 1.402 * cr, y - 0.344136 * cb - 0.714136 * cr, y + 1.772 * cb], axis=-1)


def _quantize_blocks(channel: np.ndarray, table: np.ndarray) -> np.ndarray:
    """DCT each 8x8 block, quantize with *table*, and return the reconstruction."""
    height, width = channel.shape
    blocks = (channel - 128.0).reshape(height // 8, 8, width // 8, 8).transpose(0, 2, 1, 3)
    coeffs = dctn(blocks, axes=(-2, -1), norm="ortho")
    restored = idctn(np.round(coeffs / table) * table, axes=(-2, -1), norm="ortho")
    return restored.transpose(0, 2, 1, 3).reshape(height, width) + 128.0


def jpeg_degrade(image: np.ndarray, quality: int) -> np.ndarray:
    """Simulate a baseline JPEG round trip (4:4:4, no entropy coding) at *quality*.

    The image is edge-padded to multiples of 8 and cropped back afterwards;
    the result is snapped to 8-bit levels as a decoder would produce.
    """
    if not 1 <= int(quality) <= 100:
        raise ValueError(f"JPEG quality must lie in [1, 100], got {quality}")
    height, width = image.shape[:2]
    pad_h, pad_w = (-height) % 8, (-width) % 8
    padded = np.pad(np.asarray(image, dtype=np.float64) * 255.0, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    ycc = _rgb_to_ycbcr(padded)
    tables = (_quant_table(_LUMA_TABLE, quality), _quant_table(_CHROMA_TABLE, quality), _quant_table(_CHROMA_TABLE, quality))
    for idx, table in enumerate(tables):
        ycc[..., idx] = _quantize_blocks(ycc[..., idx], table)
    rgb = np.round(np.clip(_ycbcr_to_rgb(ycc), 0.0, 255.0)) / 255.0
    return rgb[:height, :width].astype(np.float32)


def psnr(reference: np.ndarray, degraded: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    mse = float(np.mean((np.asarray(reference, np.float64) - np.asarray(degraded, np.float64)) ** 2))
    return float("inf") if mse == 0.0 else 10.0 * math.log10(1.0 / mse)


def random_crop_resize(image: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random square crop (at least half the shorter side) resized to ``size x size``."""
    height, width = image.shape[:2]
    short = min(height, width)
    side = int(rng.integers(max(short // 2, 1), short + 1))
    top = int(rng.integers(0, height - side + 1))
    left = int(rng.integers(0, width - side + 1))
    crop = image[top : top + side, left : left + side]
    if side > size:
        crop = gaussian_blur(crop, 0.5 * side / size)
    return np.clip(resize_image(crop, size, size), 0.0, 1.0).astype(np.float32)
