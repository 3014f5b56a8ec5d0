"""Synthesis of ``(image, mask)`` pairs with artificially added graphics patterns.

``synthesize`` is a pure function of its inputs and the generator it is
handed. Datasets derive one generator per sample from the master seed and
the sample's coordinates (``numpy.random.default_rng([seed, ...])``), so
samples can be produced in any order or on any worker and still come out
bit-identical.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterator, NamedTuple, Sequence

import numpy as np

from .constants import (
    CATEGORIES,
    DATASET_MANIFEST_NAME,
    MIN_SPRITE_SIDE,
    SIZE_LEVELS,
    SYNTH_MAX_RETRIES,
    WINDOW_DILATION,
)
from .exceptions import StorageError, SynthesisError
from .imgproc import (
    adjust_attributes,
    compute_stats,
    ensure_image,
    jpeg_degrade,
    perturb_attributes,
    random_crop_resize,
    read_image,
    resize_image,
    resize_nearest,
    round_half_up,
    write_image,
    write_mask,
)
from .models import DatasetGrid, Pattern, PlacedPattern, PlacementMode, StreamConfig, SynthesisConfig, SynthSample, Window
from .patterns import ProceduralPatternSource
from .protocols import ImageSource, PatternSource

_log = logging.getLogger(__name__)

TRAIN_STREAM = 0
VALIDATION_STREAM = 1


class _PatternTooSmall(Exception):
    """A drawn pattern would be smaller than the minimum sprite side."""


class _Drawn(NamedTuple):
    sprite: np.ndarray
    size_param: float


def split_total(total: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Split *total* into *count* shares proportional to uniform variates."""
    weights = rng.uniform(0.0, 1.0, size=count)
    return total * weights / weights.sum()


def scale_to_coverage(pattern: Pattern, share: float, canvas: tuple[int, int]) -> np.ndarray:
    """Resize a sprite so its opaque footprint covers *share* of the canvas."""
    height, width = canvas
    sprite_h, sprite_w = pattern.native_size
    coverage = pattern.coverage
    if coverage == 0.0:
        raise _PatternTooSmall("sprite has no opaque pixels")
    scale = math.sqrt(share * height * width / (coverage * sprite_h * sprite_w))
    scale = min(scale, height / sprite_h, width / sprite_w)
    out_h = min(round_half_up(sprite_h * scale), height)
    out_w = min(round_half_up(sprite_w * scale), width)
    if min(out_h, out_w) < MIN_SPRITE_SIDE:
        raise _PatternTooSmall(f"sprite would be {out_h}x{out_w}")
    return resize_nearest(pattern.sprite, out_h, out_w)


def _draw_sprites(
    patterns: PatternSource, config: SynthesisConfig, rng: np.random.Generator, canvas: tuple[int, int]
) -> tuple[list[_Drawn], float]:
    """Draw K sprites at final size and the sample's size measure."""
    count = int(rng.integers(config.count_range[0], config.count_range[1] + 1))
    measure = float(rng.uniform(*config.area_range))
    if config.category == "line":
        drawn = [patterns.draw("line", rng, canvas=canvas, size_param=measure).sprite for _ in range(count)]
        return [_Drawn(_check_side(s), measure) for s in drawn], measure
    if config.category == "text":
        shares = split_total(float(rng.uniform(*config.bbox_range)), count, rng)
        drawn = [patterns.draw("text", rng, canvas=canvas, size_param=measure, target_area=float(a)).sprite for a in shares]
        return [_Drawn(_check_side(s), measure) for s in drawn], measure
    shares = split_total(measure, count, rng)
    sprites = [
        _Drawn(scale_to_coverage(patterns.draw(config.category, rng, canvas=canvas), float(share), canvas), float(share))
        for share in shares
    ]
    return sprites, measure


def _check_side(sprite: np.ndarray) -> np.ndarray:
    if min(sprite.shape[:2]) < MIN_SPRITE_SIDE:
        raise _PatternTooSmall(f"sprite is {sprite.shape[0]}x{sprite.shape[1]}")
    return sprite


def _draw_with_retries(
    patterns: PatternSource, config: SynthesisConfig, rng: np.random.Generator, canvas: tuple[int, int]
) -> tuple[list[_Drawn], float]:
    for attempt in range(SYNTH_MAX_RETRIES):
        try:
            return _draw_sprites(patterns, config, rng, canvas)
        except _PatternTooSmall as exc:
            _log.debug("resampling %s/%s patterns (attempt %d): %s", config.category, config.size_level, attempt + 1, exc)
    raise SynthesisError(
        f"could not draw {config.category}/{config.size_level} patterns of at least "
        f"{MIN_SPRITE_SIDE}x{MIN_SPRITE_SIDE} px after {SYNTH_MAX_RETRIES} attempts"
    )


def _align(
    image: np.ndarray, box: Window, sprite: np.ndarray, config: SynthesisConfig, rng: np.random.Generator
) -> tuple[np.ndarray, PlacementMode]:
    """Apply the configured attribute randomization to *sprite* placed at *box*."""
    if config.attribute_mode == "none":
        return sprite, "none"
    strength = float(rng.uniform(*config.strength_range))
    if config.attribute_mode == "simple":
        return perturb_attributes(sprite, strength, rng), "simple"
    height, width = image.shape[:2]
    target = compute_stats(image, box.dilate(WINDOW_DILATION, height, width))
    mode: PlacementMode = "match" if rng.random() < config.match_probability else "mismatch"
    return adjust_attributes(sprite, target, mode, strength, rng), mode


def _place(
    image: np.ndarray, mask: np.ndarray, drawn: _Drawn, config: SynthesisConfig, rng: np.random.Generator
) -> PlacedPattern:
    """Composite one sprite at a uniform position fully inside the image; update *mask* in place."""
    height, width = image.shape[:2]
    sprite_h, sprite_w = drawn.sprite.shape[:2]
    if sprite_h > height or sprite_w > width:
        raise SynthesisError(f"{sprite_h}x{sprite_w} sprite does not fit a {height}x{width} image")
    top = int(rng.integers(0, height - sprite_h + 1))
    left = int(rng.integers(0, width - sprite_w + 1))
    box = Window(top, left, top + sprite_h, left + sprite_w)
    sprite, mode = _align(image, box, drawn.sprite, config, rng)
    alpha = sprite[..., 3:4]
    region = image[box.top : box.bottom, box.left : box.right]
    region[...] = alpha * sprite[..., :3] + (1.0 - alpha) * region
    footprint = sprite[..., 3] > 0.5
    mask[box.top : box.bottom, box.left : box.right] |= footprint
    return PlacedPattern(
        category=config.category,
        bbox=box.as_tuple(),
        area_fraction=float(footprint.sum()) / (height * width),
        attribute_mode=mode,
        size_param=drawn.size_param,
        bbox_area_fraction=box.area / (height * width),
    )


def synthesize(
    base: np.ndarray, patterns: PatternSource, config: SynthesisConfig, rng: np.random.Generator
) -> SynthSample:
    """Composite K randomly drawn patterns onto *base* and return the image with its union mask.

    Draw order: pattern count and size measure, the sprites themselves,
    then per pattern its position and attribute randomization, then the
    JPEG quality. A pattern that would shrink below the minimum side causes
    the whole draw to be repeated.
    """
    image = ensure_image(base).astype(np.float32, copy=True)
    canvas = (image.shape[0], image.shape[1])
    drawn, measure = _draw_with_retries(patterns, config, rng, canvas)
    mask = np.zeros(canvas, dtype=np.uint8)
    placements = tuple(_place(image, mask, item, config, rng) for item in drawn)
    quality = None
    if config.jpeg_quality_range is not None:
        quality = int(rng.integers(config.jpeg_quality_range[0], config.jpeg_quality_range[1] + 1))
        image = jpeg_degrade(image, quality)
    return SynthSample(image=image, mask=mask, placements=placements, jpeg_quality=quality, size_param=measure)


class _CellJob(NamedTuple):
    category: str
    size: str
    grid: DatasetGrid
    base_images: Sequence[np.ndarray]
    patterns: PatternSource
    out_dir: Path


def _build_cell(job: _CellJob) -> dict[str, Any]:
    """Synthesize and write every image of one (category, size) cell."""
    config = job.grid.cell_config(job.category, job.size)
    cell_dir = job.out_dir / job.category / job.size
    cat_idx, size_idx = CATEGORIES.index(job.category), SIZE_LEVELS.index(job.size)
    samples = []
    for index in range(job.grid.images_per_cell):
        rng = np.random.default_rng([job.grid.seed, cat_idx, size_idx, index])
        base = job.base_images[int(rng.integers(0, len(job.base_images)))]
        sample = synthesize(random_crop_resize(base, job.grid.image_size, rng), job.patterns, config, rng)
        write_image(cell_dir / f"{index}.png", sample.image)
        write_mask(cell_dir / f"{index}_mask.png", sample.mask)
        samples.append(_sample_record(job.category, job.size, index, sample))
    _log.info("wrote %d samples for cell %s/%s", len(samples), job.category, job.size)
    return {"category": job.category, "size": job.size, "config": config.to_dict(), "samples": samples}


def _sample_record(category: str, size: str, index: int, sample: SynthSample) -> dict[str, Any]:
    return {
        "index": index,
        "image": f"{category}/{size}/{index}.png",
        "mask": f"{category}/{size}/{index}_mask.png",
        "size_param": sample.size_param,
        "jpeg_quality": sample.jpeg_quality,
        "mask_fraction": sample.mask_fraction,
        "placements": [p.to_dict() for p in sample.placements],
    }


def build_test_set(
    base_images: Sequence[np.ndarray],
    out_dir: str | Path,
    grid: DatasetGrid,
    *,
    patterns: PatternSource | None = None,
    jobs: int = 1,
) -> dict[str, Any]:
    """Materialize a fixed test set: ``<out>/<category>/<size>/<i>.png`` plus ``manifest.json``.

    Test synthesis skips attribute randomization. Each sample's generator is
    seeded from ``(seed, category, size, index)``, so ``jobs`` does not
    change the output.
    """
    if not base_images:
        raise SynthesisError("build_test_set needs at least one base image")
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create dataset directory {root}: {exc}") from exc
    source = patterns or ProceduralPatternSource()
    cell_jobs = [_CellJob(c, s, grid, list(base_images), source, root) for c, s in grid.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_build_cell, cell_jobs))
    else:
        cells = [_build_cell(job) for job in cell_jobs]
    manifest = {
        "seed": grid.seed,
        "image_size": grid.image_size,
        "images_per_cell": grid.images_per_cell,
        "cells": cells,
    }
    write_manifest(root / DATASET_MANIFEST_NAME, manifest)
    return manifest


def write_manifest(path: Path, manifest: dict[str, Any]) -> None:
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"failed to write manifest {path}: {exc}") from exc


def load_manifest(test_dir: str | Path) -> dict[str, Any]:
    """Read and minimally validate a dataset manifest."""
    path = Path(test_dir) / DATASET_MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StorageError(f"failed to read dataset manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("cells"), list):
        raise StorageError(f"malformed dataset manifest {path}: missing 'cells' list")
    return manifest


@dataclass(frozen=True, slots=True)
class ProceduralImageSource:
    """Smooth multi-octave colour fields with random contrast, standing in for photographs."""

    octaves: int = 4

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        total = np.zeros((size, size, 3), dtype=np.float64)
        amplitude, weight = 1.0, 0.0
        for octave in range(self.octaves):
            cells = 2 ** (octave + 1)
            total += amplitude * resize_image(rng.random((cells, cells, 3)), size, size)
            weight += amplitude
            amplitude *= 0.5
        total /= weight
        lo, hi = float(total.min()), float(total.max())
        normalized = (total - lo) / max(hi - lo, 1e-8)
        gain = rng.uniform(0.4, 1.0)
        offset = rng.uniform(0.0, 1.0 - gain)
        return (offset + gain * normalized).astype(np.float32)


@lru_cache(maxsize=64)
def _cached_image(path: str) -> np.ndarray:
    return read_image(path)


@dataclass(frozen=True)
class DirectoryImageSource:
    """PNG/JPEG files under *root*; each sample is a random crop resized to the requested size."""

    root: Path
    files: tuple[Path, ...] = field(init=False, default=())

    def __post_init__(self) -> None:
        root = Path(self.root)
        if not root.is_dir():
            raise StorageError(f"base image directory not found: {root}")
        found = tuple(sorted(p for p in root.rglob("*") if p.suffix.lower() in {".png", ".jpg", ".jpeg"}))
        if not found:
            raise StorageError(f"no PNG or JPEG images under {root}")
        object.__setattr__(self, "files", found)
        _log.info("base image directory %s: %d images", root, len(found))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        path = self.files[int(rng.integers(0, len(self.files)))]
        return random_crop_resize(_cached_image(str(path)), size, rng)

    def load_all(self) -> list[np.ndarray]:
        return [_cached_image(str(path)) for path in self.files]


BASE_IMAGE_POOL = 32


def base_image_pool(images: ImageSource, grid: DatasetGrid, count: int = BASE_IMAGE_POOL) -> list[np.ndarray]:
    """Base images for a test set: every file of a directory source, else *count* seeded draws."""
    if isinstance(images, DirectoryImageSource):
        return images.load_all()
    return [images.sample(np.random.default_rng([grid.seed, 7, i]), grid.image_size) for i in range(count)]


@dataclass(frozen=True)
class SynthStream:
    """Seeded, index-addressable stream of training and validation batches.

    Sample ``i`` of step ``t`` in stage ``ℓ`` is drawn from
    ``default_rng([seed, stream, ℓ, t, i])``; batches are therefore
    reproducible no matter which thread produces them.
    """

    images: ImageSource
    patterns: PatternSource
    config: StreamConfig
    seed: int = 0

    def sample(self, stream: int, stage: int, step: int, index: int) -> SynthSample:
        rng = np.random.default_rng([self.seed, stream, stage, step, index])
        category = self.config.categories[int(rng.integers(0, len(self.config.categories)))]
        size = SIZE_LEVELS[int(rng.choice(len(SIZE_LEVELS), p=self.config.size_probabilities))]
        base = self.images.sample(rng, self.config.resolution)
        return synthesize(base, self.patterns, self.config.cell(category, size), rng)

    def _collect(self, stream: int, stage: int, step: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        samples = [self.sample(stream, stage, step, i) for i in range(count)]
        return np.stack([s.image for s in samples]), np.stack([s.mask for s in samples])

    def batch(self, stage: int, step: int, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
        """Images ``N x H x W x 3`` (float32) and masks ``N x H x W`` (uint8)."""
        return self._collect(TRAIN_STREAM, stage, step, batch_size)

    def validation(self, stage: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        return self._collect(VALIDATION_STREAM, stage, 0, count)


_DONE = object()


class PrefetchingStream:
    """Produce the batches of one stage on a background thread through a bounded queue.

    Iteration yields batches in step order. An exception raised by the
    producer is re-raised in the consumer.
    """

    def __init__(self, stream: SynthStream, stage: int, steps: int, batch_size: int, depth: int = 2) -> None:
        self._stream = stream
        self._stage = stage
        self._steps = steps
        self._batch_size = batch_size
        self._queue: queue.Queue[Any] = queue.Queue(maxsize=max(depth, 1))
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._produce, name=f"synth-stage{stage}", daemon=True)

    def _put(self, item: Any) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for step in range(self._steps):
                if not self._put(self._stream.batch(self._stage, step, self._batch_size)):
                    return
        except Exception as exc:  # surfaced in the consumer
            self._put(exc)
            return
        self._put(_DONE)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self._stop.set()


def stage_batches(
    stream: SynthStream, stage: int, steps: int, batch_size: int, *, deterministic: bool = True
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Batches for one stage; single-threaded in deterministic mode, prefetched otherwise."""
    if deterministic:
        return (stream.batch(stage, step, batch_size) for step in range(steps))
    return iter(PrefetchingStream(stream, stage, steps, batch_size))
