"""Procedural graphics patterns (stickers, lines, text, logos) and sprite loading.

Stickers and logos are rendered on a fixed native canvas and scaled at
placement time by coverage. Lines and text are rasterized at their final
size because their size measure (stroke width, glyph size) is defined
relative to the destination image.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image as PILImage
from PIL import ImageDraw

from .constants import DEFAULT_TEST_RESOLUTION, MIN_SPRITE_SIDE
from .exceptions import StorageError
from .imgproc import read_sprite, round_half_up
from .models import Category, Pattern

_log = logging.getLogger(__name__)

NATIVE_CANVAS = 64
_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
MAX_TEXT_CHARS = 12
_CHAR_PITCH = 6  # 5 glyph columns + 1 spacing column
_LINE_PITCH = 9  # 7 glyph rows + 2 spacing rows

# 5x7 bitmap font, one string of five bits per row.
_FONT_5X7: dict[str, tuple[str, ...]] = {
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "B": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11110", "10001", "10001", "10001", "10001", "10001", "11110"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "F": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10001", "10001", "01111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "I": ("01110", "00100", "00100", "00100", "00100", "00100", "01110"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "N": ("10001", "10001", "11001", "10101", "10011", "10001", "10001"),
    "O": ("01110", "10001", "10001", "10001", "10001", "10001", "01110"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "10001", "01010", "00100"),
    "W": ("10001", "10001", "10001", "10101", "10101", "10101", "01010"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "Y": ("10001", "10001", "10001", "01010", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

RGB = tuple[int, int, int]


def random_color(rng: np.random.Generator) -> RGB:
    """Uniform hue, saturation and value in [0.3, 1], as 8-bit RGB."""
    hsv = np.array([rng.uniform(0.0, 1.0), *rng.uniform(0.3, 1.0, size=2)])
    r, g, b = hsv_to_rgb(hsv)
    return (round_half_up(r * 255), round_half_up(g * 255), round_half_up(b * 255))


def distinct_colors(rng: np.random.Generator, count: int) -> list[RGB]:
    colors: list[RGB] = []
    while len(colors) < count:
        color = random_color(rng)
        if color not in colors:
            colors.append(color)
    return colors


def stroke_width(fraction: float, canvas: tuple[int, int]) -> int:
    """Line width in pixels for a width ratio relative to the shorter image side."""
    return max(round_half_up(fraction * min(canvas)), 1)


def _to_sprite(img: PILImage.Image) -> np.ndarray:
    return np.asarray(img, dtype=np.float32) / 255.0


def _blank(height: int, width: int) -> tuple[PILImage.Image, ImageDraw.ImageDraw]:
    img = PILImage.new("RGBA", (width, height), (0, 0, 0, 0))
    return img, ImageDraw.Draw(img)


def _polygon_points(cx: float, cy: float, radius: float, sides: int, rotation: float) -> list[tuple[float, float]]:
    step = 2.0 * math.pi / sides
    return [(cx + radius * math.cos(rotation + i * step), cy + radius * math.sin(rotation + i * step)) for i in range(sides)]


def _draw_base_shape(draw: ImageDraw.ImageDraw, kind: str, inset: float, color: RGB, params: dict) -> None:
    size = NATIVE_CANVAS
    box = (inset, inset, size - 1 - inset, size - 1 - inset)
    fill = color + (255,)
    if kind == "ellipse":
        draw.ellipse(box, fill=fill)
    elif kind == "rounded":
        draw.rounded_rectangle(box, radius=params["corner"], fill=fill)
    else:
        centre = (size - 1) / 2.0
        draw.polygon(_polygon_points(centre, centre, centre - inset, params["sides"], params["rotation"]), fill=fill)


def _sticker(rng: np.random.Generator) -> np.ndarray:
    """Ellipse, rounded rectangle or regular polygon with inner regions and an optional border."""
    img, draw = _blank(NATIVE_CANVAS, NATIVE_CANVAS)
    kind = ("ellipse", "rounded", "polygon")[int(rng.integers(0, 3))]
    params = {"corner": int(rng.integers(4, 16)), "sides": int(rng.integers(5, 9)), "rotation": rng.uniform(0, math.pi)}
    regions = int(rng.integers(2, 5))
    bordered = bool(rng.random() < 0.5)
    colors = distinct_colors(rng, regions + int(bordered))
    inset = 1.0
    if bordered:
        _draw_base_shape(draw, kind, inset, colors.pop(), params)
        inset += float(rng.integers(2, 5))
    _draw_base_shape(draw, kind, inset, colors[0], params)
    for color in colors[1:]:
        _inner_region(draw, rng, color)
    return _to_sprite(img)


def _inner_region(draw: ImageDraw.ImageDraw, rng: np.random.Generator, color: RGB) -> None:
    centre = (NATIVE_CANVAS - 1) / 2.0
    radius = rng.uniform(4.0, 10.0)
    cx, cy = centre + rng.uniform(-6.0, 6.0, size=2)
    box = (cx - radius, cy - radius, cx + radius, cy + radius)
    if rng.random() < 0.5:
        draw.ellipse(box, fill=color + (255,))
    else:
        draw.rectangle(box, fill=color + (255,))


def _logo(rng: np.random.Generator) -> np.ndarray:
    """Two to five overlapping flat-colour primitives around the canvas centre."""
    img, draw = _blank(NATIVE_CANVAS, NATIVE_CANVAS)
    count = int(rng.integers(2, 6))
    centre = (NATIVE_CANVAS - 1) / 2.0
    for color in distinct_colors(rng, count):
        cx, cy = centre + rng.uniform(-10.0, 10.0, size=2)
        radius = rng.uniform(8.0, 20.0)
        _logo_primitive(draw, int(rng.integers(0, 4)), (cx, cy, radius), color, rng)
    return _to_sprite(img)


def _logo_primitive(
    draw: ImageDraw.ImageDraw, kind: int, circle: tuple[float, float, float], color: RGB, rng: np.random.Generator
) -> None:
    cx, cy, radius = circle
    box = (cx - radius, cy - radius, cx + radius, cy + radius)
    fill = color + (255,)
    if kind == 0:
        draw.rectangle(box, fill=fill)
    elif kind == 1:
        draw.ellipse(box, fill=fill)
    elif kind == 2:
        draw.polygon(_polygon_points(cx, cy, radius, 3, rng.uniform(0, math.pi)), fill=fill)
    else:
        draw.ellipse(box, outline=fill, width=max(int(radius // 3), 2))


def _line(rng: np.random.Generator, canvas: tuple[int, int], fraction: float) -> np.ndarray:
    """Straight segment or quadratic curve with hard alpha, cropped to its footprint."""
    width = stroke_width(fraction, canvas)
    short = min(canvas)
    length = rng.uniform(0.3, 0.9) * max(short - width - 2, 1)
    angle = rng.uniform(0.0, math.pi)
    span = int(math.ceil(length)) + 2 * width + 2
    img, draw = _blank(span, span)
    centre = span / 2.0
    dx, dy = 0.5 * length * math.cos(angle), 0.5 * length * math.sin(angle)
    start, end = (centre - dx, centre - dy), (centre + dx, centre + dy)
    points = [start, end]
    if rng.random() < 0.5:
        bend = rng.uniform(-0.4, 0.4) * length
        control = (centre - bend * math.sin(angle), centre + bend * math.cos(angle))
        points = _quadratic_curve(start, control, end, samples=32)
    draw.line(points, fill=random_color(rng) + (255,), width=width, joint="curve")
    return pad_to_min_side(_crop_to_alpha(img))


def _quadratic_curve(
    p0: tuple[float, float], p1: tuple[float, float], p2: tuple[float, float], samples: int
) -> list[tuple[float, float]]:
    t = np.linspace(0.0, 1.0, samples)[:, None]
    curve = (1 - t) ** 2 * np.array(p0) + 2 * (1 - t) * t * np.array(p1) + t**2 * np.array(p2)
    return [(float(x), float(y)) for x, y in curve]


def _crop_to_alpha(img: PILImage.Image) -> np.ndarray:
    bbox = img.getchannel("A").getbbox()
    return _to_sprite(img.crop(bbox) if bbox else img)


def pad_to_min_side(sprite: np.ndarray, min_side: int = MIN_SPRITE_SIDE) -> np.ndarray:
    """Centre *sprite* in a transparent border so neither side is shorter than *min_side*."""
    extra = [max(min_side - n, 0) for n in sprite.shape[:2]]
    if not any(extra):
        return sprite
    return np.pad(sprite, [(e // 2, e - e // 2) for e in extra] + [(0, 0)])


def text_layout(glyph_px: float, target_px: float, canvas: tuple[int, int]) -> tuple[int, int]:
    """Pick ``(columns, rows)`` whose bounding box area is closest to *target_px* and fits the canvas."""
    unit = glyph_px / 5.0
    height, width = canvas
    best, best_err = (1, 1), math.inf
    for rows in range(1, MAX_TEXT_CHARS + 1):
        for cols in range(1, MAX_TEXT_CHARS // rows + 1):
            box_w, box_h = (cols * _CHAR_PITCH - 1) * unit, (rows * _LINE_PITCH - 2) * unit
            if box_w > width or box_h > height:
                continue
            err = abs(box_w * box_h - target_px)
            if err < best_err:
                best, best_err = (cols, rows), err
    return best


def render_text(chars: str, cols: int, glyph_px: float) -> np.ndarray:
    """Rasterize *chars* in rows of *cols* as a hard {0, 1} bitmap scaled to *glyph_px* wide glyphs."""
    rows = math.ceil(len(chars) / cols)
    bitmap = np.zeros((rows * _LINE_PITCH - 2, cols * _CHAR_PITCH - 1), dtype=bool)
    for idx, char in enumerate(chars):
        top, left = (idx // cols) * _LINE_PITCH, (idx % cols) * _CHAR_PITCH
        glyph = np.array([[bit == "1" for bit in row] for row in _FONT_5X7[char]], dtype=bool)
        bitmap[top : top + 7, left : left + 5] = glyph
    unit = glyph_px / 5.0
    out_h = max(round_half_up(bitmap.shape[0] * unit), 1)
    out_w = max(round_half_up(bitmap.shape[1] * unit), 1)
    rows_idx = np.minimum((np.arange(out_h) / unit).astype(int), bitmap.shape[0] - 1)
    cols_idx = np.minimum((np.arange(out_w) / unit).astype(int), bitmap.shape[1] - 1)
    return bitmap[rows_idx][:, cols_idx]


def _text(
    rng: np.random.Generator, canvas: tuple[int, int], glyph_fraction: float, target_area: float | None
) -> np.ndarray:
    glyph_px = glyph_fraction * canvas[1]
    if target_area is None:
        fitting = max(int((canvas[1] * 5.0 / glyph_px + 1) // _CHAR_PITCH), 1)
        cols, rows = min(int(rng.integers(1, MAX_TEXT_CHARS + 1)), fitting), 1
    else:
        cols, rows = text_layout(glyph_px, target_area * canvas[0] * canvas[1], canvas)
    chars = "".join(_ALPHABET[int(i)] for i in rng.integers(0, len(_ALPHABET), size=cols * rows))
    ink = render_text(chars, cols, glyph_px)
    sprite = np.zeros(ink.shape + (4,), dtype=np.float32)
    sprite[ink] = np.array(random_color(rng) + (255,), dtype=np.float32) / 255.0
    return sprite


_DEFAULT_SIZE_PARAM = {"line": 0.02, "text": 0.1}


def generate_pattern(
    category: Category,
    rng: np.random.Generator,
    *,
    canvas: tuple[int, int] = (DEFAULT_TEST_RESOLUTION, DEFAULT_TEST_RESOLUTION),
    size_param: float | None = None,
    target_area: float | None = None,
) -> Pattern:
    """Draw one procedural sprite of *category*.

    *size_param* is the stroke width ratio for lines and the glyph width
    ratio for text (ignored for stickers and logos). *target_area* is the
    desired text bounding-box area as a fraction of the canvas.
    """
    if category == "sticker":
        return Pattern(sprite=_sticker(rng), category=category)
    if category == "logo":
        return Pattern(sprite=_logo(rng), category=category)
    fraction = _DEFAULT_SIZE_PARAM.get(category, 0.0) if size_param is None else size_param
    if category == "line":
        return Pattern(sprite=_line(rng, canvas, fraction), category=category, size_param=fraction)
    if category == "text":
        return Pattern(sprite=_text(rng, canvas, fraction, target_area), category=category, size_param=fraction)
    raise ValueError(f"unknown pattern category {category!r}")


@dataclass(frozen=True, slots=True)
class ProceduralPatternSource:
    """``PatternSource`` backed by ``generate_pattern``."""

    def draw(
        self,
        category: Category,
        rng: np.random.Generator,
        *,
        canvas: tuple[int, int],
        size_param: float | None = None,
        target_area: float | None = None,
    ) -> Pattern:
        return generate_pattern(category, rng, canvas=canvas, size_param=size_param, target_area=target_area)


@dataclass(frozen=True)
class SpriteDirectorySource:
    """User-supplied RGBA sprites under ``root/<category>/*.png``.

    Only stickers and logos are read from disk; lines and text are always
    procedural since their size is defined at raster time. Categories with
    no sprites on disk fall back to the procedural generator.
    """

    root: Path
    _sprites: dict[str, tuple[Path, ...]] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not Path(self.root).is_dir():
            raise StorageError(f"sprite directory not found: {self.root}")
        for category in ("sticker", "logo"):
            found = tuple(sorted((Path(self.root) / category).glob("*.png")))
            self._sprites[category] = found
            _log.info("sprite directory %s: %d %s sprites", self.root, len(found), category)

    def draw(
        self,
        category: Category,
        rng: np.random.Generator,
        *,
        canvas: tuple[int, int],
        size_param: float | None = None,
        target_area: float | None = None,
    ) -> Pattern:
        paths = self._sprites.get(category, ())
        if not paths:
            return generate_pattern(category, rng, canvas=canvas, size_param=size_param, target_area=target_area)
        sprite = read_sprite(paths[int(rng.integers(0, len(paths)))])
        return Pattern(sprite=sprite, category=category)
