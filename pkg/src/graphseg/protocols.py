from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np

if TYPE_CHECKING:
    from .models import Category, Pattern


@runtime_checkable
class PatternSource(Protocol):
    """Abstraction for anything that hands out pattern sprites by category."""

    def draw(
        self,
        category: Category,
        rng: np.random.Generator,
        *,
        canvas: tuple[int, int],
        size_param: float | None = None,
        target_area: float | None = None,
    ) -> Pattern:
        ...


@runtime_checkable
class ImageSource(Protocol):
    """Abstraction for base (background) images at a requested square size."""

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...


@runtime_checkable
class MaskPredictor(Protocol):
    """Anything that maps an RGB image to a soft mask in [0, 1] of the same size."""

    def predict_soft(self, image: np.ndarray) -> np.ndarray:
        ...
