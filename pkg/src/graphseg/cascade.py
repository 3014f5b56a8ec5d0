"""Multi-scale cascade segmentation network.

Level ℓ (0 = coarsest) runs a backbone ``f_ℓ`` on its pyramid image, with
the previous level's features upsampled and concatenated for ℓ ≥ 1, and a
head ``g_ℓ`` that maps features to a one-channel mask ``M_ℓ``. The
cumulative mask ``M̃_ℓ`` is the full-resolution product of the upsampled
``M_0 .. M_ℓ``: a pixel stays positive only while every level agrees.

Frozen levels are simply parameters with ``requires_grad=False``; their
outputs carry no tape, so stage-wise training needs no explicit detach.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DimensionError
from .imgproc import build_pyramid, ensure_image, single_scale_pyramid
from .models import ModelConfig, PyramidBatch, ScalePyramid
from .ops import ConvParams, bilinear_resize, concat_channels, conv2d, mul, relu, resblock, sigmoid
from .tensor import Tensor, parameter

_log = logging.getLogger(__name__)

RESIDUAL_INIT_SCALE = 0.1


def _conv_params(
    name: str, c_out: int, c_in: int, k: int, rng: np.random.Generator, dtype: np.dtype, scale: float = 1.0
) -> ConvParams:
    """He-normal weights, zero bias."""
    std = scale * np.sqrt(2.0 / (c_in * k * k))
    weight = (rng.standard_normal((c_out, c_in, k, k)) * std).astype(dtype)
    return ConvParams(parameter(weight, f"{name}.weight"), parameter(np.zeros(c_out, dtype=dtype), f"{name}.bias"))


@dataclass(frozen=True, slots=True, eq=False)
class SubNetwork:
    """Backbone (entry conv + residual blocks) and head of one cascade level."""

    level: int
    entry: ConvParams
    blocks: tuple[tuple[ConvParams, ConvParams], ...]
    head_hidden: ConvParams
    head_out: ConvParams

    @classmethod
    def create(
        cls, level: int, in_channels: int, config: ModelConfig, rng: np.random.Generator, dtype: np.dtype
    ) -> "SubNetwork":
        prefix, width = f"level{level}", config.channels
        blocks = tuple(
            (
                _conv_params(f"{prefix}.block{b}.conv1", width, width, 3, rng, dtype),
                _conv_params(f"{prefix}.block{b}.conv2", width, width, 3, rng, dtype, scale=RESIDUAL_INIT_SCALE),
            )
            for b in range(config.resblocks)
        )
        return cls(
            level=level,
            entry=_conv_params(f"{prefix}.entry", width, in_channels, 3, rng, dtype),
            blocks=blocks,
            head_hidden=_conv_params(f"{prefix}.head1", width // 2, width, 3, rng, dtype),
            head_out=_conv_params(f"{prefix}.head2", 1, width // 2, 1, rng, dtype),
        )

    def convs(self) -> list[ConvParams]:
        flat = [self.entry]
        for first, second in self.blocks:
            flat.extend((first, second))
        return flat + [self.head_hidden, self.head_out]

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for conv in self.convs():
            params[conv.weight.name] = conv.weight
            params[conv.bias.name] = conv.bias
        return params

    def backbone(self, x: Tensor) -> Tensor:
        features = relu(conv2d(x, self.entry.weight, self.entry.bias, stride=1, padding=1))
        for first, second in self.blocks:
            features = resblock(features, first, second)
        return features

    def head(self, features: Tensor) -> Tensor:
        hidden = relu(conv2d(features, self.head_hidden.weight, self.head_hidden.bias, stride=1, padding=1))
        return sigmoid(conv2d(hidden, self.head_out.weight, self.head_out.bias, stride=1, padding=0))


class CascadeModel:
    """Ordered sub-networks ℓ = 0..L plus the configuration that shaped them."""

    def __init__(
        self, config: ModelConfig, rng: np.random.Generator | None = None, dtype: np.dtype = np.dtype(np.float32)
    ) -> None:
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        self.subnets = tuple(
            SubNetwork.create(lvl, 3 if lvl == 0 else 3 + config.channels, config, rng, np.dtype(dtype))
            for lvl in range(config.levels)
        )

    @classmethod
    def seeded(cls, config: ModelConfig, seed: int) -> "CascadeModel":
        """Fresh model whose initial weights depend only on *config* and *seed*."""
        return cls(config, np.random.default_rng([seed, 1]))

    @property
    def num_levels(self) -> int:
        return len(self.subnets)

    @property
    def dtype(self) -> np.dtype:
        return self.subnets[0].entry.weight.dtype

    def parameters(self, level: int | None = None) -> dict[str, Tensor]:
        """All parameters in a stable order, or only those of *level*."""
        nets = self.subnets if level is None else (self.subnets[level],)
        params: dict[str, Tensor] = {}
        for net in nets:
            params.update(net.parameters())
        return params

    def set_trainable(self, levels: Iterable[int]) -> None:
        """Enable gradients for *levels* and freeze every other level."""
        active = set(levels)
        for net in self.subnets:
            for param in net.parameters().values():
                param.requires_grad = net.level in active
                param.grad = None

    def zero_grad(self) -> None:
        for param in self.parameters().values():
            param.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(state) != set(params):
            missing, extra = sorted(set(params) - set(state)), sorted(set(state) - set(params))
            raise DimensionError(f"state does not match model (missing={missing}, unexpected={extra})")
        for name, param in params.items():
            if tuple(state[name].shape) != param.shape:
                raise DimensionError(f"{name}: expected shape {param.shape}, got {tuple(state[name].shape)}")
            param.data = np.array(state[name], dtype=param.dtype)

    def astype(self, dtype: np.dtype) -> "CascadeModel":
        """Copy of the model with every parameter cast to *dtype*."""
        clone = CascadeModel(self.config, np.random.default_rng(0), dtype=dtype)
        clone.load_state_dict(self.state_dict())
        return clone

    def pyramid(self, image: np.ndarray) -> ScalePyramid:
        if self.config.single_scale:
            return single_scale_pyramid(image, self.num_levels)
        return build_pyramid(image, self.num_levels, self.config.sigma_step)

    def batch_pyramid(self, images: np.ndarray | Sequence[np.ndarray]) -> PyramidBatch:
        """Build one pyramid per ``H x W x 3`` image and stack the levels as ``N x 3 x h x w``."""
        pyramids = [self.pyramid(ensure_image(np.asarray(img))) for img in images]
        levels = tuple(
            np.stack([p.levels[lvl] for p in pyramids]).transpose(0, 3, 1, 2).astype(self.dtype, copy=False)
            for lvl in range(self.num_levels)
        )
        return PyramidBatch(levels=levels, scale_factors=pyramids[0].scale_factors, full_size=pyramids[0].full_size)


@dataclass(frozen=True, slots=True, eq=False)
class CascadeOutput:
    """Per-level masks ``M_ℓ`` and features ``V_ℓ`` at level resolution, cumulative masks at full resolution."""

    per_level_masks: tuple[Tensor, ...]
    features: tuple[Tensor, ...]
    cumulative_masks: tuple[Tensor, ...]
    upsampled_masks: tuple[Tensor, ...]

    @property
    def final(self) -> Tensor:
        return self.cumulative_masks[-1]


def _as_batch(model: CascadeModel, pyramid: ScalePyramid | PyramidBatch) -> PyramidBatch:
    if isinstance(pyramid, PyramidBatch):
        return pyramid
    levels = tuple(level.transpose(2, 0, 1)[None].astype(model.dtype, copy=False) for level in pyramid.levels)
    return PyramidBatch(levels=levels, scale_factors=pyramid.scale_factors, full_size=pyramid.full_size)


def _check_pyramid(model: CascadeModel, batch: PyramidBatch, up_to_level: int) -> None:
    if not 0 <= up_to_level < model.num_levels:
        raise DimensionError(f"up_to_level {up_to_level} outside model levels 0..{model.num_levels - 1}")
    if len(batch.levels) < up_to_level + 1:
        raise DimensionError(f"pyramid has {len(batch.levels)} levels, forward needs {up_to_level + 1}")
    expected = model.config.scale_factors[: up_to_level + 1]
    if not np.allclose(batch.scale_factors[: up_to_level + 1], expected):
        raise DimensionError(f"pyramid scale factors {batch.scale_factors} do not match model {expected}")


def forward(model: CascadeModel, pyramid: ScalePyramid | PyramidBatch, up_to_level: int | None = None) -> CascadeOutput:
    """Run levels ``0..up_to_level`` and build the cumulative masks at full resolution."""
    batch = _as_batch(model, pyramid)
    last = model.num_levels - 1 if up_to_level is None else up_to_level
    _check_pyramid(model, batch, last)
    full_h, full_w = batch.full_size
    masks: list[Tensor] = []
    features: list[Tensor] = []
    upsampled: list[Tensor] = []
    cumulative: list[Tensor] = []
    for lvl in range(last + 1):
        x = Tensor(batch.levels[lvl])
        if lvl > 0:
            x = concat_channels(x, bilinear_resize(features[-1], x.shape[2], x.shape[3]))
        net = model.subnets[lvl]
        features.append(net.backbone(x))
        masks.append(net.head(features[-1]))
        upsampled.append(bilinear_resize(masks[-1], full_h, full_w))
        cumulative.append(upsampled[-1] if lvl == 0 else mul(cumulative[-1], upsampled[-1]))
    return CascadeOutput(tuple(masks), tuple(features), tuple(cumulative), tuple(upsampled))


def predict_soft(model: CascadeModel, image: np.ndarray) -> np.ndarray:
    """``M̃_L`` for a single ``H x W x 3`` image, as an ``H x W`` array."""
    output = forward(model, model.pyramid(ensure_image(image)))
    return output.final.data[0, 0]


def predict_mask(model: CascadeModel, image: np.ndarray, threshold: float) -> np.ndarray:
    """Binary mask: 1 where the cumulative mask reaches *threshold*."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (predict_soft(model, image) >= threshold).astype(np.uint8)


def count_parameters(model: CascadeModel) -> int:
    return int(sum(param.data.size for param in model.parameters().values()))


@dataclass(frozen=True, slots=True, eq=False)
class CascadePredictor:
    """``MaskPredictor`` view of a trained model."""

    model: CascadeModel

    def predict_soft(self, image: np.ndarray) -> np.ndarray:
        return predict_soft(self.model, image)
