"""Differentiable kernels: convolution, residual block, resize, concat, sigmoid, BCE.

Every op takes and returns ``graphseg.tensor.Tensor`` objects in
``N x C x H x W`` layout and raises ``DimensionError`` on shape mismatches.
There is no general broadcasting: elementwise ops require equal shapes.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .constants import BCE_EPS
from .exceptions import DimensionError
from .tensor import Tensor, as_tensor, make_result


class ConvParams(NamedTuple):
    """Weight ``Cout x Cin x k x k`` and bias ``Cout`` of one convolution."""

    weight: Tensor
    bias: Tensor


def _require_4d(x: Tensor, what: str) -> None:
    if x.data.ndim != 4:
        raise DimensionError(f"{what} must be N x C x H x W, got shape {x.shape}")


def _check_conv_shapes(x: Tensor, weight: Tensor, bias: Tensor) -> None:
    _require_4d(x, "conv2d input")
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3] or weight.shape[2] % 2 == 0:
        raise DimensionError(f"conv2d weight must be Cout x Cin x k x k with odd k, got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d input has {x.shape[1]} channels, weight expects {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv2d bias must have shape ({weight.shape[0]},), got {bias.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate *x* with *weight*; zero padding on every spatial side."""
    _check_conv_shapes(x, weight, bias)
    k = weight.shape[2]
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,ocij->nohw", windows, weight.data, optimize=True)
    out = out + bias.data[None, :, None, None]

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_w = np.einsum("nchwij,nohw->ocij", windows, grad, optimize=True)
        grad_b = grad.sum(axis=(0, 2, 3))
        grad_x = _conv_input_grad(grad, weight.data, padded.shape, stride, padding)
        return grad_x, grad_w, grad_b

    return make_result(out, (x, weight, bias), backward)


def _conv_input_grad(
    grad: np.ndarray, weight: np.ndarray, padded_shape: tuple[int, ...], stride: int, padding: int
) -> np.ndarray:
    """Scatter the output gradient back through each kernel tap."""
    k = weight.shape[2]
    out_h, out_w = grad.shape[2], grad.shape[3]
    grad_padded = np.zeros(padded_shape, dtype=grad.dtype)
    for i in range(k):
        for j in range(k):
            contribution = np.einsum("nohw,oc->nchw", grad, weight[:, :, i, j], optimize=True)
            grad_padded[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += contribution
    height, width = padded_shape[2] - 2 * padding, padded_shape[3] - 2 * padding
    return grad_padded[:, :, padding : padding + height, padding : padding + width]


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return make_result(np.where(active, x.data, 0).astype(x.dtype), (x,), lambda g: (g * active,))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; gradient to each side is masked by the other side."""
    if a.shape != b.shape:
        raise DimensionError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
    return make_result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def mean(x: Tensor) -> Tensor:
    scale = 1.0 / x.data.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return make_result(out, (x,), lambda g: (np.full_like(x.data, g * scale),))


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function (no overflow for large ``|x|``)."""
    out = expit(x.data)
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),))


def resblock(x: Tensor, first: ConvParams, second: ConvParams) -> Tensor:
    """Basic residual block without normalization: ``relu(conv(relu(conv(x))) + x)``."""
    _require_4d(x, "resblock input")
    if first.weight.shape[1] != x.shape[1] or second.weight.shape[0] != x.shape[1]:
        raise DimensionError(f"resblock expects {first.weight.shape[1]} channels, got {x.shape[1]}")
    hidden = relu(conv2d(x, first.weight, first.bias, stride=1, padding=1))
    return relu(add(conv2d(hidden, second.weight, second.bias, stride=1, padding=1), x))


@lru_cache(maxsize=256)
def _interpolation_matrix_f64(in_size: int, out_size: int) -> np.ndarray:
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    src = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lower = np.floor(src).astype(int)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = src - lower
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    matrix.setflags(write=False)
    return matrix


def interpolation_matrix(in_size: int, out_size: int, dtype: np.dtype = np.dtype(np.float64)) -> np.ndarray:
    """Linear map of 1-D half-pixel bilinear resampling, shape ``out_size x in_size``.

    Source coordinate of output ``i`` is ``(i + 0.5) * in/out - 0.5``, clamped
    to the border; rows sum to 1 so constants are preserved.
    """
    if in_size < 1 or out_size < 1:
        raise DimensionError(f"resize sizes must be >= 1, got {in_size} -> {out_size}")
    return _interpolation_matrix_f64(in_size, out_size).astype(dtype, copy=False)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize the two spatial axes with half-pixel-centre bilinear interpolation."""
    _require_4d(x, "bilinear_resize input")
    height, width = x.shape[2], x.shape[3]
    if (height, width) == (out_h, out_w):
        return make_result(x.data, (x,), lambda g: (g,))
    rows = interpolation_matrix(height, out_h, x.dtype)
    cols = interpolation_matrix(width, out_w, x.dtype)
    out = rows @ x.data @ cols.T
    return make_result(out, (x,), lambda g: (rows.T @ g @ cols,))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack *a* then *b* along the channel axis."""
    _require_4d(a, "concat input")
    _require_4d(b, "concat input")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise DimensionError(f"concat needs matching N, H, W, got {a.shape} and {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return make_result(out, (a, b), lambda g: (g[:, :split], g[:, split:]))


def _per_sample(weight: float | np.ndarray, batch: int, ndim: int, dtype: np.dtype) -> np.ndarray:
    """Broadcast a scalar or per-sample weight vector against an ``ndim`` array."""
    values = np.asarray(weight, dtype=dtype)
    if values.ndim == 0:
        return values
    if values.shape != (batch,):
        raise DimensionError(f"per-sample weights need shape ({batch},), got {values.shape}")
    return values.reshape((batch,) + (1,) * (ndim - 1))


def weighted_bce(
    pred: Tensor,
    target: Tensor | np.ndarray,
    pos_weight: float | np.ndarray,
    neg_weight: float | np.ndarray,
) -> Tensor:
    """Mean weighted binary cross-entropy.

    ``-(1/size) * sum(pos_weight * y * log p + neg_weight * (1 - y) * log(1 - p))``
    with ``p`` clamped to ``[1e-7, 1 - 1e-7]``. Weights may be scalars or one
    value per sample (first axis), which makes the batch loss the mean of
    per-image losses.
    """
    target_t = as_tensor(target)
    if pred.shape != target_t.shape:
        raise DimensionError(f"weighted_bce needs equal shapes, got {pred.shape} and {target_t.shape}")
    y = target_t.data.astype(pred.dtype, copy=False)
    batch = pred.shape[0] if pred.data.ndim else 1
    w_pos = _per_sample(pos_weight, batch, pred.data.ndim, pred.dtype)
    w_neg = _per_sample(neg_weight, batch, pred.data.ndim, pred.dtype)
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (pred.data >= BCE_EPS) & (pred.data <= 1.0 - BCE_EPS)
    size = pred.data.size
    total = w_pos * y * np.log(p) + w_neg * (1.0 - y) * np.log1p(-p)
    out = np.asarray(-total.sum() / size, dtype=pred.dtype)

    def backward(grad: np.ndarray) -> tuple[np.ndarray, None]:
        local = -(w_pos * y / p - w_neg * (1.0 - y) / (1.0 - p)) / size
        return (grad * local * inside).astype(pred.dtype, copy=False), None

    return make_result(out, (pred, target_t), backward)
