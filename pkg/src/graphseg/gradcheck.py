"""Central finite-difference checks of every differentiable op and a tiny cascade.

All checks run in float64. A non-scalar output is reduced to a scalar by a
fixed random projection so every output element contributes.
"""

from __future__ import annotations

import logging
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .cascade import CascadeModel, forward
from .constants import GRADCHECK_STEP, GRADCHECK_TOLERANCE
from .exceptions import NumericalCheckError
from .models import ModelConfig
from .ops import (
    ConvParams,
    add,
    bilinear_resize,
    concat_channels,
    conv2d,
    mean,
    mul,
    relu,
    resblock,
    sigmoid,
    weighted_bce,
)
from .tensor import Tensor, parameter

_log = logging.getLogger(__name__)

Builder = Callable[[Sequence[Tensor]], Tensor]


class GradCheckResult(NamedTuple):
    name: str
    max_error: float
    passed: bool


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest per-element ``|a - n| / max(1e-6, |a| + |n|)``."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1e-6, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient(objective: Callable[[], float], array: np.ndarray, step: float = GRADCHECK_STEP) -> np.ndarray:
    """Central differences of *objective* with respect to *array*, perturbed in place."""
    grad = np.zeros_like(array)
    flat, flat_grad = array.reshape(-1), grad.reshape(-1)
    for idx in range(flat.size):
        original = flat[idx]
        flat[idx] = original + step
        plus = objective()
        flat[idx] = original - step
        minus = objective()
        flat[idx] = original
        flat_grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def check_gradients(
    name: str,
    build: Builder,
    tensors: Sequence[Tensor],
    rng: np.random.Generator,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> GradCheckResult:
    """Compare ``backward`` of ``build(tensors)`` with finite differences for every grad-requiring input."""
    sample_out = build(tensors)
    projection = rng.standard_normal(sample_out.shape) if sample_out.data.size > 1 else np.ones(sample_out.shape)

    def objective() -> float:
        return float(np.sum(build(tensors).data * projection))

    for tensor in tensors:
        tensor.grad = None
    build(tensors).backward(projection)
    worst = 0.0
    for tensor in tensors:
        if not tensor.requires_grad:
            continue
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        worst = max(worst, relative_error(analytic, numeric_gradient(objective, tensor.data)))
    result = GradCheckResult(name, worst, worst < tolerance)
    _log.info("gradcheck %-24s max rel. error %.2e %s", name, worst, "ok" if result.passed else "FAILED")
    return result


def _leaf(rng: np.random.Generator, *shape: int, low: float = -1.0, high: float = 1.0) -> Tensor:
    return parameter(rng.uniform(low, high, size=shape).astype(np.float64))


def _conv(rng: np.random.Generator, c_out: int, c_in: int, k: int) -> ConvParams:
    return ConvParams(_leaf(rng, c_out, c_in, k, k, low=-0.5, high=0.5), _leaf(rng, c_out, low=-0.1, high=0.1))


def _op_cases(rng: np.random.Generator) -> list[tuple[str, Builder, list[Tensor]]]:
    first, second = _conv(rng, 2, 2, 3), _conv(rng, 2, 2, 3)
    bce_target = Tensor((rng.random((2, 1, 4, 4)) > 0.5).astype(np.float64))
    return [
        ("conv2d", lambda t: conv2d(t[0], t[1], t[2], stride=1, padding=1), [_leaf(rng, 2, 3, 8, 8), *_conv(rng, 4, 3, 3)]),
        ("conv2d_stride2", lambda t: conv2d(t[0], t[1], t[2], stride=2, padding=1), [_leaf(rng, 1, 2, 7, 7), *_conv(rng, 3, 2, 3)]),
        ("conv2d_1x1", lambda t: conv2d(t[0], t[1], t[2]), [_leaf(rng, 1, 3, 5, 5), *_conv(rng, 2, 3, 1)]),
        ("relu", lambda t: relu(t[0]), [_leaf(rng, 2, 3, 4, 4)]),
        ("add", lambda t: add(t[0], t[1]), [_leaf(rng, 1, 2, 3, 3), _leaf(rng, 1, 2, 3, 3)]),
        ("mul", lambda t: mul(t[0], t[1]), [_leaf(rng, 1, 2, 3, 3), _leaf(rng, 1, 2, 3, 3)]),
        ("mean", lambda t: mean(t[0]), [_leaf(rng, 2, 2, 3, 3)]),
        ("sigmoid", lambda t: sigmoid(t[0]), [_leaf(rng, 2, 1, 4, 4, low=-4.0, high=4.0)]),
        ("resblock", lambda t: resblock(t[0], ConvParams(t[1], t[2]), ConvParams(t[3], t[4])), [_leaf(rng, 1, 2, 5, 5), *first, *second]),
        ("bilinear_up", lambda t: bilinear_resize(t[0], 7, 9), [_leaf(rng, 1, 2, 4, 5)]),
        ("bilinear_down", lambda t: bilinear_resize(t[0], 3, 2), [_leaf(rng, 1, 2, 8, 5)]),
        ("concat_channels", lambda t: concat_channels(t[0], t[1]), [_leaf(rng, 1, 1, 3, 3), _leaf(rng, 1, 2, 3, 3)]),
        (
            "weighted_bce",
            lambda t: weighted_bce(t[0], bce_target, np.array([4.0, 2.0]), np.array([4.0 / 3.0, 2.0])),
            [_leaf(rng, 2, 1, 4, 4, low=0.05, high=0.95)],
        ),
        ("shared_consumer", lambda t: add(mul(t[0], t[0]), t[0]), [_leaf(rng, 1, 1, 3, 3)]),
    ]


def tiny_cascade(rng: np.random.Generator, levels: int = 2, size: int = 16) -> tuple[CascadeModel, np.ndarray]:
    """A float64 cascade with two channels and one residual block, plus an input image."""
    config = ModelConfig(levels=levels, channels=2, resblocks=1, input_size=size)
    model = CascadeModel(config, rng, dtype=np.dtype(np.float64))
    for param in model.parameters().values():
        param.data += rng.uniform(-0.05, 0.05, size=param.shape)
    return model, rng.random((size, size, 3))


def _cascade_case(rng: np.random.Generator) -> tuple[str, Builder, list[Tensor]]:
    model, image = tiny_cascade(rng)
    batch = model.batch_pyramid([image])
    target = Tensor((rng.random((1, 1, 16, 16)) > 0.7).astype(np.float64))
    params = list(model.parameters().values())
    model.set_trainable(range(model.num_levels))

    def build(_: Sequence[Tensor]) -> Tensor:
        return weighted_bce(forward(model, batch).final, target, 3.0, 1.5)

    return "cascade_2level", build, params


def run_suite(seed: int = 0, tolerance: float = GRADCHECK_TOLERANCE) -> list[GradCheckResult]:
    """Check every op and the composed two-level cascade; return one result per case."""
    rng = np.random.default_rng(seed)
    cases = _op_cases(rng) + [_cascade_case(rng)]
    return [check_gradients(name, build, tensors, rng, tolerance) for name, build, tensors in cases]


def assert_suite(results: Sequence[GradCheckResult]) -> None:
    failed = [r for r in results if not r.passed]
    if failed:
        details = ", ".join(f"{r.name} ({r.max_error:.2e})" for r in failed)
        raise NumericalCheckError(f"gradient check failed for {details}")
