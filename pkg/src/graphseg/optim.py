"""Adam optimizer with bias-corrected moments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .constants import DEFAULT_ADAM_EPS, DEFAULT_BETAS, DEFAULT_LEARNING_RATE
from .exceptions import ContractError
from .tensor import Tensor


@dataclass(slots=True)
class AdamState:
    """First/second moment buffers per parameter name plus the step counter.

    Mutable on purpose: ``adam_step`` advances ``step`` by exactly one and
    updates the buffers in place.
    """

    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = DEFAULT_BETAS[0]
    beta2: float = DEFAULT_BETAS[1]
    epsilon: float = DEFAULT_ADAM_EPS
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_parameters(cls, params: Mapping[str, Tensor], **hyper: float) -> "AdamState":
        state = cls(**hyper)
        for name, param in params.items():
            state.first_moment[name] = np.zeros_like(param.data)
            state.second_moment[name] = np.zeros_like(param.data)
        return state


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamState,
) -> AdamState:
    """Apply one Adam update to every parameter in *params*; return *state*.

    Every parameter must have a gradient in *grads*; a missing or ``None``
    entry raises ``ContractError`` before anything is modified.
    """
    missing = [name for name in params if grads.get(name) is None]
    if missing:
        raise ContractError(f"adam_step: no gradient for {', '.join(sorted(missing))}")
    state.step += 1
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(param.data))
        v = state.second_moment.setdefault(name, np.zeros_like(param.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        update = state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        param.data -= update.astype(param.dtype, copy=False)
    return state


def collect_grads(params: Mapping[str, Tensor]) -> dict[str, np.ndarray | None]:
    return {name: param.grad for name, param in params.items()}
