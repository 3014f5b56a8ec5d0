"""Dense tensor with reverse-mode automatic differentiation.

A ``Tensor`` wraps a ``numpy`` array. Operations in ``graphseg.ops`` build a
tape implicitly: every result that depends on a tensor with
``requires_grad=True`` remembers its parents and a closure mapping the
upstream gradient to one gradient per parent. ``backward`` walks the tape in
reverse topological order and accumulates (sums) gradients, so a tensor
consumed twice receives the sum of both contributions.

Results computed only from tensors with ``requires_grad=False`` carry no
tape at all; this is how frozen cascade levels are detached.

Axis order for activations is ``N x C x H x W`` everywhere. Training math
runs in float32; gradient checks pass float64 arrays and every kernel keeps
the dtype of its inputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .exceptions import ContractError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """N-dimensional float array that can participate in the gradient tape.

    Invariants: ``grad`` (when present) has the shape of ``data``; after
    ``backward`` every ``requires_grad`` leaf reachable from the output holds
    a populated ``grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray | float | Sequence[float],
        *,
        requires_grad: bool = False,
        name: str = "",
        _parents: tuple["Tensor", ...] = (),
        _backward: BackwardFn | None = None,
    ) -> None:
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float32)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Return a tape-free tensor sharing this tensor's data."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate gradients from this tensor to every reachable leaf.

        ``grad`` defaults to ones for a single-element tensor; passing no
        seed for a larger tensor is a contract violation.
        """
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ContractError("backward() needs an explicit seed for non-scalar tensors")
            grad = np.ones_like(self.data)
        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(_topological_order(self)):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node.is_leaf:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            _push_parent_grads(node, node_grad, pending)


def _push_parent_grads(node: Tensor, node_grad: np.ndarray, pending: dict[int, np.ndarray]) -> None:
    """Run *node*'s backward closure and accumulate into *pending* per parent."""
    assert node._backward is not None
    for parent, parent_grad in zip(node._parents, node._backward(node_grad)):
        if parent_grad is None or not parent.requires_grad:
            continue
        key = id(parent)
        pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


def _topological_order(root: Tensor) -> list[Tensor]:
    """Return the tape nodes reachable from *root*, parents before children."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents if p.requires_grad and id(p) not in visited)
    return order


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap *data* as an op output, recording the tape only when a parent needs it."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def as_tensor(value: "Tensor | np.ndarray | float") -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value))


def parameter(data: np.ndarray, name: str = "") -> Tensor:
    """Create a trainable leaf."""
    return Tensor(data, requires_grad=True, name=name)
