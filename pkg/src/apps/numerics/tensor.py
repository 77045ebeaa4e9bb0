"""
Dense float64 tensors and the reverse-mode gradient graph.

A tensor produced by a primitive records a ``Node`` (the op kind, its inputs
and a closure mapping the output gradient to input gradients) whenever
gradients are enabled and any input requires them. ``backward`` walks that
graph once, in reverse topological order, and sums gradients into the leaf
tensors that require them. Intermediate gradients never touch ``.grad``.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from .errors import GradientError, NonFiniteError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

BackwardFn = Callable[["NDArray[np.float64]"], Sequence["NDArray[np.float64] | None"]]

# Graph recording is a per-thread switch so evaluation workers can run frozen
# episodes while another thread trains.
_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Return True when new ops on this thread record graph nodes."""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Suppress graph construction on the current thread."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


@dataclass(slots=True, eq=False)
class Node:
    """One recorded primitive application."""

    op_kind: str
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tensor:
    """A dense float64 array with an optional gradient and graph node."""

    __slots__ = ("grad", "node", "requires_grad", "values")

    def __init__(self, values: ArrayLike, *, requires_grad: bool = False, node: Node | None = None) -> None:
        self.values: NDArray[np.float64] = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: NDArray[np.float64] | None = None
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        """Return the value of a single-element tensor as a float."""
        return float(self.values.item())

    def numpy(self) -> NDArray[np.float64]:
        """Return a copy of the values."""
        return self.values.copy()

    def detach(self) -> Tensor:
        """Return a tensor sharing the values but cut off from the graph."""
        return Tensor(self.values)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar over the primitives in ``ops``.

    def __add__(self, other: Tensor | float) -> Tensor:
        from . import ops

        return ops.add(self, ops.as_tensor(other))

    def __radd__(self, other: float) -> Tensor:
        from . import ops

        return ops.add(ops.as_tensor(other), self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from . import ops

        return ops.sub(self, ops.as_tensor(other))

    def __rsub__(self, other: float) -> Tensor:
        from . import ops

        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from . import ops

        return ops.mul(self, ops.as_tensor(other))

    def __rmul__(self, other: float) -> Tensor:
        from . import ops

        return ops.mul(ops.as_tensor(other), self)

    def __neg__(self) -> Tensor:
        from . import ops

        return ops.mul(ops.as_tensor(-1.0), self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from . import ops

        return ops.matmul(self, other)


def make_result(
    op_kind: str, values: NDArray[np.float64], inputs: tuple[Tensor, ...], backward_fn: BackwardFn
) -> Tensor:
    """Wrap a primitive's output, attaching a node when gradients are needed."""
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(op_kind)
    track = is_grad_enabled() and any(tensor.requires_grad for tensor in inputs)
    if not track:
        return Tensor(values)
    return Tensor(values, requires_grad=True, node=Node(op_kind, inputs, backward_fn))


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            stack.extend((parent, False) for parent in tensor.node.inputs if id(parent) not in visited)
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf that requires gradients."""
    if loss.shape != ():
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("loss is not connected to any tensor that requires gradients")

    pending: dict[int, Any] = {id(loss): np.ones((), dtype=np.float64)}
    for tensor in reversed(_topological_order(loss)):
        grad = pending.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.node is None:
            if tensor.requires_grad:
                tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            continue
        input_grads = tensor.node.backward(grad)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads, strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(parent_grad)):
                raise NonFiniteError(tensor.node.op_kind, where="gradient")
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
