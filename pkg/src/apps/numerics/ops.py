"""
Differentiable primitives.

Shape rules, per op kind:

- ``matmul``: operands of rank 1 or 2 with ``a.shape[-1] == b.shape[0]``.
- ``add`` / ``sub`` / ``mul``: identical shapes, or either operand of shape ``()``.
- ``concat``: rank >= 1, identical leading dims, joined along the last axis.
- ``stack``: identical shapes, stacked along a new leading axis.
- ``tanh`` / ``sigmoid``: any shape.
- ``softmax`` / ``log_softmax``: rank >= 1, normalised over the last axis.
- ``embedding``: a rank-2 table and an integer row index.
- ``slice``: rank >= 1, ``0 <= start < stop <= shape[-1]`` on the last axis.
- ``sum`` / ``mean``: any shape, reduced to ``()``.
- ``cross_entropy``: rank-1 logits and an integer target in range.
- ``mse``: identical shapes.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from enum import StrEnum
from typing import TYPE_CHECKING, Any

import numpy as np

from .errors import ShapeError
from .tensor import BackwardFn, Tensor, make_result

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    Array = NDArray[np.float64]


class OpKind(StrEnum):
    """Primitive op kinds understood by ``apply_primitive``."""

    MATMUL = "matmul"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    CONCAT = "concat"
    STACK = "stack"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    LOG_SOFTMAX = "log_softmax"
    EMBEDDING = "embedding"
    SLICE = "slice"
    SUM = "sum"
    MEAN = "mean"
    CROSS_ENTROPY = "cross_entropy"
    MSE = "mse"


Forward = Callable[..., tuple["Array", BackwardFn]]


def as_tensor(value: Tensor | ArrayLike) -> Tensor:
    """Wrap plain numbers and arrays as constant tensors."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _shapes(arrays: Sequence[Array]) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(array.shape) for array in arrays)


def _reduce_to(grad: Array, shape: tuple[int, ...]) -> Array:
    return np.asarray(grad.sum()) if shape == () and grad.shape != () else grad


def _check_elementwise(op_kind: OpKind, a: Array, b: Array) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(op_kind, _shapes((a, b)))


def _log_softmax_values(x: Array) -> Array:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


# ─────────────────────────────── Forward rules ───────────────────────────────


def _matmul(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(OpKind.MATMUL, _shapes((a, b)))
    out = a @ b

    def grads(g: Array) -> tuple[Array, Array]:
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.T, a.T @ g
        if a.ndim == 2:
            return np.outer(g, b), a.T @ g
        if b.ndim == 2:
            return b @ g, np.outer(a, g)
        return g * b, g * a

    return out, grads


def _add(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    _check_elementwise(OpKind.ADD, a, b)
    return a + b, lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape))


def _sub(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    _check_elementwise(OpKind.SUB, a, b)
    return a - b, lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape))


def _mul(a: Array, b: Array) -> tuple[Array, BackwardFn]:
    _check_elementwise(OpKind.MUL, a, b)
    return a * b, lambda g: (_reduce_to(g * b, a.shape), _reduce_to(g * a, b.shape))


def _concat(*arrays: Array) -> tuple[Array, BackwardFn]:
    if not arrays or any(array.ndim == 0 for array in arrays):
        raise ShapeError(OpKind.CONCAT, _shapes(arrays), "operands must have rank >= 1")
    if len({array.shape[:-1] for array in arrays}) != 1:
        raise ShapeError(OpKind.CONCAT, _shapes(arrays), "leading dimensions differ")
    out = np.concatenate(arrays, axis=-1)
    cuts = np.cumsum([array.shape[-1] for array in arrays])[:-1]
    return out, lambda g: np.split(g, cuts, axis=-1)


def _stack(*arrays: Array) -> tuple[Array, BackwardFn]:
    if not arrays or len({array.shape for array in arrays}) != 1:
        raise ShapeError(OpKind.STACK, _shapes(arrays))
    return np.stack(arrays), lambda g: list(g)


def _tanh(x: Array) -> tuple[Array, BackwardFn]:
    out = np.tanh(x)
    return out, lambda g: (g * (1.0 - out * out),)


def _sigmoid(x: Array) -> tuple[Array, BackwardFn]:
    out = 0.5 * (1.0 + np.tanh(0.5 * x))
    return out, lambda g: (g * out * (1.0 - out),)


def _softmax(x: Array) -> tuple[Array, BackwardFn]:
    if x.ndim == 0:
        raise ShapeError(OpKind.SOFTMAX, _shapes((x,)))
    out = np.exp(_log_softmax_values(x))
    return out, lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


def _log_softmax(x: Array) -> tuple[Array, BackwardFn]:
    if x.ndim == 0:
        raise ShapeError(OpKind.LOG_SOFTMAX, _shapes((x,)))
    out = _log_softmax_values(x)
    return out, lambda g: (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)


def _embedding(table: Array, *, index: int) -> tuple[Array, BackwardFn]:
    if table.ndim != 2 or not 0 <= index < table.shape[0]:
        raise ShapeError(OpKind.EMBEDDING, _shapes((table,)), f"row {index}")

    def grads(g: Array) -> tuple[Array]:
        full = np.zeros_like(table)
        full[index] = g
        return (full,)

    return table[index].copy(), grads


def _slice(x: Array, *, start: int, stop: int) -> tuple[Array, BackwardFn]:
    if x.ndim == 0 or not 0 <= start < stop <= x.shape[-1]:
        raise ShapeError(OpKind.SLICE, _shapes((x,)), f"[{start}:{stop}]")

    def grads(g: Array) -> tuple[Array]:
        full = np.zeros_like(x)
        full[..., start:stop] = g
        return (full,)

    return x[..., start:stop].copy(), grads


def _sum(x: Array) -> tuple[Array, BackwardFn]:
    return np.asarray(x.sum()), lambda g: (np.full(x.shape, g),)


def _mean(x: Array) -> tuple[Array, BackwardFn]:
    return np.asarray(x.mean()), lambda g: (np.full(x.shape, g / x.size),)


def _cross_entropy(logits: Array, *, target: int) -> tuple[Array, BackwardFn]:
    if logits.ndim != 1:
        raise ShapeError(OpKind.CROSS_ENTROPY, _shapes((logits,)), "logits must be a vector")
    if not 0 <= target < logits.shape[0]:
        raise ShapeError(OpKind.CROSS_ENTROPY, _shapes((logits,)), f"target {target} out of range")
    log_probs = _log_softmax_values(logits)

    def grads(g: Array) -> tuple[Array]:
        grad = np.exp(log_probs)
        grad[target] -= 1.0
        return (g * grad,)

    return np.asarray(-log_probs[target]), grads


def _mse(pred: Array, target: Array) -> tuple[Array, BackwardFn]:
    if pred.shape != target.shape:
        raise ShapeError(OpKind.MSE, _shapes((pred, target)))
    diff = pred - target
    scale = 2.0 / diff.size

    def grads(g: Array) -> tuple[Array, Array]:
        grad = g * scale * diff
        return grad, -grad

    return np.asarray((diff * diff).mean()), grads


_RULES: dict[OpKind, Forward] = {
    OpKind.MATMUL: _matmul,
    OpKind.ADD: _add,
    OpKind.SUB: _sub,
    OpKind.MUL: _mul,
    OpKind.CONCAT: _concat,
    OpKind.STACK: _stack,
    OpKind.TANH: _tanh,
    OpKind.SIGMOID: _sigmoid,
    OpKind.SOFTMAX: _softmax,
    OpKind.LOG_SOFTMAX: _log_softmax,
    OpKind.EMBEDDING: _embedding,
    OpKind.SLICE: _slice,
    OpKind.SUM: _sum,
    OpKind.MEAN: _mean,
    OpKind.CROSS_ENTROPY: _cross_entropy,
    OpKind.MSE: _mse,
}


def apply_primitive(op_kind: OpKind | str, *inputs: Tensor, **attrs: Any) -> Tensor:
    """Evaluate one primitive and record it in the graph when gradients are required."""
    kind = OpKind(op_kind)
    values, grads = _RULES[kind](*(tensor.values for tensor in inputs), **attrs)
    return make_result(kind, np.asarray(values, dtype=np.float64), inputs, grads)


# ──────────────────────────────── Shorthands ─────────────────────────────────


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive(OpKind.MATMUL, a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive(OpKind.ADD, a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive(OpKind.SUB, a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return apply_primitive(OpKind.MUL, a, b)


def concat(*tensors: Tensor) -> Tensor:
    return apply_primitive(OpKind.CONCAT, *tensors)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    return apply_primitive(OpKind.STACK, *tensors)


def tanh(x: Tensor) -> Tensor:
    return apply_primitive(OpKind.TANH, x)


def sigmoid(x: Tensor) -> Tensor:
    return apply_primitive(OpKind.SIGMOID, x)


def softmax(x: Tensor) -> Tensor:
    return apply_primitive(OpKind.SOFTMAX, x)


def log_softmax(x: Tensor) -> Tensor:
    return apply_primitive(OpKind.LOG_SOFTMAX, x)


def embedding(table: Tensor, index: int) -> Tensor:
    return apply_primitive(OpKind.EMBEDDING, table, index=int(index))


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    return apply_primitive(OpKind.SLICE, x, start=start, stop=stop)


def total(x: Tensor) -> Tensor:
    return apply_primitive(OpKind.SUM, x)


def mean(x: Tensor) -> Tensor:
    return apply_primitive(OpKind.MEAN, x)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Return ``-log softmax(logits)[target]``."""
    return apply_primitive(OpKind.CROSS_ENTROPY, logits, target=int(target))


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Return the mean of squared componentwise differences."""
    return apply_primitive(OpKind.MSE, pred, target)


def pick(x: Tensor, index: int) -> Tensor:
    """Select one entry of a vector as a scalar tensor."""
    return apply_primitive(OpKind.SUM, slice_last(x, index, index + 1))


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))
