"""SGD and Adam over a ParamStore, with optional global-norm clipping."""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Mapping
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np

from .errors import GradientError
from .params import ParamStore

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)


class OptimizerKind(StrEnum):
    SGD = "sgd"
    ADAM = "adam"


def global_grad_norm(store: ParamStore) -> float:
    total = 0.0
    for _, tensor in store.items():
        if tensor.grad is not None:
            total += float(np.sum(tensor.grad * tensor.grad))
    return math.sqrt(total)


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; return the norm before clipping."""
    norm = global_grad_norm(store)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, tensor in store.items():
            if tensor.grad is not None:
                tensor.grad = tensor.grad * scale
    return norm


class Optimizer(ABC):
    """Base class: holds the learning rate, clipping threshold and any per-parameter state."""

    kind: OptimizerKind

    def __init__(self, lr: float, clip_norm: float = 0.0) -> None:
        self.lr = lr
        self.clip_norm = clip_norm

    @abstractmethod
    def update(self, name: str, values: NDArray[np.float64], grad: NDArray[np.float64]) -> None:
        """Apply one in-place step to ``values``."""

    def begin_step(self) -> None:
        """Hook called once per step before the per-parameter updates."""

    def state(self) -> dict[str, NDArray[np.float64]]:
        return {}

    def load_state(self, state: Mapping[str, NDArray[np.float64]]) -> None:
        if state:
            raise GradientError(f"{self.kind} optimizer carries no state, got {sorted(state)[:3]}")


class SGD(Optimizer):
    kind = OptimizerKind.SGD

    def update(self, name: str, values: NDArray[np.float64], grad: NDArray[np.float64]) -> None:
        values -= self.lr * grad


class Adam(Optimizer):
    kind = OptimizerKind.ADAM

    def __init__(
        self,
        lr: float,
        clip_norm: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        super().__init__(lr, clip_norm)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, NDArray[np.float64]] = {}
        self._v: dict[str, NDArray[np.float64]] = {}

    def begin_step(self) -> None:
        self.step_count += 1

    def update(self, name: str, values: NDArray[np.float64], grad: NDArray[np.float64]) -> None:
        m = self._m.get(name, np.zeros_like(values))
        v = self._v.get(name, np.zeros_like(values))
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self._m[name] = m
        self._v[name] = v
        m_hat = m / (1.0 - self.beta1**self.step_count)
        v_hat = v / (1.0 - self.beta2**self.step_count)
        values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> dict[str, NDArray[np.float64]]:
        state: dict[str, NDArray[np.float64]] = {"t": np.asarray(float(self.step_count))}
        state.update({f"m/{name}": m.copy() for name, m in self._m.items()})
        state.update({f"v/{name}": v.copy() for name, v in self._v.items()})
        return state

    def load_state(self, state: Mapping[str, NDArray[np.float64]]) -> None:
        self.step_count = int(state.get("t", np.asarray(0.0)))
        self._m = {key[2:]: np.array(value) for key, value in state.items() if key.startswith("m/")}
        self._v = {key[2:]: np.array(value) for key, value in state.items() if key.startswith("v/")}


def make_optimizer(kind: OptimizerKind | str, lr: float, clip_norm: float = 0.0) -> Optimizer:
    match OptimizerKind(kind):
        case OptimizerKind.SGD:
            return SGD(lr, clip_norm)
        case OptimizerKind.ADAM:
            return Adam(lr, clip_norm)


def optimizer_step(store: ParamStore, optimizer: Optimizer) -> float:
    """
    Apply one update to every parameter, then zero the gradients.

    Returns the global gradient norm measured before clipping.
    """
    for name, tensor in store.items():
        if tensor.grad is None:
            raise GradientError(f"parameter {name!r} has no gradient; call zero_grad() before backward()")
    norm = clip_grad_norm(store, optimizer.clip_norm)
    optimizer.begin_step()
    for name, tensor in store.items():
        assert tensor.grad is not None
        optimizer.update(name, tensor.values, tensor.grad)
    store.zero_grad()
    return norm
