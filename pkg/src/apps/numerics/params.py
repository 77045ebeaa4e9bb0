"""Named, seeded parameter storage."""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from typing import TYPE_CHECKING

import numpy as np

from .errors import NumericsError, ShapeError
from .tensor import Tensor

if TYPE_CHECKING:
    from numpy.typing import NDArray


class ParamStore:
    """
    Ordered map of parameter name -> trainable tensor.

    Iteration follows insertion order, so optimizer sweeps and checkpoint
    bodies are deterministic. Weight matrices are initialised
    uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases start at zero.
    """

    def __init__(self, seed: int) -> None:
        self.rng_seed = int(seed)
        self._rng = np.random.default_rng(self.rng_seed)
        self._entries: dict[str, Tensor] = {}

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        yield from self._entries.items()

    def add(self, name: str, values: NDArray[np.float64]) -> Tensor:
        """Register a parameter under a unique name."""
        if name in self._entries:
            raise NumericsError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.array(values, dtype=np.float64), requires_grad=True)
        self._entries[name] = tensor
        return tensor

    def add_weight(self, name: str, rows: int, cols: int) -> Tensor:
        """Register a (rows, cols) matrix with seeded uniform fan-in/fan-out initialisation."""
        bound = math.sqrt(6.0 / (rows + cols))
        return self.add(name, self._rng.uniform(-bound, bound, size=(rows, cols)))

    def add_bias(self, name: str, size: int) -> Tensor:
        return self.add(name, np.zeros(size, dtype=np.float64))

    def zero_grad(self) -> None:
        """Reset every gradient to an explicit zero array."""
        for tensor in self._entries.values():
            tensor.grad = np.zeros_like(tensor.values)

    def num_parameters(self) -> int:
        return sum(tensor.size for tensor in self._entries.values())

    def state(self) -> dict[str, NDArray[np.float64]]:
        """Copy out all values, in insertion order."""
        return {name: tensor.values.copy() for name, tensor in self._entries.items()}

    def load_state(self, state: Mapping[str, NDArray[np.float64]]) -> None:
        """Overwrite values in place; names and shapes must match exactly."""
        if list(state) != list(self._entries):
            missing = sorted(set(self._entries) ^ set(state))
            raise NumericsError(f"parameter names do not match: {missing[:5]}")
        for name, values in state.items():
            tensor = self._entries[name]
            if tuple(np.shape(values)) != tensor.shape:
                raise ShapeError("load_state", (tensor.shape, tuple(np.shape(values))), name)
            tensor.values[...] = values
            tensor.grad = None

    def clone(self) -> ParamStore:
        """Deep copy values (not gradients) into a new store with the same seed."""
        copy = ParamStore(self.rng_seed)
        for name, tensor in self._entries.items():
            copy.add(name, tensor.values.copy())
        return copy
