"""LSTM cell built from the differentiable primitives."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

from . import ops
from .errors import ShapeError
from .params import ParamStore
from .tensor import Tensor

GATES = ("input", "forget", "output", "candidate")


@dataclass(frozen=True, slots=True)
class RecurrentCellSpec:
    """Dimensions and parameter names of one LSTM cell."""

    prefix: str
    input_dim: int
    hidden_dim: int

    def weight_name(self, gate: str) -> str:
        return f"{self.prefix}.W_{gate}"

    def bias_name(self, gate: str) -> str:
        return f"{self.prefix}.b_{gate}"

    def register(self, store: ParamStore) -> None:
        """Create the per-gate (hidden, input + hidden) weights and hidden-sized biases."""
        for gate in GATES:
            store.add_weight(self.weight_name(gate), self.hidden_dim, self.input_dim + self.hidden_dim)
            store.add_bias(self.bias_name(gate), self.hidden_dim)

    def initial_state(self) -> tuple[Tensor, Tensor]:
        return ops.zeros(self.hidden_dim), ops.zeros(self.hidden_dim)


def _gate(spec: RecurrentCellSpec, params: ParamStore, gate: str, z: Tensor) -> Tensor:
    return ops.matmul(params[spec.weight_name(gate)], z) + params[spec.bias_name(gate)]


def lstm_step(spec: RecurrentCellSpec, params: ParamStore, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One step of the standard input/forget/output/candidate gate equations."""
    if x.shape != (spec.input_dim,) or h.shape != (spec.hidden_dim,) or c.shape != (spec.hidden_dim,):
        raise ShapeError("lstm_step", (x.shape, h.shape, c.shape), f"cell {spec.prefix}")
    z = ops.concat(x, h)
    input_gate = ops.sigmoid(_gate(spec, params, "input", z))
    forget_gate = ops.sigmoid(_gate(spec, params, "forget", z))
    output_gate = ops.sigmoid(_gate(spec, params, "output", z))
    candidate = ops.tanh(_gate(spec, params, "candidate", z))
    c_next = forget_gate * c + input_gate * candidate
    h_next = output_gate * ops.tanh(c_next)
    return h_next, c_next


def run_lstm(
    spec: RecurrentCellSpec,
    params: ParamStore,
    inputs: Sequence[Tensor],
    state: tuple[Tensor, Tensor] | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the cell over a sequence and return the final (h, c)."""
    h, c = state if state is not None else spec.initial_state()
    for x in inputs:
        h, c = lstm_step(spec, params, x, h, c)
    return h, c
