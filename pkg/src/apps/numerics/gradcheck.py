"""Central finite-difference verification of backward()."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .errors import GradientError
from .params import ParamStore
from .tensor import Tensor, backward, no_grad


def _evaluate(objective: Callable[[], Tensor]) -> float:
    with no_grad():
        return objective().item()


def finite_difference_check(
    objective: Callable[[], Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    *,
    floor: float = 1e-6,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """
    Compare backward() gradients with (f(θ+ε) - f(θ-ε)) / 2ε for every parameter entry.

    Returns the worst relative error |a - n| / max(|a|, |n|, floor). ``floor``
    keeps round-off on near-zero gradients from dominating. With
    ``max_entries`` only that many seeded entries per parameter are probed.
    """
    first = _evaluate(objective)
    if first != _evaluate(objective):
        raise GradientError("objective is not deterministic: two evaluations differ")

    store.zero_grad()
    loss = objective()
    if loss.requires_grad:
        backward(loss)
    analytic = {name: tensor.grad.copy() for name, tensor in store.items() if tensor.grad is not None}
    store.zero_grad()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, tensor in store.items():
        flat = tensor.values.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        grad = analytic[name].reshape(-1)
        for index in indices:
            original = flat[index]
            flat[index] = original + eps
            plus = _evaluate(objective)
            flat[index] = original - eps
            minus = _evaluate(objective)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            error = abs(grad[index] - numeric)
            if error == 0.0:
                continue
            worst = max(worst, error / max(abs(grad[index]), abs(numeric), floor))
    return worst
