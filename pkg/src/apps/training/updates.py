"""Loss assembly and the per-batch parameter updates of each training regime."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from apps.agents.bots import ABot, QBot
from apps.numerics import ops
from apps.numerics.optim import Optimizer, optimizer_step
from apps.numerics.params import ParamStore
from apps.numerics.tensor import Tensor, backward
from apps.world.scenes import Scene, World

from .episode import EpisodeOptions, EpisodeTrace, run_dialog_episode

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class EMABaseline:
    """Exponential moving average of RL-round returns, subtracted from G_t when enabled."""

    decay: float = 0.9
    value: float = 0.0
    initialized: bool = False

    def current(self) -> float:
        return self.value if self.initialized else 0.0

    def update(self, observed: float) -> None:
        if not self.initialized:
            self.value, self.initialized = observed, True
            return
        self.value = self.decay * self.value + (1.0 - self.decay) * observed

    def state(self) -> np.ndarray:
        return np.array([self.value, float(self.initialized)])

    def load_state(self, values: np.ndarray) -> None:
        self.value, self.initialized = float(values[0]), bool(values[1])


@dataclass(slots=True)
class BatchStats:
    """Detached per-batch numbers for the training log."""

    mean_reward: float
    qbot_mle: float
    qbot_mse: float
    abot_mle: float
    rl_rounds: int


def _mean(terms: Sequence[Tensor]) -> Tensor | None:
    return ops.mean(ops.stack(terms)) if terms else None


def _sum(terms: Sequence[Tensor | None]) -> Tensor | None:
    present = [term for term in terms if term is not None]
    if not present:
        return None
    total = present[0]
    for term in present[1:]:
        total = total + term
    return total


def supervised_losses(trace: EpisodeTrace) -> tuple[Tensor | None, Tensor | None]:
    """
    Q-Bot: mean question MLE over forced rounds plus mean image MSE over
    y_0..y_K. A-Bot: mean answer MLE over forced rounds.
    """
    forced = [record for record in trace.rounds if record.supervised]
    if not forced:
        return None, None
    q_mle = _mean([record.q_mle for record in forced if record.q_mle is not None])
    image = _mean([trace.y0_loss, *(record.image_loss for record in forced)]) if q_mle is not None else None
    a_mle = _mean([record.a_mle for record in forced if record.a_mle is not None])
    return _sum([q_mle, image]), a_mle


def reinforce_losses(
    trace: EpisodeTrace, baseline: float = 0.0, image_weight: float = 1.0
) -> tuple[Tensor | None, Tensor | None]:
    """
    Negated REINFORCE objectives averaged over self-play rounds:
    Q-Bot (G_t - b) log p(q_t) - w * MSE(y_t); A-Bot (G_t - b) log p(a_t).
    """
    rl_rounds = trace.rl_rounds
    if not rl_rounds:
        return None, None
    q_terms: list[Tensor] = []
    a_terms: list[Tensor] = []
    for record in rl_rounds:
        advantage = record.ret - baseline
        q_logprob = ops.total(ops.stack(record.q_logprobs))
        q_terms.append(image_weight * record.image_loss - advantage * q_logprob)
        a_terms.append(-advantage * ops.total(ops.stack(record.a_logprobs)))
    return _mean(q_terms), _mean(a_terms)


def _apply(store: ParamStore, optimizer: Optimizer, loss: Tensor | None) -> float:
    """Backward plus one optimizer step; a loss that does not touch the store still steps with zero gradients."""
    store.zero_grad()
    if loss is not None and loss.requires_grad:
        backward(loss)
    return optimizer_step(store, optimizer)


def _batch_loss(losses: Sequence[Tensor | None], batch: int) -> Tensor | None:
    total = _sum(losses)
    return None if total is None else total * (1.0 / batch)


def _stats(traces: Sequence[EpisodeTrace]) -> BatchStats:
    rl = [record.reward for trace in traces for record in trace.rl_rounds]
    rewards = rl or [reward for trace in traces for reward in trace.rewards]
    q_mle = [record.q_mle.item() for trace in traces for record in trace.rounds if record.q_mle is not None]
    a_mle = [record.a_mle.item() for trace in traces for record in trace.rounds if record.a_mle is not None]
    mse = [trace.y0_loss.item() for trace in traces]
    mse += [record.image_loss.item() for trace in traces for record in trace.rounds]
    return BatchStats(
        mean_reward=float(np.mean(rewards)) if rewards else 0.0,
        qbot_mle=float(np.mean(q_mle)) if q_mle else 0.0,
        qbot_mse=float(np.mean(mse)),
        abot_mle=float(np.mean(a_mle)) if a_mle else 0.0,
        rl_rounds=len(rl),
    )


def supervised_update(
    qbot: QBot | None,
    abot: ABot | None,
    world: World,
    scenes: Sequence[Scene],
    rounds: int,
    q_optimizer: Optimizer | None = None,
    a_optimizer: Optimizer | None = None,
    options: EpisodeOptions | None = None,
) -> BatchStats:
    """
    Teacher-forced pretraining on oracle dialogs: one optimizer step per bot
    per batch. Each bot consumes only oracle context, so either may be None.
    """
    traces = [
        run_dialog_episode(qbot, abot, world, scene, rounds, rounds, "train", options=options) for scene in scenes
    ]
    losses = [supervised_losses(trace) for trace in traces]
    if qbot is not None and q_optimizer is not None:
        _apply(qbot.params, q_optimizer, _batch_loss([q for q, _ in losses], len(scenes)))
    if abot is not None and a_optimizer is not None:
        _apply(abot.params, a_optimizer, _batch_loss([a for _, a in losses], len(scenes)))
    return _stats(traces)


def reinforce_update(
    qbot: QBot,
    abot: ABot,
    traces: Sequence[EpisodeTrace],
    q_optimizer: Optimizer,
    a_optimizer: Optimizer,
    *,
    image_weight: float = 1.0,
    baseline: EMABaseline | None = None,
) -> BatchStats:
    """Policy-gradient step for both bots from the self-play rounds of ``traces``."""
    stats = _stats(traces)
    if stats.rl_rounds == 0:
        logger.warning("No self-play rounds in %d trace(s); skipping the policy-gradient update", len(traces))
        return stats
    b = baseline.current() if baseline is not None else 0.0
    losses = [reinforce_losses(trace, b, image_weight) for trace in traces]
    _apply(qbot.params, q_optimizer, _batch_loss([q for q, _ in losses], len(traces)))
    _apply(abot.params, a_optimizer, _batch_loss([a for _, a in losses], len(traces)))
    if baseline is not None:
        baseline.update(float(np.mean([record.ret for trace in traces for record in trace.rl_rounds])))
    return stats


def curriculum_update(
    qbot: QBot,
    abot: ABot,
    world: World,
    scenes: Sequence[Scene],
    K: int,
    rounds: int,
    q_optimizer: Optimizer,
    a_optimizer: Optimizer,
    rng: np.random.Generator,
    *,
    gamma: float = 1.0,
    image_weight: float = 1.0,
    baseline: EMABaseline | None = None,
    options: EpisodeOptions | None = None,
) -> BatchStats:
    """
    One self-play batch: supervised losses on rounds 1..K and REINFORCE on
    rounds K+1..T, summed into a single step per bot.
    """
    traces = [
        run_dialog_episode(qbot, abot, world, scene, K, rounds, "train", rng=rng, gamma=gamma, options=options)
        for scene in scenes
    ]
    b = baseline.current() if baseline is not None else 0.0
    q_losses: list[Tensor | None] = []
    a_losses: list[Tensor | None] = []
    for trace in traces:
        q_sl, a_sl = supervised_losses(trace)
        q_rl, a_rl = reinforce_losses(trace, b, image_weight)
        q_losses.append(_sum([q_sl, q_rl]))
        a_losses.append(_sum([a_sl, a_rl]))
    _apply(qbot.params, q_optimizer, _batch_loss(q_losses, len(scenes)))
    _apply(abot.params, a_optimizer, _batch_loss(a_losses, len(scenes)))
    stats = _stats(traces)
    if baseline is not None and stats.rl_rounds:
        baseline.update(float(np.mean([record.ret for trace in traces for record in trace.rl_rounds])))
    return stats
