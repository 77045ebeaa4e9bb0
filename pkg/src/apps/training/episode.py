"""
One dialog episode: the curriculum rollout, per-round image predictions,
the information-gain reward and discounted returns.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np

from apps.agents.bots import ABot, QBot
from apps.agents.layers import Utterance, visible_history, with_stop
from apps.numerics import ops
from apps.numerics.tensor import Tensor
from apps.world.scenes import DialogTranscript, Scene, World

from .errors import TrainingError

if TYPE_CHECKING:
    from .config import RunConfig

Mode = Literal["train", "eval"]


@dataclass(frozen=True, slots=True)
class EpisodeOptions:
    """Rollout switches taken from the run configuration."""

    truncate_history: bool = True
    distance: Literal["squared", "euclidean"] = "squared"
    reward_sign: Literal["eq1", "alg1"] = "eq1"
    rl_image_grad_encoder: bool = False

    @classmethod
    def from_config(cls, config: RunConfig) -> EpisodeOptions:
        return cls(
            truncate_history=config.truncate_history,
            distance=config.distance,  # type: ignore[arg-type]
            reward_sign=config.reward_sign,  # type: ignore[arg-type]
            rl_image_grad_encoder=config.rl_image_grad_encoder,
        )


@dataclass(slots=True)
class RoundRecord:
    """One exchange. Log-probabilities are kept only for generated utterances, MLE losses only for forced ones."""

    q_tokens: tuple[int, ...]
    a_tokens: tuple[int, ...]
    supervised: bool
    y: Tensor
    image_loss: Tensor
    distance: float
    q_logprobs: list[Tensor] = field(default_factory=list)
    a_logprobs: list[Tensor] = field(default_factory=list)
    q_mle: Tensor | None = None
    a_mle: Tensor | None = None
    reward: float = 0.0
    ret: float = 0.0


@dataclass(slots=True)
class EpisodeTrace:
    scene_id: int
    K: int
    y0: Tensor
    y0_loss: Tensor
    y0_distance: float
    caption: tuple[int, ...]
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def rewards(self) -> list[float]:
        return [record.reward for record in self.rounds]

    @property
    def returns(self) -> list[float]:
        return [record.ret for record in self.rounds]

    @property
    def distances(self) -> list[float]:
        """l(y_0), l(y_1), ..., l(y_T)."""
        return [self.y0_distance, *(record.distance for record in self.rounds)]

    @property
    def rl_rounds(self) -> list[RoundRecord]:
        return [record for record in self.rounds if not record.supervised]

    def telescoping_gap(self) -> float:
        """sum r_t - (l(y_0) - l(y_T)); zero up to rounding under the eq1 sign."""
        return math.fsum(self.rewards) - (self.y0_distance - self.rounds[-1].distance)

    def transcript(self) -> DialogTranscript:
        return DialogTranscript(
            self.scene_id, self.caption, tuple((record.q_tokens, record.a_tokens) for record in self.rounds)
        )


# ─────────────────────────────── Rewards ─────────────────────────────────────


def image_distance(y: Tensor, y_gt: Tensor, kind: str = "squared") -> float:
    diff = y.values - y_gt.values
    squared = float(np.dot(diff, diff))
    return squared if kind == "squared" else math.sqrt(squared)


def compute_reward(prev_dist: float, curr_dist: float, sign: str = "eq1") -> float:
    """
    Information-gain reward: prev - curr, positive when the prediction moved
    closer. ``sign="alg1"`` flips it for replication studies.
    """
    if prev_dist < 0.0 or curr_dist < 0.0:
        raise TrainingError(f"distances must be non-negative, got {prev_dist} and {curr_dist}")
    reward = prev_dist - curr_dist
    return reward if sign == "eq1" else -reward


def returns(rewards: Sequence[float], gamma: float) -> list[float]:
    """G_t = sum_{k >= t} gamma^(k - t) r_k."""
    if not 0.0 <= gamma <= 1.0:
        raise TrainingError(f"gamma must lie in [0, 1], got {gamma}")
    out = [0.0] * len(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


# ─────────────────────────────── Rollout ─────────────────────────────────────


def _generate(bot: QBot | ABot, e: Tensor, mode: Mode, rng: np.random.Generator | None) -> Utterance:
    return bot.decoder.decode(bot.params, e, greedy=mode == "eval", rng=rng)


def run_dialog_episode(
    qbot: QBot | None,
    abot: ABot | None,
    world: World,
    scene: Scene,
    K: int,
    rounds: int,
    mode: Mode = "train",
    *,
    rng: np.random.Generator | None = None,
    gamma: float = 1.0,
    options: EpisodeOptions | None = None,
) -> EpisodeTrace:
    """
    Play ``rounds`` exchanges on ``scene``. Rounds 1..K replay the oracle
    dialog with teacher-forced MLE losses; later rounds are generated
    (sampled in train mode, greedy in eval mode). After each exchange the
    Q-Bot predicts y_t and the round's reward and return are filled in.

    A fully supervised episode (K == rounds) never lets the bots interact,
    so either bot may be None there; its side of the trace is left empty.
    """
    options = options or EpisodeOptions()
    if not 0 <= K <= rounds:
        raise TrainingError(f"K must lie in [0, {rounds}], got {K}")
    if (qbot is None or abot is None) and K < rounds:
        raise TrainingError("self-play rounds need both bots")
    if qbot is None and abot is None:
        raise TrainingError("an episode needs at least one bot")
    if mode == "train" and K < rounds and rng is None:
        raise TrainingError("train-mode self-play needs a random generator")
    oracle = world.oracle_dialog(scene, rounds)
    if len(oracle) < K:
        raise TrainingError(f"scene {scene.scene_id}: oracle dialog has {len(oracle)} rounds, curriculum needs {K}")

    y_gt = scene.y_gt
    truncate = options.truncate_history

    def encoder_grad(supervised: bool) -> bool:
        return supervised or options.rl_image_grad_encoder

    # Q-Bot state: caption encoding, newest fact, older facts.
    if qbot is not None:
        caption = qbot.encode_caption(scene.caption_tokens)
        latest = qbot.zero_fact()
        q_history: list[Tensor] = []
        e_q, state = qbot.encode(caption, latest, q_history)
        y0 = qbot.predict_image(state if encoder_grad(K > 0) else state.detach())
    else:
        y0 = ops.zeros(*y_gt.shape)
    # A-Bot state: caption fact heads the history.
    if abot is not None:
        a_history = [abot.encode_caption(scene.caption_tokens)]

    y0_distance = image_distance(y0, y_gt, options.distance)
    trace = EpisodeTrace(scene.scene_id, K, y0, ops.mse(y0, y_gt), y0_distance, scene.caption_tokens)
    prev_distance = y0_distance

    for t in range(1, rounds + 1):
        supervised = t <= K
        q_logprobs: list[Tensor] = []
        a_logprobs: list[Tensor] = []
        q_mle = a_mle = None

        if supervised:
            q_tokens, a_tokens = oracle[t - 1]
            if qbot is not None:
                q_mle = qbot.decoder.mle_loss(qbot.params, e_q, with_stop(q_tokens, qbot.dims.q_max_len))
        else:
            assert qbot is not None
            question = _generate(qbot, e_q, mode, rng)
            q_tokens, q_logprobs = question.body, question.logprobs

        if abot is not None:
            question_code = abot.encode_question(q_tokens)
            visible = [a_history[0], *visible_history(a_history[1:], truncate)]
            e_a = abot.encode(question_code, visible, y_gt)
            if supervised:
                a_mle = abot.decoder.mle_loss(abot.params, e_a, with_stop(a_tokens, abot.dims.a_max_len))
            else:
                answer = _generate(abot, e_a, mode, rng)
                a_tokens, a_logprobs = answer.body, answer.logprobs
            a_history.append(abot.encode_fact(q_tokens, a_tokens))

        if qbot is not None:
            fact = qbot.encode_fact(q_tokens, a_tokens)
            if t > 1:
                q_history.append(latest)
            latest = fact
            e_q, state = qbot.encode(caption, latest, visible_history(q_history, truncate))
            y = qbot.predict_image(state if encoder_grad(supervised) else state.detach())
        else:
            y = ops.zeros(*y_gt.shape)

        distance = image_distance(y, y_gt, options.distance)
        trace.rounds.append(
            RoundRecord(
                q_tokens=tuple(q_tokens),
                a_tokens=tuple(a_tokens),
                supervised=supervised,
                y=y,
                image_loss=ops.mse(y, y_gt),
                distance=distance,
                q_logprobs=q_logprobs,
                a_logprobs=a_logprobs,
                q_mle=q_mle,
                a_mle=a_mle,
                reward=compute_reward(prev_distance, distance, options.reward_sign),
            )
        )
        prev_distance = distance

    for record, ret in zip(trace.rounds, returns(trace.rewards, gamma), strict=True):
        record.ret = ret
    return trace


@dataclass(slots=True)
class RoundContext:
    """Encodings each bot decodes from at one round of a replayed dialog."""

    e_q: Tensor | None
    e_a: Tensor | None


def replay_contexts(
    qbot: QBot | None,
    abot: ABot | None,
    scene: Scene,
    exchanges: Sequence[tuple[Sequence[int], Sequence[int]]],
    options: EpisodeOptions | None = None,
) -> list[RoundContext]:
    """
    Teacher-force a fixed dialog through the bots and return, per round, the
    Q-Bot encoding that produced question t and the A-Bot encoding that
    produced answer t.
    """
    options = options or EpisodeOptions()
    truncate = options.truncate_history
    contexts: list[RoundContext] = []
    if qbot is not None:
        caption = qbot.encode_caption(scene.caption_tokens)
        latest = qbot.zero_fact()
        q_history: list[Tensor] = []
        e_q, _ = qbot.encode(caption, latest, q_history)
    if abot is not None:
        a_history = [abot.encode_caption(scene.caption_tokens)]
    for t, (q_tokens, a_tokens) in enumerate(exchanges, start=1):
        context = RoundContext(e_q if qbot is not None else None, None)
        if abot is not None:
            visible = [a_history[0], *visible_history(a_history[1:], truncate)]
            context.e_a = abot.encode(abot.encode_question(q_tokens), visible, scene.y_gt)
            a_history.append(abot.encode_fact(q_tokens, a_tokens))
        if qbot is not None:
            if t > 1:
                q_history.append(latest)
            latest = qbot.encode_fact(q_tokens, a_tokens)
            e_q, _ = qbot.encode(caption, latest, visible_history(q_history, truncate))
        contexts.append(context)
    return contexts
