"""
Building blocks shared by both bots.

Parameters live in the owning bot's ParamStore under a dotted prefix; the
helpers here only register and read them.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from apps.numerics import ops
from apps.numerics.params import ParamStore
from apps.numerics.recurrent import RecurrentCellSpec, lstm_step, run_lstm
from apps.numerics.tensor import Tensor
from apps.world.schema import START_ID, STOP_ID

from .errors import AgentError

if TYPE_CHECKING:
    from numpy.random import Generator


# ─────────────────────────────── Dense layers ────────────────────────────────


def register_dense(store: ParamStore, prefix: str, in_dim: int, out_dim: int) -> None:
    store.add_weight(f"{prefix}.W", out_dim, in_dim)
    store.add_bias(f"{prefix}.b", out_dim)


def dense(params: ParamStore, prefix: str, x: Tensor) -> Tensor:
    return ops.matmul(params[f"{prefix}.W"], x) + params[f"{prefix}.b"]


def embed_tokens(params: ParamStore, table: str, tokens: Sequence[int]) -> list[Tensor]:
    vocab_size = params[table].shape[0]
    for token in tokens:
        if not 0 <= token < vocab_size:
            raise AgentError(f"token index {token} outside vocabulary of size {vocab_size}")
    return [ops.embedding(params[table], token) for token in tokens]


def encode_sequence(params: ParamStore, table: str, cell: RecurrentCellSpec, tokens: Sequence[int]) -> Tensor:
    """Final hidden state of ``cell`` run over the embedded tokens (zero for an empty sequence)."""
    h, _ = run_lstm(cell, params, embed_tokens(params, table, tokens))
    return h


def visible_history(facts: Sequence[Tensor], truncate: bool) -> list[Tensor]:
    """
    Facts built in earlier rounds, as attention sees them. With truncation
    all of them are cut from the graph; the fact built this round is passed
    to the encoders separately and stays attached.
    """
    if not truncate:
        return list(facts)
    return [fact.detach() for fact in facts]


# ─────────────────────────────── Attention ───────────────────────────────────


def register_attention(store: ParamStore, prefix: str, key_dim: int, fact_dim: int, attn_dim: int) -> None:
    store.add_weight(f"{prefix}.W_key", attn_dim, key_dim)
    store.add_weight(f"{prefix}.W_fact", attn_dim, fact_dim)
    store.add_bias(f"{prefix}.b", attn_dim)
    store.add_weight(f"{prefix}.v", 1, attn_dim)


def attend_history(params: ParamStore, prefix: str, key: Tensor, facts: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
    """
    Additive attention over the dialog history.

    score_i = v . tanh(W_key key + W_fact F_i + b); weights = softmax(scores);
    the summary is the weighted sum of facts. An empty history gives a zero
    summary and an empty weight vector.
    """
    fact_dim = params[f"{prefix}.W_fact"].shape[1]
    if not facts:
        return ops.zeros(fact_dim), ops.zeros(0)
    for fact in facts:
        if fact.shape != (fact_dim,):
            raise AgentError(f"{prefix}: fact of shape {fact.shape}, expected ({fact_dim},)")
    keyed = ops.matmul(params[f"{prefix}.W_key"], key) + params[f"{prefix}.b"]
    scores = [
        ops.pick(ops.matmul(params[f"{prefix}.v"], ops.tanh(keyed + ops.matmul(params[f"{prefix}.W_fact"], fact))), 0)
        for fact in facts
    ]
    weights = ops.softmax(ops.stack(scores))
    summary = ops.pick(weights, 0) * facts[0]
    for i, fact in enumerate(facts[1:], start=1):
        summary = summary + ops.pick(weights, i) * fact
    return summary, weights


# ─────────────────────────────── Decoder ─────────────────────────────────────


@dataclass(slots=True)
class Utterance:
    """Decoded tokens (including a final <stop> when one was emitted) and their log-probabilities."""

    tokens: tuple[int, ...]
    logprobs: list[Tensor] = field(default_factory=list)

    @property
    def body(self) -> tuple[int, ...]:
        """Tokens without the trailing <stop>."""
        return self.tokens[:-1] if self.tokens and self.tokens[-1] == STOP_ID else self.tokens

    def total_logprob(self) -> Tensor:
        return ops.total(ops.stack(self.logprobs))


def with_stop(tokens: Sequence[int], max_len: int) -> tuple[int, ...]:
    """Decoder target for an utterance: its tokens plus <stop>, unless that would exceed ``max_len``."""
    tokens = tuple(int(token) for token in tokens)
    if tokens and tokens[-1] == STOP_ID:
        return tokens
    return tokens if len(tokens) >= max_len else (*tokens, STOP_ID)


@dataclass(frozen=True, slots=True)
class Decoder:
    """
    LSTM utterance decoder conditioned on an encoding e.

    One affine map takes e to the initial (h, c); the previous token's
    embedding is the cell input; a linear output layer gives the logits.
    """

    prefix: str
    table: str
    embed_dim: int
    hidden_dim: int
    context_dim: int
    vocab_size: int
    max_len: int

    @property
    def cell(self) -> RecurrentCellSpec:
        return RecurrentCellSpec(f"{self.prefix}.cell", self.embed_dim, self.hidden_dim)

    def register(self, store: ParamStore) -> None:
        register_dense(store, f"{self.prefix}.init", self.context_dim, 2 * self.hidden_dim)
        self.cell.register(store)
        register_dense(store, f"{self.prefix}.out", self.hidden_dim, self.vocab_size)

    def initial_state(self, params: ParamStore, e: Tensor) -> tuple[Tensor, Tensor]:
        if e.shape != (self.context_dim,):
            raise AgentError(f"{self.prefix}: encoding of shape {e.shape}, expected ({self.context_dim},)")
        z = dense(params, f"{self.prefix}.init", e)
        return ops.slice_last(z, 0, self.hidden_dim), ops.slice_last(z, self.hidden_dim, 2 * self.hidden_dim)

    def _step(self, params: ParamStore, token: int, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        x = ops.embedding(params[self.table], token)
        h, c = lstm_step(self.cell, params, x, h, c)
        return dense(params, f"{self.prefix}.out", h), h, c

    def decode(self, params: ParamStore, e: Tensor, *, greedy: bool, rng: Generator | None = None) -> Utterance:
        """Emit tokens until <stop> or ``max_len``; sampling requires ``rng``."""
        if not greedy and rng is None:
            raise AgentError("sample mode needs a random generator")
        h, c = self.initial_state(params, e)
        utterance = Utterance(())
        token = START_ID
        while len(utterance.tokens) < self.max_len:
            logits, h, c = self._step(params, token, h, c)
            log_probs = ops.log_softmax(logits)
            if greedy:
                token = int(np.argmax(log_probs.values))
            else:
                assert rng is not None
                probs = np.exp(log_probs.values)
                token = int(rng.choice(probs.size, p=probs / probs.sum()))
            utterance.tokens = (*utterance.tokens, token)
            utterance.logprobs.append(ops.pick(log_probs, token))
            if token == STOP_ID:
                break
        return utterance

    def teacher_forced_logits(self, params: ParamStore, e: Tensor, targets: Sequence[int]) -> list[Tensor]:
        """Logits at each target position, feeding the ground-truth previous token."""
        if not targets:
            raise AgentError(f"{self.prefix}: empty target sequence")
        if len(targets) > self.max_len:
            raise AgentError(f"{self.prefix}: target of length {len(targets)} exceeds max_len {self.max_len}")
        for token in targets:
            if not 0 <= token < self.vocab_size:
                raise AgentError(f"token index {token} outside vocabulary of size {self.vocab_size}")
        h, c = self.initial_state(params, e)
        logits = []
        previous = START_ID
        for token in targets:
            step_logits, h, c = self._step(params, previous, h, c)
            logits.append(step_logits)
            previous = int(token)
        return logits

    def sequence_logprob(self, params: ParamStore, e: Tensor, tokens: Sequence[int]) -> Tensor:
        """Sum of teacher-forced per-token log-probabilities."""
        logits = self.teacher_forced_logits(params, e, tokens)
        picked = [ops.pick(ops.log_softmax(step), int(token)) for step, token in zip(logits, tokens, strict=True)]
        return ops.total(ops.stack(picked))

    def mle_loss(self, params: ParamStore, e: Tensor, tokens: Sequence[int]) -> Tensor:
        """Per-token mean cross-entropy of a ground-truth utterance."""
        logits = self.teacher_forced_logits(params, e, tokens)
        losses = [ops.cross_entropy(step, int(token)) for step, token in zip(logits, tokens, strict=True)]
        return ops.mean(ops.stack(losses))

    def token_hits(self, params: ParamStore, e: Tensor, tokens: Sequence[int]) -> tuple[int, int]:
        """(correct argmax predictions, positions) under teacher forcing."""
        logits = self.teacher_forced_logits(params, e, tokens)
        hits = sum(int(np.argmax(step.values)) == int(token) for step, token in zip(logits, tokens, strict=True))
        return hits, len(tokens)
