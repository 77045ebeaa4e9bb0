"""The questioner (Q-Bot) and answerer (A-Bot) networks."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

from apps.numerics import ops
from apps.numerics.params import ParamStore
from apps.numerics.recurrent import RecurrentCellSpec
from apps.numerics.tensor import Tensor
from apps.world.schema import STOP_ID

from .errors import AgentError
from .layers import Decoder, attend_history, dense, encode_sequence, register_attention, register_dense

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class AgentDims:
    """Sizes shared by both bots."""

    vocab_size: int
    image_dim: int
    embed_dim: int = 32
    hidden_dim: int = 64
    fusion_dim: int = 64
    fusion_layers: int = 2
    q_max_len: int = 8
    a_max_len: int = 6

    def __post_init__(self) -> None:
        sizes = (self.vocab_size, self.image_dim, self.embed_dim, self.hidden_dim, self.fusion_dim)
        if min(sizes) < 1:
            raise AgentError(f"all dimensions must be positive, got {sizes}")
        if self.fusion_layers < 1:
            raise AgentError("the Q-Bot needs at least one fusion layer")
        if self.q_max_len < 1 or self.a_max_len < 1:
            raise AgentError("maximum utterance lengths must be positive")


class QBot:
    """
    Sees the caption only. Encodes each exchange as a fact, attends over
    earlier facts keyed by the newest one, fuses caption, fact and history
    into e (question decoder input), and regresses the image embedding.
    """

    role = "qbot"

    def __init__(self, dims: AgentDims, seed: int, params: ParamStore | None = None) -> None:
        self.dims = dims
        H = dims.hidden_dim
        self.fact_cell = RecurrentCellSpec("fact", dims.embed_dim, H)
        self.caption_cell = RecurrentCellSpec("caption", dims.embed_dim, H)
        self.decoder = Decoder("decoder", "embed", dims.embed_dim, H, dims.fusion_dim, dims.vocab_size, dims.q_max_len)
        if params is not None:
            self.params = params
            return
        self.params = ParamStore(seed)
        store = self.params
        store.add_weight("embed", dims.vocab_size, dims.embed_dim)
        self.fact_cell.register(store)
        self.caption_cell.register(store)
        register_attention(store, "attention", H, H, H)
        in_dim = 3 * H
        for layer in range(dims.fusion_layers):
            register_dense(store, f"fusion.{layer}", in_dim, dims.fusion_dim)
            in_dim = dims.fusion_dim
        register_dense(store, "regression", 3 * H, dims.image_dim)
        self.decoder.register(store)

    def clone(self) -> QBot:
        return QBot(self.dims, self.params.rng_seed, self.params.clone())

    def encode_fact(self, q_tokens: Sequence[int], a_tokens: Sequence[int]) -> Tensor:
        """Final hidden state of the fact cell over ``q <stop> a``."""
        return encode_sequence(self.params, "embed", self.fact_cell, (*q_tokens, STOP_ID, *a_tokens))

    def zero_fact(self) -> Tensor:
        return ops.zeros(self.dims.hidden_dim)

    def encode_caption(self, caption_tokens: Sequence[int]) -> Tensor:
        if not caption_tokens:
            raise AgentError("caption must not be empty")
        return encode_sequence(self.params, "embed", self.caption_cell, caption_tokens)

    def encode(self, caption: Tensor, fact: Tensor, history: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
        """
        Return (e, S): S = [C; F_t; H_t] with H_t the history summary keyed
        by F_t, and e the tanh fusion of S.
        """
        summary, _ = attend_history(self.params, "attention", fact, history)
        state = ops.concat(caption, fact, summary)
        e = state
        for layer in range(self.dims.fusion_layers):
            e = ops.tanh(dense(self.params, f"fusion.{layer}", e))
        return e, state

    def predict_image(self, state: Tensor) -> Tensor:
        """Affine regression head; no activation."""
        return dense(self.params, "regression", state)


class ABot:
    """
    Sees the caption and the image. The caption, encoded by the fact cell,
    heads the history; each question keys attention over that history and
    is fused with the image into e for the answer decoder.
    """

    role = "abot"

    def __init__(self, dims: AgentDims, seed: int, params: ParamStore | None = None) -> None:
        self.dims = dims
        H = dims.hidden_dim
        self.question_cell = RecurrentCellSpec("question", dims.embed_dim, H)
        self.fact_cell = RecurrentCellSpec("fact", dims.embed_dim, H)
        self.decoder = Decoder("decoder", "embed", dims.embed_dim, H, dims.fusion_dim, dims.vocab_size, dims.a_max_len)
        if params is not None:
            self.params = params
            return
        self.params = ParamStore(seed)
        store = self.params
        store.add_weight("embed", dims.vocab_size, dims.embed_dim)
        self.question_cell.register(store)
        self.fact_cell.register(store)
        register_attention(store, "attention", H, H, H)
        register_dense(store, "fusion", 2 * H + dims.image_dim, dims.fusion_dim)
        self.decoder.register(store)

    def clone(self) -> ABot:
        return ABot(self.dims, self.params.rng_seed, self.params.clone())

    def encode_question(self, q_tokens: Sequence[int]) -> Tensor:
        return encode_sequence(self.params, "embed", self.question_cell, q_tokens)

    def encode_fact(self, q_tokens: Sequence[int], a_tokens: Sequence[int]) -> Tensor:
        return encode_sequence(self.params, "embed", self.fact_cell, (*q_tokens, STOP_ID, *a_tokens))

    def encode_caption(self, caption_tokens: Sequence[int]) -> Tensor:
        """The caption as history entry zero, through the fact cell."""
        if not caption_tokens:
            raise AgentError("caption must not be empty")
        return encode_sequence(self.params, "embed", self.fact_cell, caption_tokens)

    def encode(self, question: Tensor, history: Sequence[Tensor], image: Tensor) -> Tensor:
        """e = tanh(W [H_t; Q_t; I] + b), H_t keyed by the question over caption-led history."""
        if image.shape != (self.dims.image_dim,):
            raise AgentError(f"image of shape {image.shape}, expected ({self.dims.image_dim},)")
        summary, _ = attend_history(self.params, "attention", question, history)
        return ops.tanh(dense(self.params, "fusion", ops.concat(summary, question, image)))

    def abot_encode(
        self, q_tokens: Sequence[int], facts: Sequence[Tensor], caption_tokens: Sequence[int], image: Tensor
    ) -> Tensor:
        """Convenience form encoding the question and caption first."""
        history = [self.encode_caption(caption_tokens), *facts]
        return self.encode(self.encode_question(q_tokens), history, image)


def qbot_encode(
    qbot: QBot, caption_tokens: Sequence[int], fact: Tensor, facts: Sequence[Tensor]
) -> tuple[Tensor, Tensor]:
    """Caption, newest fact and history to (e, S) in one call."""
    return qbot.encode(qbot.encode_caption(caption_tokens), fact, facts)


Agent = QBot | ABot
