"""Automated language-quality measures over played dialogs."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from apps.agents.bots import ABot, QBot
from apps.agents.layers import with_stop
from apps.numerics.tensor import no_grad
from apps.training.episode import EpisodeOptions, replay_contexts
from apps.world.scenes import DialogTranscript, Exchange, Scene, World

from .metrics import distinct_n

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class LanguageQuality:
    """Rates are percentages; ``drift_perplexity`` is None without reference bots."""

    grammar_rate_q: float
    grammar_rate_a: float
    relevance_rate_q: float
    consistency_rate_a: float
    drift_perplexity: float | None
    distinct_1: float
    distinct_2: float
    per_scene_grammar_q: list[float] = field(default_factory=list)
    per_scene_grammar_a: list[float] = field(default_factory=list)


def _percent(flags: Sequence[bool]) -> float:
    return 100.0 * float(np.mean(flags)) if flags else 0.0


def drift_perplexity(
    transcripts: Sequence[DialogTranscript],
    scenes: Mapping[int, Scene],
    reference: tuple[QBot, ABot],
    options: EpisodeOptions | None = None,
) -> float:
    """exp of the mean per-token negative log-likelihood of the dialogs under the reference bots."""
    qbot, abot = reference
    nll = 0.0
    tokens = 0
    with no_grad():
        for transcript in transcripts:
            contexts = replay_contexts(qbot, abot, scenes[transcript.scene_id], transcript.exchanges, options)
            for context, (question, answer) in zip(contexts, transcript.exchanges, strict=True):
                assert context.e_q is not None and context.e_a is not None
                q_target = with_stop(question, qbot.dims.q_max_len)
                a_target = with_stop(answer, abot.dims.a_max_len)
                nll -= qbot.decoder.sequence_logprob(qbot.params, context.e_q, q_target).item()
                nll -= abot.decoder.sequence_logprob(abot.params, context.e_a, a_target).item()
                tokens += len(q_target) + len(a_target)
    return math.exp(nll / tokens) if tokens else math.nan


def language_quality_report(
    transcripts: Sequence[DialogTranscript],
    world: World,
    scenes: Mapping[int, Scene],
    reference: tuple[QBot, ABot] | None = None,
    options: EpisodeOptions | None = None,
) -> LanguageQuality:
    """
    Grammar, relevance and consistency rates, reference-model perplexity and
    distinct-n over the given dialogs.
    """
    grammar = world.grammar
    grammar_q: list[bool] = []
    grammar_a: list[bool] = []
    relevant: list[bool] = []
    consistent: list[bool] = []
    per_scene_q: list[float] = []
    per_scene_a: list[float] = []
    utterances: list[tuple[int, ...]] = []

    for transcript in transcripts:
        scene = scenes[transcript.scene_id]
        history: list[Exchange] = []
        scene_q: list[bool] = []
        scene_a: list[bool] = []
        for question, answer in transcript.exchanges:
            scene_q.append(grammar.is_grammatical(question, "question"))
            scene_a.append(grammar.is_grammatical(answer, "answer"))
            relevant.append(world.question_relevant(transcript.caption, history, question))
            consistent.append(world.answer_consistent(scene, question, answer))
            history.append((question, answer))
            utterances += [question, answer]
        grammar_q += scene_q
        grammar_a += scene_a
        per_scene_q.append(_percent(scene_q))
        per_scene_a.append(_percent(scene_a))

    drift = None
    if reference is not None:
        drift = drift_perplexity(transcripts, scenes, reference, options)
    else:
        logger.debug("No reference bots given; drift perplexity left empty")

    return LanguageQuality(
        grammar_rate_q=_percent(grammar_q),
        grammar_rate_a=_percent(grammar_a),
        relevance_rate_q=_percent(relevant),
        consistency_rate_a=_percent(consistent),
        drift_perplexity=drift,
        distinct_1=distinct_n(utterances, 1),
        distinct_2=distinct_n(utterances, 2),
        per_scene_grammar_q=per_scene_q,
        per_scene_grammar_a=per_scene_a,
    )
