"""
Evaluation of a trained (Q-Bot, A-Bot) pair on held-out scenes.

Every scene is independent: one greedy self-play episode gives the
per-round image-retrieval percentiles against the test gallery and a
transcript, and the A-Bot ranks candidate answers under oracle or
self-generated dialog context. Scenes fan out over a thread pool and are
reduced in scene order, so the report does not depend on the worker count.
"""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from apps.agents.bots import ABot, QBot
from apps.agents.layers import with_stop
from apps.numerics.tensor import Tensor, no_grad
from apps.training.episode import EpisodeOptions, replay_contexts, run_dialog_episode
from apps.world.scenes import DialogTranscript, Scene, Tokens, World

from .errors import EvaluationError
from .language import language_quality_report
from .metrics import RankList, answer_retrieval_metrics, image_retrieval_percentile, pessimistic_rank

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from apps.training.config import RunConfig

logger = logging.getLogger(__name__)

EvalContext = Literal["oracle", "generated"]


@dataclass(frozen=True, slots=True)
class EvalSettings:
    rounds: int = 10
    n_candidates: int = 20
    recall_k: int = 10
    recall_strict: bool = False
    context: EvalContext = "oracle"
    seed: int = 0
    options: EpisodeOptions = field(default_factory=EpisodeOptions)

    @classmethod
    def from_config(cls, config: RunConfig) -> EvalSettings:
        return cls(
            rounds=config.rounds,
            n_candidates=config.n_candidates,
            recall_k=config.recall_k,
            recall_strict=config.recall_strict,
            context=config.eval_context,  # type: ignore[arg-type]
            seed=config.seed,
            options=EpisodeOptions.from_config(config),
        )


@dataclass(slots=True)
class PercentileCurve:
    """Per-round mean, standard deviation and sample count; index 0 is the caption-only guess."""

    mean: list[float]
    std: list[float]
    n: list[int]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> PercentileCurve:
        if not rows:
            raise EvaluationError("no scenes to build a percentile curve from")
        table = np.asarray(rows, dtype=np.float64)
        return cls(
            mean=[float(v) for v in table.mean(axis=0)],
            std=[float(v) for v in table.std(axis=0)],
            n=[table.shape[0]] * table.shape[1],
        )

    def csv_rows(self) -> list[tuple[int, float, float, int]]:
        return [(t, self.mean[t], self.std[t], self.n[t]) for t in range(len(self.mean))]


@dataclass(slots=True)
class SceneResult:
    scene_id: int
    percentiles: list[float]
    ranks: RankList
    transcript: DialogTranscript


@dataclass(slots=True)
class MetricsReport:
    """Everything measured for one evaluated system, JSON-ready through ``to_dict``."""

    system: str
    mrr: float
    mean_rank: float
    recall_at_k: float
    k: int
    percentile_by_round: list[float]
    percentile_std: list[float]
    percentile_n: list[int]
    grammar_rate_q: float
    grammar_rate_a: float
    relevance_rate_q: float
    consistency_rate_a: float
    drift_perplexity: float | None
    distinct_1: float
    distinct_2: float
    n_scenes: int
    context: str = "oracle"
    samples: dict[str, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricsReport:
        names = {f.name for f in fields(cls)}
        missing = names - set(data) - {"context", "samples"}
        if missing:
            raise EvaluationError(f"metrics report is missing {sorted(missing)}")
        return cls(**{key: value for key, value in data.items() if key in names})


@dataclass(slots=True)
class EvaluationResult:
    report: MetricsReport
    transcripts: list[DialogTranscript]


def candidate_seed(seed: int, scene_id: int, round_index: int) -> int:
    return int(np.random.SeedSequence([seed, scene_id, round_index]).generate_state(1)[0])


def rank_candidates(abot: ABot, e_a: Tensor, candidates: Sequence[Tokens], gt_index: int) -> int:
    """Score each candidate by its teacher-forced log-likelihood under e_a and return the ground truth's rank."""
    if not 0 <= gt_index < len(candidates):
        raise EvaluationError(f"ground-truth index {gt_index} outside {len(candidates)} candidates")
    max_len = abot.dims.a_max_len
    with no_grad():
        scores = [
            abot.decoder.sequence_logprob(abot.params, e_a, with_stop(candidate, max_len)).item()
            for candidate in candidates
        ]
    return pessimistic_rank(scores, gt_index)


def _oracle_form(world: World, question: Sequence[int]) -> bool:
    parse = world.grammar.parse(question)
    return parse is not None and parse.is_question


def evaluate_scene(
    qbot: QBot,
    abot: ABot,
    world: World,
    scene: Scene,
    gallery: NDArray[np.float64],
    gt_index: int,
    settings: EvalSettings,
) -> SceneResult:
    """Greedy episode percentiles and answer ranks for one gallery scene."""
    with no_grad():
        trace = run_dialog_episode(qbot, abot, world, scene, 0, settings.rounds, "eval", options=settings.options)
        percentiles = [image_retrieval_percentile(trace.y0.values, gallery, gt_index)]
        percentiles += [image_retrieval_percentile(record.y.values, gallery, gt_index) for record in trace.rounds]
        transcript = trace.transcript()

        if settings.context == "oracle":
            exchanges = world.oracle_dialog(scene, settings.rounds)
        else:
            exchanges = list(transcript.exchanges)
        contexts = replay_contexts(None, abot, scene, exchanges, settings.options)
        ranks = RankList()
        for round_index, (context, (question, _)) in enumerate(zip(contexts, exchanges, strict=True)):
            if not _oracle_form(world, question):
                continue
            assert context.e_a is not None
            candidates, gt = world.candidate_answers(
                scene, question, settings.n_candidates, candidate_seed(settings.seed, scene.scene_id, round_index)
            )
            ranks.add(round_index, rank_candidates(abot, context.e_a, candidates, gt))
    return SceneResult(scene.scene_id, percentiles, ranks, transcript)


def percentile_curve(
    qbot: QBot, abot: ABot, world: World, scenes: Sequence[Scene], rounds: int, options: EpisodeOptions | None = None
) -> PercentileCurve:
    """Mean retrieval percentile of y_0..y_T over ``scenes``, each ranked against all of ``scenes``."""
    if len(scenes) < 2:
        raise EvaluationError(f"percentile curve needs at least 2 scenes, got {len(scenes)}")
    gallery = np.stack([scene.y_gt.values for scene in scenes])
    rows = []
    with no_grad():
        for index, scene in enumerate(scenes):
            trace = run_dialog_episode(qbot, abot, world, scene, 0, rounds, "eval", options=options)
            predictions = [trace.y0, *(record.y for record in trace.rounds)]
            rows.append([image_retrieval_percentile(y.values, gallery, index) for y in predictions])
    return PercentileCurve.from_rows(rows)


@dataclass(frozen=True, slots=True)
class OracleFit:
    """How closely a pair reproduces the oracle dialogs: argmax token accuracy (%) and final-round image MSE."""

    question_accuracy: float
    answer_accuracy: float
    final_mse: float


def oracle_fit(
    qbot: QBot, abot: ABot, world: World, scenes: Sequence[Scene], rounds: int, options: EpisodeOptions | None = None
) -> OracleFit:
    """Teacher-force the oracle dialog of every scene and score both decoders and the final image guess."""
    if not scenes:
        raise EvaluationError("no scenes to measure the oracle fit on")
    q_hits = q_total = a_hits = a_total = 0
    losses = []
    with no_grad():
        for scene in scenes:
            exchanges = world.oracle_dialog(scene, rounds)
            for context, (question, answer) in zip(
                replay_contexts(qbot, abot, scene, exchanges, options), exchanges, strict=True
            ):
                assert context.e_q is not None and context.e_a is not None
                hits, n = qbot.decoder.token_hits(qbot.params, context.e_q, with_stop(question, qbot.dims.q_max_len))
                q_hits, q_total = q_hits + hits, q_total + n
                hits, n = abot.decoder.token_hits(abot.params, context.e_a, with_stop(answer, abot.dims.a_max_len))
                a_hits, a_total = a_hits + hits, a_total + n
            trace = run_dialog_episode(qbot, None, world, scene, rounds, rounds, "eval", options=options)
            losses.append(trace.rounds[-1].image_loss.item())
    return OracleFit(
        question_accuracy=100.0 * q_hits / max(q_total, 1),
        answer_accuracy=100.0 * a_hits / max(a_total, 1),
        final_mse=float(np.mean(losses)),
    )


def _report(
    system: str,
    results: Sequence[SceneResult],
    world: World,
    scenes: Sequence[Scene],
    settings: EvalSettings,
    reference: tuple[QBot, ABot] | None,
) -> MetricsReport:
    ranks = RankList()
    for result in results:
        ranks.extend(result.ranks)
    if not ranks.flat():
        raise EvaluationError("no oracle-form questions to rank answers for")
    retrieval = answer_retrieval_metrics(ranks, settings.recall_k, strict=settings.recall_strict)
    curve = PercentileCurve.from_rows([result.percentiles for result in results])
    transcripts = [result.transcript for result in results]
    language = language_quality_report(
        transcripts, world, {scene.scene_id: scene for scene in scenes}, reference, settings.options
    )
    return MetricsReport(
        system=system,
        mrr=retrieval.mrr,
        mean_rank=retrieval.mean_rank,
        recall_at_k=retrieval.recall_at_k,
        k=settings.recall_k,
        percentile_by_round=curve.mean,
        percentile_std=curve.std,
        percentile_n=curve.n,
        grammar_rate_q=language.grammar_rate_q,
        grammar_rate_a=language.grammar_rate_a,
        relevance_rate_q=language.relevance_rate_q,
        consistency_rate_a=language.consistency_rate_a,
        drift_perplexity=language.drift_perplexity,
        distinct_1=language.distinct_1,
        distinct_2=language.distinct_2,
        n_scenes=len(results),
        context=settings.context,
        samples={
            "final_percentile": [result.percentiles[-1] for result in results],
            "grammar_q": language.per_scene_grammar_q,
            "grammar_a": language.per_scene_grammar_a,
            "answer_mean_rank": [
                float(np.mean(result.ranks.flat())) if result.ranks.flat() else float(settings.n_candidates)
                for result in results
            ],
        },
    )


async def evaluate_async(
    qbot: QBot,
    abot: ABot,
    world: World,
    scenes: Sequence[Scene],
    settings: EvalSettings,
    *,
    system: str = "sl",
    reference: tuple[QBot, ABot] | None = None,
    workers: int = 4,
) -> EvaluationResult:
    """
    Evaluate every scene in a worker thread and reduce the results in scene
    order. ``scenes`` is also the retrieval gallery.
    """
    if len(scenes) < 2:
        raise EvaluationError(f"evaluation needs a gallery of at least 2 scenes, got {len(scenes)}")
    gallery = np.stack([scene.y_gt.values for scene in scenes])
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="madf-eval") as executor:
        futures = [
            loop.run_in_executor(executor, evaluate_scene, qbot, abot, world, scene, gallery, index, settings)
            for index, scene in enumerate(scenes)
        ]
        results = list(await asyncio.gather(*futures))
    report = _report(system, results, world, scenes, settings, reference)
    logger.info(
        "Evaluated %s on %d scenes: MRR %.4f, R@%d %.2f, final percentile %.2f, question grammar %.1f%%",
        system,
        report.n_scenes,
        report.mrr,
        report.k,
        report.recall_at_k,
        report.percentile_by_round[-1],
        report.grammar_rate_q,
    )
    return EvaluationResult(report, [result.transcript for result in results])


def evaluate(
    qbot: QBot,
    abot: ABot,
    world: World,
    scenes: Sequence[Scene],
    settings: EvalSettings,
    *,
    system: str = "sl",
    reference: tuple[QBot, ABot] | None = None,
    workers: int = 4,
) -> EvaluationResult:
    """Synchronous wrapper around :func:`evaluate_async`."""
    return asyncio.run(
        evaluate_async(qbot, abot, world, scenes, settings, system=system, reference=reference, workers=workers)
    )
