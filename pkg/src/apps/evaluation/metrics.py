"""
Ranking metrics.

Both rankers are pessimistic: a tie with the ground truth counts against it,
so constant scores or predictions never look good.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import EvaluationError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike


@dataclass(slots=True)
class RankList:
    """Ground-truth answer ranks, grouped by round."""

    by_round: list[list[int]] = field(default_factory=list)

    def add(self, round_index: int, rank: int) -> None:
        while len(self.by_round) <= round_index:
            self.by_round.append([])
        self.by_round[round_index].append(rank)

    def extend(self, other: RankList) -> None:
        for round_index, ranks in enumerate(other.by_round):
            for rank in ranks:
                self.add(round_index, rank)

    def flat(self) -> list[int]:
        return [rank for ranks in self.by_round for rank in ranks]


@dataclass(frozen=True, slots=True)
class RetrievalMetrics:
    mrr: float
    mean_rank: float
    recall_at_k: float


def pessimistic_rank(scores: ArrayLike, gt_index: int) -> int:
    """1 + the number of other entries scoring at least as high as the ground truth."""
    values = np.asarray(scores, dtype=np.float64)
    if not 0 <= gt_index < values.size:
        raise EvaluationError(f"ground-truth index {gt_index} outside {values.size} candidates")
    others = np.delete(values, gt_index)
    return 1 + int(np.count_nonzero(others >= values[gt_index]))


def answer_retrieval_metrics(ranks: RankList | Iterable[int], k: int = 10, *, strict: bool = False) -> RetrievalMetrics:
    """MRR, mean rank and recall@k in percent; ``strict`` counts rank < k instead of rank <= k."""
    flat = ranks.flat() if isinstance(ranks, RankList) else list(ranks)
    if not flat:
        raise EvaluationError("no ranks to summarise")
    values = np.asarray(flat, dtype=np.float64)
    hits = values < k if strict else values <= k
    return RetrievalMetrics(
        mrr=float(np.mean(1.0 / values)),
        mean_rank=float(np.mean(values)),
        recall_at_k=100.0 * float(np.mean(hits)),
    )


def image_retrieval_rank(y_pred: ArrayLike, gallery: ArrayLike, gt_index: int) -> int:
    """1 + the number of other gallery members at most as far (squared Euclidean) as the ground truth."""
    members = np.asarray(gallery, dtype=np.float64)
    if members.ndim != 2 or members.shape[0] == 0:
        raise EvaluationError("gallery must be a non-empty (N, D) array")
    diff = members - np.asarray(y_pred, dtype=np.float64)
    return pessimistic_rank(-np.einsum("ij,ij->i", diff, diff), gt_index)


def image_retrieval_percentile(y_pred: ArrayLike, gallery: ArrayLike, gt_index: int) -> float:
    """100 (N - r) / (N - 1): best rank maps to 100, worst to 0."""
    size = len(gallery)
    if size < 2:
        raise EvaluationError(f"percentile needs a gallery of at least 2, got {size}")
    rank = image_retrieval_rank(y_pred, gallery, gt_index)
    return 100.0 * (size - rank) / (size - 1)


def distinct_n(utterances: Sequence[Sequence[int]], n: int) -> float:
    """Unique n-grams over total n-grams, pooled across utterances; 0 when there are none."""
    grams = [tuple(tokens[i : i + n]) for tokens in utterances for i in range(len(tokens) - n + 1)]
    return len(set(grams)) / len(grams) if grams else 0.0
