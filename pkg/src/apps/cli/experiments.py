"""
Seeded acceptance experiments.

For every seed a fresh dataset is generated, the four systems are trained
in memory and evaluated on the test gallery, and the per-seed outcomes are
checked against the expected qualitative shape: supervised fit of the
oracle, the percentile curves of the supervised and single-pair systems,
the grammar drop of a lone pair and what the communities recover.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from apps.evaluation.runner import EvalSettings, MetricsReport, evaluate, oracle_fit
from apps.evaluation.stats import mann_whitney_u
from apps.training.config import SYSTEMS, RunConfig
from apps.training.episode import EpisodeOptions
from apps.training.loop import MemorySink, TrainingState, train
from apps.world.scenes import Dataset, generate_dataset

from .runs import run_root

logger = logging.getLogger(__name__)

RESULTS_NAME = "experiments.json"
COMMUNITIES = ("rl-1q3a", "rl-3q1a")
SEED_QUORUM = 0.8

TOKEN_ACCURACY_MIN = 95.0
MSE_RATIO_MAX = 0.25
CURVE_TOLERANCE = 1.0
FLAT_CURVE_SPAN = 2.0
GRAMMAR_DROP_MIN = 10.0
GRAMMAR_GAIN_MIN = 5.0
SIGNIFICANCE = 0.05
PERCENTILE_GAP_MAX = 3.0


def experiments_path(run_id: str) -> Path:
    return run_root() / "experiments" / run_id / RESULTS_NAME


@dataclass(slots=True)
class SystemOutcome:
    system: str
    final_percentile: float
    percentile_by_round: list[float]
    grammar_rate: float
    reward_by_epoch: list[float]
    report: dict[str, Any]


@dataclass(slots=True)
class SeedOutcome:
    seed: int
    question_accuracy: float
    answer_accuracy: float
    initial_final_mse: float
    trained_final_mse: float
    systems: dict[str, SystemOutcome] = field(default_factory=dict)

    @property
    def mse_ratio(self) -> float:
        return self.trained_final_mse / self.initial_final_mse if self.initial_final_mse > 0 else math.inf


@dataclass(frozen=True, slots=True)
class Criterion:
    name: str
    passed: bool
    detail: dict[str, Any]


def build_dataset(config: RunConfig) -> Dataset:
    return generate_dataset(
        config.build_schema(),
        config.seed,
        config.n_train,
        config.n_val,
        config.n_test,
        orthonormal=config.mixing == "orthonormal",
    )


def grammar_rate(report: MetricsReport) -> float:
    """Share of grammatical utterances over both bots, in percent."""
    return (report.grammar_rate_q + report.grammar_rate_a) / 2.0


def reward_by_epoch(rows: Sequence[dict[str, Any]]) -> list[float]:
    """Mean batch reward of every RL epoch, in epoch order."""
    epochs: dict[int, list[float]] = {}
    for row in rows:
        if row["phase"] == "rl":
            epochs.setdefault(int(row["epoch"]), []).append(float(row["mean_reward"]))
    return [float(np.mean(epochs[epoch])) for epoch in sorted(epochs)]


def run_seed(config: RunConfig, seed: int, *, workers: int = 4) -> SeedOutcome:
    """Train and evaluate every system on one seed."""
    config = config.with_overrides(seed=seed)
    dataset = build_dataset(config)
    world = dataset.world
    options = EpisodeOptions.from_config(config)
    settings = EvalSettings.from_config(config)

    untrained = TrainingState(config.for_system("sl"), world)
    initial = oracle_fit(untrained.qbots[0], untrained.abots[0], world, dataset.val, config.rounds, options)

    outcome: SeedOutcome | None = None
    reference = None
    for system in SYSTEMS:
        logger.info("Seed %d: training %s", seed, system)
        sink = MemorySink()
        state = train(config.for_system(system), dataset, sink)
        qbot, abot = state.qbots[0], state.abots[0]
        if system == "sl":
            fit = oracle_fit(qbot, abot, world, dataset.val, config.rounds, options)
            outcome = SeedOutcome(seed, fit.question_accuracy, fit.answer_accuracy, initial.final_mse, fit.final_mse)
            reference = (qbot, abot)
        assert outcome is not None
        report = evaluate(
            qbot,
            abot,
            world,
            dataset.test,
            settings,
            system=system,
            reference=None if system == "sl" else reference,
            workers=workers,
        ).report
        outcome.systems[system] = SystemOutcome(
            system=system,
            final_percentile=report.percentile_by_round[-1],
            percentile_by_round=report.percentile_by_round,
            grammar_rate=grammar_rate(report),
            reward_by_epoch=reward_by_epoch(sink.rows),
            report=report.to_dict(),
        )
    assert outcome is not None
    return outcome


def _quorum(flags: Sequence[bool]) -> tuple[bool, int, int]:
    needed = math.ceil(SEED_QUORUM * len(flags))
    return sum(flags) >= needed, sum(flags), needed


def _curve_settles(curve: Sequence[float]) -> bool:
    """Rounds 1..T never rise by more than the tolerance from one round to the next."""
    return all(curve[t + 1] <= curve[t] + CURVE_TOLERANCE for t in range(1, len(curve) - 1))


def _curve_flat(curve: Sequence[float]) -> bool:
    return abs(curve[-1] - curve[1]) <= FLAT_CURVE_SPAN


def assess(outcomes: Sequence[SeedOutcome]) -> list[Criterion]:
    """Check the seeded outcomes; a per-seed property holds when at least 80% of seeds show it."""
    if not outcomes:
        return []
    seeds = [outcome.seed for outcome in outcomes]
    criteria = []

    fits = [
        outcome.question_accuracy > TOKEN_ACCURACY_MIN
        and outcome.answer_accuracy > TOKEN_ACCURACY_MIN
        and outcome.mse_ratio < MSE_RATIO_MAX
        for outcome in outcomes
    ]
    criteria.append(
        Criterion(
            "supervised_fit",
            all(fits),
            {
                "seeds": seeds,
                "question_accuracy": [o.question_accuracy for o in outcomes],
                "answer_accuracy": [o.answer_accuracy for o in outcomes],
                "mse_ratio": [o.mse_ratio for o in outcomes],
            },
        )
    )

    shapes = [
        _curve_settles(o.systems["sl"].percentile_by_round) and _curve_flat(o.systems["rl-1q1a"].percentile_by_round)
        for o in outcomes
    ]
    passed, count, needed = _quorum(shapes)
    criteria.append(
        Criterion("percentile_curves", passed, {"seeds": seeds, "per_seed": shapes, "count": count, "needed": needed})
    )

    drops = [o.systems["sl"].grammar_rate - o.systems["rl-1q1a"].grammar_rate for o in outcomes]
    passed, count, needed = _quorum([drop >= GRAMMAR_DROP_MIN for drop in drops])
    criteria.append(
        Criterion("single_pair_drift", passed, {"seeds": seeds, "drop": drops, "count": count, "needed": needed})
    )

    baseline_rates = [o.systems["rl-1q1a"].grammar_rate for o in outcomes]
    baseline_final = float(np.mean([o.systems["rl-1q1a"].final_percentile for o in outcomes]))
    for system in COMMUNITIES:
        rates = [o.systems[system].grammar_rate for o in outcomes]
        test = mann_whitney_u(rates, baseline_rates)
        gain = float(np.mean(rates)) - float(np.mean(baseline_rates))
        gap = float(np.mean([o.systems[system].final_percentile for o in outcomes])) - baseline_final
        criteria.append(
            Criterion(
                f"community_{system}",
                bool(gain >= GRAMMAR_GAIN_MIN and test.p_value < SIGNIFICANCE and abs(gap) <= PERCENTILE_GAP_MAX),
                {
                    "seeds": seeds,
                    "grammar_gain": gain,
                    "u": test.u,
                    "p_value": test.p_value,
                    "exact": test.exact,
                    "final_percentile_gap": gap,
                },
            )
        )
    return criteria


def results_document(config: RunConfig, outcomes: Sequence[SeedOutcome], criteria: Sequence[Criterion]) -> dict:
    return {
        "run_id": config.run_id,
        "config_hash": config.config_hash,
        "config": config.snapshot(),
        "seeds": [asdict(outcome) | {"mse_ratio": outcome.mse_ratio} for outcome in outcomes],
        "criteria": {criterion.name: {"passed": criterion.passed, **criterion.detail} for criterion in criteria},
    }


def write_results(path: Path, document: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)
