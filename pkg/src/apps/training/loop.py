"""
The two-phase training run.

Phase ``sl`` pretrains every pool member on oracle dialogs. Phase ``rl``
plays curriculum self-play: per batch one partner is drawn from each pool,
rounds 1..K stay supervised and the rest get policy-gradient updates.
All randomness is derived from (seed, phase, epoch, batch), so a run
resumed from an epoch checkpoint continues bitwise like an uninterrupted one.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Protocol

import numpy as np

from apps.agents.bots import ABot, QBot
from apps.evaluation.metrics import image_retrieval_percentile
from apps.numerics.optim import Optimizer, make_optimizer
from apps.numerics.tensor import no_grad
from apps.world.scenes import Dataset, Scene, World

from .curriculum import CurriculumSchedule, anneal_K
from .episode import EpisodeOptions, run_dialog_episode
from .errors import CheckpointSinkError
from .pool import AgentPool, check_pool_sizes, sample_partner
from .updates import BatchStats, EMABaseline, curriculum_update, supervised_update

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .config import RunConfig

logger = logging.getLogger(__name__)

PHASES = ("sl", "rl")
_PHASE_CODE = {"sl": 1, "rl": 2}
_ROLE_CODE = {"qbot": 1, "abot": 2}


def member_seed(seed: int, role: str, index: int) -> int:
    return int(np.random.SeedSequence([seed, _ROLE_CODE[role], index]).generate_state(1)[0])


def phase_rng(seed: int, phase: str, epoch: int, batch: int | None = None) -> np.random.Generator:
    entropy = [seed, _PHASE_CODE[phase], epoch] + ([] if batch is None else [batch + 1])
    return np.random.default_rng(entropy)


def pool_rng(seed: int, role: str) -> np.random.Generator:
    """Fallback partner generator of a pool; the loop itself draws partners from each batch's generator."""
    return np.random.default_rng([seed, _ROLE_CODE[role]])


class CheckpointSink(Protocol):
    """Where a run sends its checkpoints, log rows and evaluation snapshots."""

    def save_checkpoint(self, phase: str, epoch: int, state: dict[str, NDArray[np.float64]]) -> None: ...

    def log_batch(self, row: dict[str, Any]) -> None: ...

    def log_snapshot(self, row: dict[str, Any]) -> None: ...


class MemorySink:
    """Keeps everything in lists."""

    def __init__(self) -> None:
        self.checkpoints: list[tuple[str, int, dict[str, NDArray[np.float64]]]] = []
        self.rows: list[dict[str, Any]] = []
        self.snapshots: list[dict[str, Any]] = []

    def save_checkpoint(self, phase: str, epoch: int, state: dict[str, NDArray[np.float64]]) -> None:
        self.checkpoints.append((phase, epoch, {name: values.copy() for name, values in state.items()}))

    def log_batch(self, row: dict[str, Any]) -> None:
        self.rows.append(row)

    def log_snapshot(self, row: dict[str, Any]) -> None:
        self.snapshots.append(row)


@dataclass(frozen=True, slots=True)
class ResumePoint:
    """The last completed epoch and its checkpoint body."""

    phase: str
    epoch: int
    state: dict[str, NDArray[np.float64]]


class TrainingState:
    """Both pools, one optimizer per member and the reward baseline."""

    def __init__(self, config: RunConfig, world: World) -> None:
        check_pool_sizes(config.q_pool, config.a_pool)
        self.config = config
        dims = config.agent_dims(len(world.vocab), world.embedding_dim)
        self.qbots: AgentPool[QBot] = AgentPool(
            "qbot",
            [QBot(dims, member_seed(config.seed, "qbot", i)) for i in range(config.q_pool)],
            pool_rng(config.seed, "qbot"),
        )
        self.abots: AgentPool[ABot] = AgentPool(
            "abot",
            [ABot(dims, member_seed(config.seed, "abot", i)) for i in range(config.a_pool)],
            pool_rng(config.seed, "abot"),
        )
        self.q_optimizers = self._optimizers(config.q_pool, config.lr_sl)
        self.a_optimizers = self._optimizers(config.a_pool, config.lr_sl)
        self.baseline = EMABaseline(config.baseline_decay)

    def _optimizers(self, count: int, lr: float) -> list[Optimizer]:
        return [make_optimizer(self.config.optimizer, lr, self.config.clip_norm) for _ in range(count)]

    def start_rl(self) -> None:
        """Fresh optimizers at the RL learning rate; with shared init every member copies member 0."""
        if self.config.shared_init:
            for pool in (self.qbots, self.abots):
                for i in range(1, len(pool)):
                    pool.members[i] = pool.members[0].clone()
        self.q_optimizers = self._optimizers(len(self.qbots), self.config.lr_rl)
        self.a_optimizers = self._optimizers(len(self.abots), self.config.lr_rl)

    def state_dict(self) -> dict[str, NDArray[np.float64]]:
        state: dict[str, NDArray[np.float64]] = {}
        for role, pool, optimizers in (
            ("qbot", self.qbots, self.q_optimizers),
            ("abot", self.abots, self.a_optimizers),
        ):
            for i, bot in enumerate(pool.members):
                state.update({f"{role}.{i}/{name}": values for name, values in bot.params.state().items()})
            for i, optimizer in enumerate(optimizers):
                state.update({f"opt.{role}.{i}/{key}": values for key, values in optimizer.state().items()})
        state["state/baseline"] = self.baseline.state()
        return state

    def load_state_dict(self, state: dict[str, NDArray[np.float64]]) -> None:
        groups: dict[str, dict[str, NDArray[np.float64]]] = {}
        for key, values in state.items():
            group, _, name = key.partition("/")
            groups.setdefault(group, {})[name] = values
        for role, pool, optimizers in (
            ("qbot", self.qbots, self.q_optimizers),
            ("abot", self.abots, self.a_optimizers),
        ):
            for i, bot in enumerate(pool.members):
                bot.params.load_state(groups.get(f"{role}.{i}", {}))
            for i, optimizer in enumerate(optimizers):
                optimizer.load_state(groups.get(f"opt.{role}.{i}", {}))
        if "baseline" in groups.get("state", {}):
            self.baseline.load_state(groups["state"]["baseline"])


def _batches(rng: np.random.Generator, size: int, batch_size: int) -> list[np.ndarray]:
    order = rng.permutation(size)
    return [order[start : start + batch_size] for start in range(0, size, batch_size)]


def _row(phase: str, epoch: int, batch: int, K: int, stats: list[BatchStats], started: float) -> dict[str, Any]:
    return {
        "phase": phase,
        "epoch": epoch,
        "batch": batch,
        "K": K,
        "mean_reward": float(np.mean([s.mean_reward for s in stats])),
        "qbot_mle": float(np.mean([s.qbot_mle for s in stats])),
        "qbot_mse": float(np.mean([s.qbot_mse for s in stats])),
        "abot_mle": float(np.mean([s.abot_mle for s in stats])),
        "wall_ms": round(1000.0 * (time.perf_counter() - started), 3),
    }


def validation_percentile(
    qbot: QBot, abot: ABot, world: World, scenes: list[Scene], rounds: int, options: EpisodeOptions
) -> float:
    """Mean final-round retrieval percentile of greedy self-play over ``scenes``."""
    gallery = np.stack([scene.y_gt.values for scene in scenes])
    percentiles = []
    with no_grad():
        for index, scene in enumerate(scenes):
            trace = run_dialog_episode(qbot, abot, world, scene, 0, rounds, "eval", options=options)
            percentiles.append(image_retrieval_percentile(trace.rounds[-1].y.values, gallery, index))
    return float(np.mean(percentiles))


def _save(sink: CheckpointSink, phase: str, epoch: int, state: TrainingState) -> None:
    try:
        sink.save_checkpoint(phase, epoch, state.state_dict())
    except OSError as e:
        raise CheckpointSinkError(f"could not save {phase}_{epoch}: {e}") from e
    logger.info("Saved checkpoint %s_%d", phase, epoch)


def train(
    config: RunConfig,
    dataset: Dataset,
    sink: CheckpointSink,
    resume: ResumePoint | None = None,
) -> TrainingState:
    """Run (or continue) both phases and return the final state."""
    world = dataset.world
    state = TrainingState(config, world)
    options = EpisodeOptions.from_config(config)
    schedule = CurriculumSchedule(config.curriculum_start_k, config.curriculum_epochs)
    rounds = config.rounds

    sl_start, rl_start = 0, 0
    if resume is not None:
        if resume.phase == "rl":
            state.start_rl()
            sl_start, rl_start = config.sl_epochs, resume.epoch + 1
        else:
            sl_start = resume.epoch + 1
        state.load_state_dict(resume.state)
        logger.info("Resuming %s after %s epoch %d", config.run_id, resume.phase, resume.epoch)

    # Phase 1: supervised pretraining, members in lockstep.
    sl_members = 1 if config.shared_init else max(config.q_pool, config.a_pool)
    for epoch in range(sl_start, config.sl_epochs):
        logger.info("SL epoch %d/%d", epoch + 1, config.sl_epochs)
        batches = _batches(phase_rng(config.seed, "sl", epoch), len(dataset.train), config.batch_size)
        for batch, indices in enumerate(batches):
            started = time.perf_counter()
            scenes = [dataset.train[int(i)] for i in indices]
            stats = []
            for member in range(sl_members):
                has_q, has_a = member < len(state.qbots), member < len(state.abots)
                stats.append(
                    supervised_update(
                        state.qbots[member] if has_q else None,
                        state.abots[member] if has_a else None,
                        world,
                        scenes,
                        rounds,
                        state.q_optimizers[member] if has_q else None,
                        state.a_optimizers[member] if has_a else None,
                        options,
                    )
                )
            sink.log_batch(_row("sl", epoch, batch, rounds, stats, started))
        _save(sink, "sl", epoch, state)

    if config.rl_epochs == 0:
        return state
    if resume is None or resume.phase == "sl":
        state.start_rl()

    # Phase 2: curriculum self-play against sampled partners.
    baseline = state.baseline if config.baseline == "ema" else None
    for epoch in range(rl_start, config.rl_epochs):
        K = min(anneal_K(schedule, epoch), rounds)
        logger.info("RL epoch %d/%d (K=%d)", epoch + 1, config.rl_epochs, K)
        batches = _batches(phase_rng(config.seed, "rl", epoch), len(dataset.train), config.batch_size)
        for batch, indices in enumerate(batches):
            started = time.perf_counter()
            rng = phase_rng(config.seed, "rl", epoch, batch)
            qi = sample_partner(state.qbots, rng)
            ai = sample_partner(state.abots, rng)
            stats = curriculum_update(
                state.qbots[qi],
                state.abots[ai],
                world,
                [dataset.train[int(i)] for i in indices],
                K,
                rounds,
                state.q_optimizers[qi],
                state.a_optimizers[ai],
                rng,
                gamma=config.gamma,
                image_weight=config.image_loss_weight,
                baseline=baseline,
                options=options,
            )
            row = _row("rl", epoch, batch, K, [stats], started)
            row.update(qbot=qi, abot=ai)
            sink.log_batch(row)
        if config.eval_every and (epoch + 1) % config.eval_every == 0 and len(dataset.val) >= 2:
            percentile = validation_percentile(state.qbots[0], state.abots[0], world, dataset.val, rounds, options)
            sink.log_snapshot({"phase": "rl", "epoch": epoch, "val_final_percentile": percentile})
            logger.info("RL epoch %d validation final-round percentile %.2f", epoch + 1, percentile)
        _save(sink, "rl", epoch, state)
    return state
