"""Tests for run configuration, curriculum, episodes, updates, pools and the training loop."""

import math

import numpy as np
import pytest
from scipy.stats import chisquare

from apps.agents.bots import ABot, QBot
from apps.agents.layers import with_stop
from apps.numerics.gradcheck import finite_difference_check
from apps.numerics.optim import make_optimizer
from apps.numerics.tensor import Tensor, backward, no_grad
from apps.training.config import SYSTEMS, RunConfig
from apps.training.curriculum import CurriculumSchedule, anneal_K
from apps.training.episode import (
    EpisodeOptions,
    compute_reward,
    image_distance,
    replay_contexts,
    returns,
    run_dialog_episode,
)
from apps.training.errors import ConfigError, PoolError, TrainingError
from apps.training.loop import MemorySink, ResumePoint, TrainingState, member_seed, phase_rng, train
from apps.training.pool import AgentPool, check_pool_sizes, sample_partner
from apps.training.updates import (
    EMABaseline,
    curriculum_update,
    reinforce_losses,
    reinforce_update,
    supervised_losses,
    supervised_update,
)
from apps.world.scenes import generate_dataset

# ─────────────────────────────── Fixtures ────────────────────────────────────

TINY = {
    "schema": "small",
    "n_train": 4,
    "n_val": 2,
    "n_test": 4,
    "rounds": 3,
    "batch_size": 2,
    "sl_epochs": 1,
    "rl_epochs": 2,
    "embed_dim": 3,
    "hidden_dim": 4,
    "fusion_dim": 3,
    "fusion_layers": 1,
    "q_max_len": 4,
    "a_max_len": 3,
    "curriculum_start_k": 2,
    "curriculum_epochs": 2,
    "eval_every": 1,
    "n_candidates": 4,
    "recall_k": 2,
    "lr_sl": 0.01,
    "lr_rl": 0.01,
}


@pytest.fixture
def config() -> RunConfig:
    """A run small enough to train in well under a second."""
    return RunConfig(**TINY)


@pytest.fixture
def dataset(config: RunConfig):
    return generate_dataset(config.build_schema(), config.seed, config.n_train, config.n_val, config.n_test)


@pytest.fixture
def bots(config: RunConfig, dataset) -> tuple[QBot, ABot]:
    world = dataset.world
    dims = config.agent_dims(len(world.vocab), world.embedding_dim)
    return QBot(dims, seed=1), ABot(dims, seed=2)


# ───────────────────────────── Configuration ─────────────────────────────────


class TestRunConfig:
    """KEY=VALUE parsing, validation and the canonical snapshot."""

    def test_defaults_are_valid(self) -> None:
        config = RunConfig()
        assert config.rounds == 10
        assert config.curriculum_start_k == 9
        assert config.reward_sign == "eq1"

    def test_short_dialog_keeps_default_curriculum(self) -> None:
        config = RunConfig(rounds=5)
        assert (config.rounds, config.curriculum_start_k) == (5, 9)

    def test_from_text(self) -> None:
        text = "# tiny run\n\nROUNDS=4\nlr_sl = 1e-2\nTRUNCATE_HISTORY=no\nSCHEMA=small\nCURRICULUM_START_K=3\n"
        config = RunConfig.from_text(text)
        assert config.rounds == 4
        assert config.lr_sl == pytest.approx(0.01)
        assert config.truncate_history is False
        assert config.schema == "small"

    def test_snapshot_round_trip(self, config: RunConfig) -> None:
        snapshot = config.snapshot()
        assert RunConfig.from_text(snapshot) == config
        keys = [line.partition("=")[0] for line in snapshot.splitlines()]
        assert keys == sorted(RunConfig.keys())

    def test_hash_tracks_values(self, config: RunConfig) -> None:
        assert config.config_hash == RunConfig(**TINY).config_hash
        assert config.with_overrides(seed=5).config_hash != config.config_hash
        assert config.with_overrides(seed=None) == config

    @pytest.mark.parametrize(
        ("text", "key"),
        [
            ("BOGUS=1", "BOGUS"),
            ("ROUNDS=ten", "ROUNDS"),
            ("SHARED_INIT=maybe", "SHARED_INIT"),
            ("GAMMA=lots", "GAMMA"),
            ("ROUNDS=3\nnot a pair", "line 2"),
        ],
    )
    def test_parse_errors_name_the_key(self, text: str, key: str) -> None:
        with pytest.raises(ConfigError) as excinfo:
            RunConfig.from_text(text)
        assert excinfo.value.key == key

    @pytest.mark.parametrize(
        ("overrides", "key"),
        [
            ({"q_pool": 3, "a_pool": 3}, "Q_POOL"),
            ({"gamma": 1.5}, "GAMMA"),
            ({"reward_sign": "sideways"}, "REWARD_SIGN"),
            ({"run_id": "a/b"}, "RUN_ID"),
            ({"curriculum_start_k": -1}, "CURRICULUM_START_K"),
            ({"q_max_len": 3}, "Q_MAX_LEN"),
            ({"schema": "small", "reveal_count": 3}, "REVEAL_COUNT"),
            ({"batch_size": 0}, "BATCH_SIZE"),
            ({"lr_rl": 0.0}, "LR_RL"),
            ({"baseline_decay": 1.0}, "BASELINE_DECAY"),
        ],
    )
    def test_validation(self, overrides: dict, key: str) -> None:
        with pytest.raises(ConfigError) as excinfo:
            RunConfig(**overrides)
        assert excinfo.value.key == key

    def test_for_system(self) -> None:
        config = RunConfig()
        assert {system: config.for_system(system).q_pool for system in SYSTEMS}["rl-3q1a"] == 3
        assert config.for_system("rl-1q3a").a_pool == 3
        assert config.for_system("sl").rl_epochs == 0
        with pytest.raises(ConfigError):
            config.for_system("rl-3q3a")

    def test_agent_dims(self, config: RunConfig) -> None:
        dims = config.agent_dims(24, 7)
        assert (dims.hidden_dim, dims.fusion_layers, dims.q_max_len) == (4, 1, 4)


# ─────────────────────────────── Curriculum ──────────────────────────────────


class TestCurriculum:
    def test_default_schedule(self) -> None:
        schedule = CurriculumSchedule()
        assert [anneal_K(schedule, epoch) for epoch in range(12)] == [9, 8, 7, 6, 5, 4, 3, 2, 1, 0, 0, 0]

    def test_short_schedule(self) -> None:
        schedule = CurriculumSchedule(start_K=4, anneal_epochs=3)
        assert [anneal_K(schedule, epoch) for epoch in range(3)] == [4, 2, 0]

    def test_invalid(self) -> None:
        with pytest.raises(ConfigError):
            CurriculumSchedule(anneal_epochs=1)
        with pytest.raises(ValueError, match="non-negative"):
            anneal_K(CurriculumSchedule(), -1)


# ──────────────────────────────── Rewards ────────────────────────────────────


class TestRewards:
    def test_reward_sign(self) -> None:
        assert compute_reward(4.0, 1.0) == 3.0
        assert compute_reward(1.0, 4.0) == -3.0
        assert compute_reward(4.0, 1.0, "alg1") == -3.0

    def test_negative_distance(self) -> None:
        with pytest.raises(TrainingError):
            compute_reward(-1.0, 0.0)

    @pytest.mark.parametrize(
        ("gamma", "expected"),
        [(1.0, [6.0, 5.0, 3.0]), (0.5, [2.75, 3.5, 3.0]), (0.0, [1.0, 2.0, 3.0])],
    )
    def test_returns(self, gamma: float, expected: list[float]) -> None:
        assert returns([1.0, 2.0, 3.0], gamma) == pytest.approx(expected)

    def test_returns_gamma_range(self) -> None:
        with pytest.raises(TrainingError):
            returns([1.0], 1.5)

    def test_distance_kinds(self) -> None:
        y, target = Tensor([3.0, 0.0]), Tensor([0.0, 4.0])
        assert image_distance(y, target) == 25.0
        assert image_distance(y, target, "euclidean") == 5.0


# ──────────────────────────────── Episodes ───────────────────────────────────


class TestEpisode:
    """Curriculum rollouts on a single scene."""

    def test_fully_supervised(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.train[0]
        trace = run_dialog_episode(qbot, abot, dataset.world, scene, K=3, rounds=3)
        oracle = dataset.world.oracle_dialog(scene, 3)
        assert [(r.q_tokens, r.a_tokens) for r in trace.rounds] == oracle
        assert all(r.supervised and r.q_mle is not None and r.a_mle is not None for r in trace.rounds)
        assert trace.rl_rounds == []
        assert len(trace.distances) == 4

    def test_rewards_telescope(self, dataset, bots) -> None:
        qbot, abot = bots
        trace = run_dialog_episode(qbot, abot, dataset.world, dataset.train[1], K=3, rounds=3)
        assert trace.telescoping_gap() == pytest.approx(0.0, abs=1e-12)
        assert trace.returns[0] == pytest.approx(math.fsum(trace.rewards))

    @pytest.mark.slow
    def test_rewards_telescope_over_random_episodes(self, dataset, bots) -> None:
        qbot, abot = bots
        rng = np.random.default_rng(11)
        for _ in range(1000):
            scene = dataset.train[int(rng.integers(len(dataset.train)))]
            options = EpisodeOptions(distance="euclidean" if rng.random() < 0.5 else "squared")
            K = int(rng.integers(0, 4))
            trace = run_dialog_episode(qbot, abot, dataset.world, scene, K=K, rounds=3, rng=rng, options=options)
            assert abs(trace.telescoping_gap()) < 1e-9

    def test_frozen_episode_loss_gradients(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.train[0]
        options = EpisodeOptions(truncate_history=False)

        def losses() -> tuple[Tensor, Tensor]:
            trace = run_dialog_episode(qbot, abot, dataset.world, scene, K=2, rounds=2, options=options)
            return supervised_losses(trace)

        assert finite_difference_check(lambda: losses()[0], qbot.params, max_entries=4) < 1e-4
        assert finite_difference_check(lambda: losses()[1], abot.params, max_entries=4) < 1e-4

    def test_alg1_sign_negates_rewards(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.train[0]
        eq1 = run_dialog_episode(qbot, abot, dataset.world, scene, K=3, rounds=3)
        alg1 = run_dialog_episode(
            qbot, abot, dataset.world, scene, K=3, rounds=3, options=EpisodeOptions(reward_sign="alg1")
        )
        assert alg1.rewards == pytest.approx([-r for r in eq1.rewards])

    def test_curriculum_split(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.train[2]
        trace = run_dialog_episode(qbot, abot, dataset.world, scene, K=1, rounds=3, rng=np.random.default_rng(0))
        assert [r.supervised for r in trace.rounds] == [True, False, False]
        assert (trace.rounds[0].q_tokens, trace.rounds[0].a_tokens) == dataset.world.oracle_dialog(scene, 1)[0]
        for record in trace.rl_rounds:
            assert record.q_logprobs
            assert record.a_logprobs
            assert record.q_mle is None

    def test_eval_mode_is_greedy(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.test[0]
        first = run_dialog_episode(qbot, abot, dataset.world, scene, K=0, rounds=3, mode="eval")
        second = run_dialog_episode(qbot, abot, dataset.world, scene, K=0, rounds=3, mode="eval")
        assert first.transcript() == second.transcript()

    def test_supervised_with_one_bot(self, dataset, bots) -> None:
        _, abot = bots
        trace = run_dialog_episode(None, abot, dataset.world, dataset.train[0], K=3, rounds=3)
        assert all(r.a_mle is not None and r.q_mle is None for r in trace.rounds)
        np.testing.assert_array_equal(trace.rounds[-1].y.values, np.zeros(7))

    @pytest.mark.parametrize(
        ("K", "with_q", "rng"),
        [(4, True, np.random.default_rng(0)), (1, False, np.random.default_rng(0)), (1, True, None)],
        ids=["K-above-rounds", "self-play-without-qbot", "sampling-without-rng"],
    )
    def test_invalid_episodes(self, dataset, bots, K: int, with_q: bool, rng) -> None:
        qbot, abot = bots
        with pytest.raises(TrainingError):
            run_dialog_episode(qbot if with_q else None, abot, dataset.world, dataset.train[0], K, 3, rng=rng)

    def test_replay_matches_episode(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.train[3]
        trace = run_dialog_episode(qbot, abot, dataset.world, scene, K=3, rounds=3)
        contexts = replay_contexts(qbot, abot, scene, dataset.world.oracle_dialog(scene, 3))
        for record, context in zip(trace.rounds, contexts, strict=True):
            q_target = with_stop(record.q_tokens, qbot.dims.q_max_len)
            a_target = with_stop(record.a_tokens, abot.dims.a_max_len)
            assert qbot.decoder.mle_loss(qbot.params, context.e_q, q_target).item() == pytest.approx(
                record.q_mle.item()
            )
            assert abot.decoder.mle_loss(abot.params, context.e_a, a_target).item() == pytest.approx(
                record.a_mle.item()
            )


# ──────────────────────────────── Updates ────────────────────────────────────


class TestLosses:
    def test_supervised_loss_terms(self, dataset, bots) -> None:
        qbot, abot = bots
        trace = run_dialog_episode(qbot, abot, dataset.world, dataset.train[0], K=3, rounds=3)
        q_loss, a_loss = supervised_losses(trace)
        q_mle = np.mean([r.q_mle.item() for r in trace.rounds])
        mse = np.mean([trace.y0_loss.item(), *(r.image_loss.item() for r in trace.rounds)])
        assert q_loss.item() == pytest.approx(q_mle + mse)
        assert a_loss.item() == pytest.approx(np.mean([r.a_mle.item() for r in trace.rounds]))

    def test_no_forced_rounds(self, dataset, bots) -> None:
        qbot, abot = bots
        trace = run_dialog_episode(qbot, abot, dataset.world, dataset.train[0], K=0, rounds=2, mode="eval")
        assert supervised_losses(trace) == (None, None)

    def test_reinforce_loss_terms(self, dataset, bots) -> None:
        qbot, abot = bots
        rng = np.random.default_rng(4)
        trace = run_dialog_episode(qbot, abot, dataset.world, dataset.train[0], K=1, rounds=3, rng=rng)
        q_loss, a_loss = reinforce_losses(trace, baseline=0.5, image_weight=2.0)
        q_terms, a_terms = [], []
        for r in trace.rl_rounds:
            q_logprob = sum(lp.item() for lp in r.q_logprobs)
            a_logprob = sum(lp.item() for lp in r.a_logprobs)
            q_terms.append(2.0 * r.image_loss.item() - (r.ret - 0.5) * q_logprob)
            a_terms.append(-(r.ret - 0.5) * a_logprob)
        assert q_loss.item() == pytest.approx(np.mean(q_terms))
        assert a_loss.item() == pytest.approx(np.mean(a_terms))

    @pytest.mark.slow
    @pytest.mark.parametrize("K", [0, 3])
    def test_full_episode_reaches_every_parameter(self, K: int) -> None:
        config = RunConfig(n_train=4, n_val=2, n_test=4, embed_dim=8, hidden_dim=8, fusion_dim=8)
        dataset = generate_dataset(config.build_schema(), config.seed, config.n_train, config.n_val, config.n_test)
        dims = config.agent_dims(len(dataset.world.vocab), dataset.world.embedding_dim)
        qbot, abot = QBot(dims, seed=1), ABot(dims, seed=2)
        trace = run_dialog_episode(
            qbot, abot, dataset.world, dataset.train[0], K=K, rounds=10, rng=np.random.default_rng(16)
        )
        q_sl, a_sl = supervised_losses(trace)
        q_rl, a_rl = reinforce_losses(trace)
        for bot, terms in ((qbot, (q_sl, q_rl)), (abot, (a_sl, a_rl))):
            loss = terms[1] if terms[0] is None else terms[0] + terms[1]
            bot.params.zero_grad()
            backward(loss)
            untouched = [name for name, tensor in bot.params.items() if not np.any(tensor.grad != 0.0)]
            assert untouched == [], f"{bot.role}: {untouched}"

    def test_ema_baseline(self) -> None:
        baseline = EMABaseline(decay=0.5)
        assert baseline.current() == 0.0
        baseline.update(2.0)
        baseline.update(4.0)
        assert baseline.current() == 3.0
        restored = EMABaseline(decay=0.5)
        restored.load_state(baseline.state())
        assert (restored.value, restored.initialized) == (3.0, True)


class TestUpdates:
    """Optimizer steps of each regime."""

    def test_supervised_update_lowers_mle(self, dataset, bots) -> None:
        qbot, abot = bots
        q_opt, a_opt = make_optimizer("adam", 0.02), make_optimizer("adam", 0.02)
        scenes = dataset.train[:2]
        first = supervised_update(qbot, abot, dataset.world, scenes, 3, q_opt, a_opt)
        for _ in range(15):
            last = supervised_update(qbot, abot, dataset.world, scenes, 3, q_opt, a_opt)
        assert last.qbot_mle < first.qbot_mle
        assert last.abot_mle < first.abot_mle
        assert first.rl_rounds == 0

    def test_curriculum_update_moves_both_bots(self, dataset, bots) -> None:
        qbot, abot = bots
        before_q = qbot.params["embed"].numpy()
        before_a = abot.params["embed"].numpy()
        stats = curriculum_update(
            qbot,
            abot,
            dataset.world,
            dataset.train[:2],
            1,
            3,
            make_optimizer("sgd", 0.1),
            make_optimizer("sgd", 0.1),
            np.random.default_rng(3),
        )
        assert stats.rl_rounds == 4
        assert not np.array_equal(before_q, qbot.params["embed"].values)
        assert not np.array_equal(before_a, abot.params["embed"].values)

    def test_positive_return_raises_sampled_probability(self, dataset, bots) -> None:
        qbot, abot = bots
        scene = dataset.train[0]
        options = EpisodeOptions(truncate_history=False)
        rng = np.random.default_rng(13)
        q_opt, a_opt = make_optimizer("sgd", 0.02), make_optimizer("sgd", 0.02)

        def sampled_logprobs(trace) -> tuple[float, float]:
            record = trace.rounds[-1]
            exchanges = [(r.q_tokens, r.a_tokens) for r in trace.rounds]
            with no_grad():
                context = replay_contexts(qbot, abot, scene, exchanges, options)[-1]
                q_tokens = with_stop(record.q_tokens, qbot.dims.q_max_len)
                a_tokens = with_stop(record.a_tokens, abot.dims.a_max_len)
                q = qbot.decoder.sequence_logprob(qbot.params, context.e_q, q_tokens)
                a = abot.decoder.sequence_logprob(abot.params, context.e_a, a_tokens)
            return q.item(), a.item()

        for step in range(1, 101):
            trace = run_dialog_episode(qbot, abot, dataset.world, scene, K=2, rounds=3, rng=rng, options=options)
            trace.rounds[-1].ret = 1.0
            before = sampled_logprobs(trace)
            reinforce_update(qbot, abot, [trace], q_opt, a_opt, image_weight=0.0)
            if step % 10 == 0:
                after = sampled_logprobs(trace)
                assert after[0] > before[0]
                assert after[1] > before[1]

    @pytest.mark.parametrize("kind", ["sgd", "adam"])
    def test_zero_return_leaves_abot_unchanged(self, dataset, bots, kind: str) -> None:
        qbot, abot = bots
        rng = np.random.default_rng(14)
        traces = [
            run_dialog_episode(qbot, abot, dataset.world, scene, K=0, rounds=3, rng=rng) for scene in dataset.train
        ]
        for trace in traces:
            for record in trace.rl_rounds:
                record.ret = 0.0
        before = abot.params.state()
        reinforce_update(qbot, abot, traces, make_optimizer(kind, 0.1), make_optimizer(kind, 0.1))
        for name, values in abot.params.state().items():
            np.testing.assert_array_equal(values, before[name])

    def test_reinforce_update_without_rl_rounds(self, dataset, bots) -> None:
        qbot, abot = bots
        trace = run_dialog_episode(qbot, abot, dataset.world, dataset.train[0], K=3, rounds=3)
        before = qbot.params["embed"].numpy()
        stats = reinforce_update(qbot, abot, [trace], make_optimizer("sgd", 0.1), make_optimizer("sgd", 0.1))
        assert stats.rl_rounds == 0
        np.testing.assert_array_equal(before, qbot.params["embed"].values)


# ────────────────────────────────── Pools ────────────────────────────────────


class TestPools:
    @pytest.mark.parametrize(("q_size", "a_size"), [(3, 3), (0, 1), (1, 0)])
    def test_pool_sizes(self, q_size: int, a_size: int) -> None:
        with pytest.raises(PoolError):
            check_pool_sizes(q_size, a_size)

    def test_empty_pool(self) -> None:
        with pytest.raises(PoolError):
            AgentPool("abot", [], np.random.default_rng(0))

    def test_generator_is_required(self, bots) -> None:
        _, abot = bots
        with pytest.raises(TypeError):
            AgentPool("abot", [abot])

    def test_sampling(self, bots) -> None:
        _, abot = bots
        pool = AgentPool("abot", [abot, abot.clone(), abot.clone()], np.random.default_rng(0))
        draws = [sample_partner(pool, np.random.default_rng(seed)) for seed in range(30)]
        assert set(draws) == {0, 1, 2}
        assert draws == [sample_partner(pool, np.random.default_rng(seed)) for seed in range(30)]

    def test_sampling_is_uniform(self, bots) -> None:
        _, abot = bots
        pool = AgentPool("abot", [abot, abot.clone(), abot.clone()], np.random.default_rng(0))
        rng = np.random.default_rng(12)
        counts = np.bincount([sample_partner(pool, rng) for _ in range(30_000)], minlength=3)
        assert chisquare(counts).pvalue > 0.001

    def test_pool_generator_used_without_rng(self, bots) -> None:
        _, abot = bots
        members = [abot, abot.clone()]
        first = AgentPool("abot", members, np.random.default_rng(5))
        second = AgentPool("abot", members, np.random.default_rng(5))
        assert [sample_partner(first) for _ in range(20)] == [sample_partner(second) for _ in range(20)]

    def test_update_touches_only_the_sampled_member(self, config: RunConfig, dataset) -> None:
        state = TrainingState(config.for_system("rl-1q3a"), dataset.world)
        state.start_rl()
        before = [bot.params.state() for bot in state.abots.members]
        curriculum_update(
            state.qbots[0],
            state.abots[1],
            dataset.world,
            dataset.train[:2],
            1,
            3,
            state.q_optimizers[0],
            state.a_optimizers[1],
            np.random.default_rng(15),
        )
        for index in (0, 2):
            for name, values in state.abots[index].params.state().items():
                np.testing.assert_array_equal(values, before[index][name])
        assert any(
            not np.array_equal(values, before[1][name]) for name, values in state.abots[1].params.state().items()
        )

    def test_index_out_of_range(self, bots) -> None:
        qbot, _ = bots
        with pytest.raises(PoolError):
            AgentPool("qbot", [qbot], np.random.default_rng(0))[1]


# ────────────────────────────── Training loop ────────────────────────────────


class TestTrainingState:
    def test_member_seeds_differ(self) -> None:
        seeds = {member_seed(0, role, i) for role in ("qbot", "abot") for i in range(3)}
        assert len(seeds) == 6

    def test_phase_rng_reproducible(self) -> None:
        assert phase_rng(1, "rl", 2, 0).integers(1 << 30) == phase_rng(1, "rl", 2, 0).integers(1 << 30)
        assert phase_rng(1, "rl", 2).integers(1 << 30) != phase_rng(1, "sl", 2).integers(1 << 30)

    def test_state_dict_round_trip(self, config: RunConfig, dataset) -> None:
        state = TrainingState(config.for_system("rl-1q3a"), dataset.world)
        body = state.state_dict()
        assert {"qbot.0/embed", "abot.2/embed", "state/baseline"} <= set(body)
        other = TrainingState(config.for_system("rl-1q3a").with_overrides(seed=99), dataset.world)
        other.load_state_dict(body)
        np.testing.assert_array_equal(other.abots[2].params["embed"].values, state.abots[2].params["embed"].values)

    def test_shared_init(self, config: RunConfig, dataset) -> None:
        state = TrainingState(config.for_system("rl-3q1a").with_overrides(shared_init=True), dataset.world)
        state.start_rl()
        np.testing.assert_array_equal(state.qbots[2].params["embed"].values, state.qbots[0].params["embed"].values)
        assert state.qbots[2] is not state.qbots[0]


class TestTrain:
    """The two-phase loop with an in-memory sink."""

    def test_phases_and_logs(self, config: RunConfig, dataset) -> None:
        sink = MemorySink()
        train(config, dataset, sink)
        assert [(phase, epoch) for phase, epoch, _ in sink.checkpoints] == [("sl", 0), ("rl", 0), ("rl", 1)]
        assert len(sink.rows) == 6
        assert [row["K"] for row in sink.rows if row["phase"] == "rl"] == [2, 2, 0, 0]
        assert [row["epoch"] for row in sink.snapshots] == [0, 1]
        assert all(0.0 <= row["val_final_percentile"] <= 100.0 for row in sink.snapshots)

    def test_curriculum_clamped_to_rounds(self, config: RunConfig, dataset) -> None:
        sink = MemorySink()
        train(config.with_overrides(curriculum_start_k=5), dataset, sink)
        assert [row["K"] for row in sink.rows if row["phase"] == "rl"] == [3, 3, 0, 0]

    def test_sl_only(self, config: RunConfig, dataset) -> None:
        sink = MemorySink()
        train(config.for_system("sl"), dataset, sink)
        assert [phase for phase, _, _ in sink.checkpoints] == ["sl"]

    def test_pool_partners_logged(self, config: RunConfig, dataset) -> None:
        sink = MemorySink()
        train(config.for_system("rl-1q3a"), dataset, sink)
        rl_rows = [row for row in sink.rows if row["phase"] == "rl"]
        assert all(row["qbot"] == 0 and 0 <= row["abot"] < 3 for row in rl_rows)

    def test_seeded_runs_match(self, config: RunConfig, dataset) -> None:
        first, second = MemorySink(), MemorySink()
        train(config, dataset, first)
        train(config, dataset, second)
        for name, values in first.checkpoints[-1][2].items():
            np.testing.assert_array_equal(values, second.checkpoints[-1][2][name])

    @pytest.mark.slow
    @pytest.mark.parametrize("resume_at", [("sl", 0), ("rl", 0)])
    def test_resume_matches_uninterrupted(self, config: RunConfig, dataset, resume_at: tuple[str, int]) -> None:
        config = config.with_overrides(baseline="ema")
        full = MemorySink()
        train(config, dataset, full)
        saved = {(phase, epoch): body for phase, epoch, body in full.checkpoints}

        resumed = MemorySink()
        train(config, dataset, resumed, ResumePoint(*resume_at, saved[resume_at]))
        final = resumed.checkpoints[-1]
        assert final[:2] == ("rl", 1)
        for name, values in saved[("rl", 1)].items():
            np.testing.assert_array_equal(final[2][name], values)
