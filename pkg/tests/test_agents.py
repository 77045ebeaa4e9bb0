"""Unit tests for the Q-Bot and A-Bot networks and their shared layers."""

import numpy as np
import pytest

from apps.agents.bots import ABot, AgentDims, QBot, qbot_encode
from apps.agents.errors import AgentError
from apps.agents.layers import Decoder, Utterance, attend_history, visible_history, with_stop
from apps.numerics import ops
from apps.numerics.gradcheck import finite_difference_check
from apps.numerics.params import ParamStore
from apps.numerics.tensor import Tensor, backward
from apps.world.scenes import World
from apps.world.schema import STOP_ID, small_schema

# ─────────────────────────────── Fixtures ────────────────────────────────────


@pytest.fixture
def world() -> World:
    return World(small_schema())


@pytest.fixture
def dims(world: World) -> AgentDims:
    """Tiny dimensions so finite differences stay fast."""
    return AgentDims(
        vocab_size=len(world.vocab),
        image_dim=world.embedding_dim,
        embed_dim=3,
        hidden_dim=4,
        fusion_dim=3,
        fusion_layers=2,
        q_max_len=5,
        a_max_len=4,
    )


@pytest.fixture
def qbot(dims: AgentDims) -> QBot:
    return QBot(dims, seed=3)


@pytest.fixture
def abot(dims: AgentDims) -> ABot:
    return ABot(dims, seed=4)


def _words(world: World, text: str) -> tuple[int, ...]:
    return world.vocab.encode(text.split())


# ─────────────────────────────── Dimensions ──────────────────────────────────


class TestAgentDims:
    @pytest.mark.parametrize(
        "overrides",
        [{"hidden_dim": 0}, {"vocab_size": 0}, {"fusion_layers": 0}, {"q_max_len": 0}, {"a_max_len": 0}],
    )
    def test_invalid(self, overrides: dict) -> None:
        with pytest.raises(AgentError):
            AgentDims(**{"vocab_size": 10, "image_dim": 4, **overrides})

    def test_defaults(self) -> None:
        dims = AgentDims(vocab_size=10, image_dim=4)
        assert dims.fusion_layers == 2
        assert dims.q_max_len > dims.a_max_len


# ───────────────────────────────── Q-Bot ─────────────────────────────────────


class TestQBot:
    """Fact and caption encoders, fusion and image regression."""

    def test_parameter_layout(self, qbot: QBot, dims: AgentDims) -> None:
        assert {"fusion.0.W", "fusion.1.W", "regression.W", "attention.v", "embed"} <= set(qbot.params)
        assert qbot.params["fusion.0.W"].shape == (dims.fusion_dim, 3 * dims.hidden_dim)
        assert qbot.params["regression.W"].shape == (dims.image_dim, 3 * dims.hidden_dim)

    def test_encode_shapes(self, world: World, qbot: QBot, dims: AgentDims) -> None:
        caption = qbot.encode_caption(_words(world, "a red thing"))
        fact = qbot.encode_fact(_words(world, "what shape ?"), _words(world, "cube"))
        e, state = qbot.encode(caption, fact, [fact])
        assert e.shape == (dims.fusion_dim,)
        assert state.shape == (3 * dims.hidden_dim,)
        assert qbot.predict_image(state).shape == (dims.image_dim,)

    def test_round_zero_uses_zero_fact(self, world: World, qbot: QBot) -> None:
        caption = qbot.encode_caption(_words(world, "a red thing"))
        _, state = qbot.encode(caption, qbot.zero_fact(), [])
        np.testing.assert_array_equal(state.values[4:], np.zeros(8))

    def test_qbot_encode_matches_encode(self, world: World, qbot: QBot) -> None:
        tokens = _words(world, "a blue thing")
        fact = qbot.encode_fact(_words(world, "what size ?"), _words(world, "small"))
        e, _ = qbot_encode(qbot, tokens, fact, [fact])
        expected, _ = qbot.encode(qbot.encode_caption(tokens), fact, [fact])
        np.testing.assert_allclose(e.values, expected.values)

    def test_empty_caption(self, qbot: QBot) -> None:
        with pytest.raises(AgentError):
            qbot.encode_caption(())

    def test_same_seed_same_weights(self, dims: AgentDims) -> None:
        first, second = QBot(dims, seed=9), QBot(dims, seed=9)
        for name, tensor in first.params.items():
            np.testing.assert_array_equal(tensor.values, second.params[name].values)

    def test_clone_is_independent(self, qbot: QBot) -> None:
        twin = qbot.clone()
        np.testing.assert_array_equal(twin.params["embed"].values, qbot.params["embed"].values)
        twin.params["embed"].values[0, 0] += 1.0
        assert twin.params["embed"].values[0, 0] != qbot.params["embed"].values[0, 0]

    def test_gradients(self, world: World, qbot: QBot) -> None:
        caption_tokens = _words(world, "a red thing")
        target = Tensor(world.scene_embedding((0, 1, 1)).values)

        def objective() -> Tensor:
            first = qbot.encode_fact(_words(world, "what shape ?"), _words(world, "sphere"))
            second = qbot.encode_fact(_words(world, "is it large ?"), _words(world, "yes"))
            e, state = qbot_encode(qbot, caption_tokens, second, [first, second])
            error = qbot.predict_image(state) - target
            return ops.total(error * error) + qbot.decoder.mle_loss(qbot.params, e, _words(world, "what size ?"))

        assert finite_difference_check(objective, qbot.params, max_entries=4) < 1e-4


# ───────────────────────────────── A-Bot ─────────────────────────────────────


class TestABot:
    """Question and history encoders fused with the image."""

    def test_encode_shape(self, world: World, abot: ABot, dims: AgentDims) -> None:
        image = world.scene_embedding((1, 0, 0))
        e = abot.abot_encode(_words(world, "what shape ?"), [], _words(world, "a blue thing"), image)
        assert e.shape == (dims.fusion_dim,)

    def test_abot_encode_puts_caption_first(self, world: World, abot: ABot) -> None:
        image = world.scene_embedding((1, 0, 0))
        caption = _words(world, "a blue thing")
        question = _words(world, "is it cube ?")
        fact = abot.encode_fact(_words(world, "what size ?"), _words(world, "small"))
        e = abot.abot_encode(question, [fact], caption, image)
        expected = abot.encode(abot.encode_question(question), [abot.encode_caption(caption), fact], image)
        np.testing.assert_allclose(e.values, expected.values)

    def test_image_shape_checked(self, world: World, abot: ABot) -> None:
        with pytest.raises(AgentError):
            abot.encode(abot.encode_question(_words(world, "what shape ?")), [], ops.zeros(3))

    def test_unknown_token(self, abot: ABot, dims: AgentDims) -> None:
        with pytest.raises(AgentError):
            abot.encode_question((dims.vocab_size,))

    def test_gradients(self, world: World, abot: ABot) -> None:
        image = world.scene_embedding((2, 1, 0))

        def objective() -> Tensor:
            fact = abot.encode_fact(_words(world, "what color ?"), _words(world, "green"))
            e = abot.abot_encode(_words(world, "is it sphere ?"), [fact], _words(world, "a small thing"), image)
            return abot.decoder.mle_loss(abot.params, e, with_stop(_words(world, "yes"), 4))

        assert finite_difference_check(objective, abot.params, max_entries=4) < 1e-4


# ─────────────────────────────── Attention ───────────────────────────────────


class TestAttention:
    def test_empty_history(self, qbot: QBot) -> None:
        summary, weights = attend_history(qbot.params, "attention", qbot.zero_fact(), [])
        np.testing.assert_array_equal(summary.values, np.zeros(4))
        assert weights.shape == (0,)

    def test_weights_form_distribution(self, world: World, qbot: QBot) -> None:
        facts = [
            qbot.encode_fact(_words(world, "what color ?"), _words(world, "red")),
            qbot.encode_fact(_words(world, "what shape ?"), _words(world, "cube")),
            qbot.encode_fact(_words(world, "is it small ?"), _words(world, "no")),
        ]
        summary, weights = attend_history(qbot.params, "attention", facts[-1], facts)
        assert weights.values.sum() == pytest.approx(1.0)
        assert np.all(weights.values > 0)
        expected = sum(w * f.values for w, f in zip(weights.values, facts, strict=True))
        np.testing.assert_allclose(summary.values, expected)

    def test_summary_lies_in_convex_hull_of_facts(self, qbot: QBot) -> None:
        rng = np.random.default_rng(31)
        for _ in range(50):
            facts = [Tensor(rng.normal(scale=2.0, size=4)) for _ in range(int(rng.integers(2, 7)))]
            summary, weights = attend_history(qbot.params, "attention", Tensor(rng.normal(size=4)), facts)
            stacked = np.stack([fact.values for fact in facts])
            assert np.all(weights.values >= 0.0)
            assert abs(weights.values.sum() - 1.0) < 1e-12
            np.testing.assert_allclose(summary.values, weights.values @ stacked, rtol=0, atol=1e-12)
            assert np.all(summary.values >= stacked.min(axis=0) - 1e-12)
            assert np.all(summary.values <= stacked.max(axis=0) + 1e-12)

    def test_single_fact_gets_all_weight(self, world: World, qbot: QBot) -> None:
        fact = qbot.encode_fact(_words(world, "what color ?"), _words(world, "red"))
        summary, weights = attend_history(qbot.params, "attention", fact, [fact])
        np.testing.assert_allclose(weights.values, [1.0])
        np.testing.assert_allclose(summary.values, fact.values)

    def test_fact_shape_checked(self, qbot: QBot) -> None:
        with pytest.raises(AgentError):
            attend_history(qbot.params, "attention", qbot.zero_fact(), [ops.zeros(3)])

    def test_truncation_detaches_earlier_facts(self, world: World, qbot: QBot) -> None:
        facts = [qbot.encode_fact(_words(world, "what color ?"), _words(world, "red")) for _ in range(3)]
        visible = visible_history(facts, truncate=True)
        assert [fact.requires_grad for fact in visible] == [False, False, False]
        np.testing.assert_array_equal(visible[-1].values, facts[-1].values)
        assert visible_history(facts, truncate=False) == facts

    def test_truncated_history_keeps_only_the_current_fact_attached(self, world: World, qbot: QBot) -> None:
        caption = qbot.encode_caption(_words(world, "a red thing"))
        earlier = qbot.encode_fact(_words(world, "what shape ?"), _words(world, "cube"))
        current = qbot.encode_fact(_words(world, "is it large ?"), _words(world, "no"))
        _, state = qbot.encode(caption, current, visible_history([earlier], truncate=True))
        _, detached = qbot.encode(caption, current.detach(), visible_history([earlier], truncate=True))
        qbot.params.zero_grad()
        backward(ops.total(state))
        with_current = qbot.params["fact.W_input"].grad.copy()
        qbot.params.zero_grad()
        backward(ops.total(detached))
        np.testing.assert_array_equal(qbot.params["fact.W_input"].grad, np.zeros_like(with_current))
        assert np.any(with_current != 0.0)


# ──────────────────────────────── Decoder ────────────────────────────────────


class TestDecoder:
    """Greedy and sampled decoding, teacher forcing and targets."""

    def _encoding(self, qbot: QBot, seed: int = 0) -> Tensor:
        return Tensor(np.random.default_rng(seed).normal(size=qbot.dims.fusion_dim))

    def test_greedy_is_deterministic(self, qbot: QBot) -> None:
        e = self._encoding(qbot)
        first = qbot.decoder.decode(qbot.params, e, greedy=True)
        second = qbot.decoder.decode(qbot.params, e, greedy=True)
        assert first.tokens == second.tokens
        assert 1 <= len(first.tokens) <= qbot.dims.q_max_len
        assert STOP_ID not in first.tokens[:-1]

    def test_sampling_needs_generator(self, qbot: QBot) -> None:
        with pytest.raises(AgentError):
            qbot.decoder.decode(qbot.params, self._encoding(qbot), greedy=False)

    def test_sampling_reproducible(self, abot: ABot) -> None:
        e = Tensor(np.random.default_rng(2).normal(size=abot.dims.fusion_dim))
        first = abot.decoder.decode(abot.params, e, greedy=False, rng=np.random.default_rng(5))
        second = abot.decoder.decode(abot.params, e, greedy=False, rng=np.random.default_rng(5))
        assert first.tokens == second.tokens
        assert len(first.logprobs) == len(first.tokens)

    def test_sampled_token_frequencies_follow_softmax(self) -> None:
        params = ParamStore(seed=6)
        params.add_weight("embed", 5, 3)
        decoder = Decoder("speaker", "embed", 3, 4, 3, vocab_size=5, max_len=1)
        decoder.register(params)
        e = Tensor(np.random.default_rng(7).normal(size=3))
        probs = ops.softmax(decoder.teacher_forced_logits(params, e, [0])[0]).values
        rng = np.random.default_rng(8)
        draws = 10_000
        counts = np.bincount(
            [decoder.decode(params, e, greedy=False, rng=rng).tokens[0] for _ in range(draws)], minlength=5
        )
        sigma = np.sqrt(draws * probs * (1.0 - probs))
        assert np.all(np.abs(counts - draws * probs) <= 3.0 * sigma)

    def test_decoded_logprob_matches_teacher_forcing(self, qbot: QBot) -> None:
        e = self._encoding(qbot, seed=1)
        utterance = qbot.decoder.decode(qbot.params, e, greedy=False, rng=np.random.default_rng(8))
        forced = qbot.decoder.sequence_logprob(qbot.params, e, utterance.tokens)
        assert forced.item() == pytest.approx(utterance.total_logprob().item())

    def test_mle_is_mean_negative_logprob(self, world: World, qbot: QBot) -> None:
        e = self._encoding(qbot, seed=2)
        target = with_stop(_words(world, "what shape ?"), qbot.dims.q_max_len)
        loss = qbot.decoder.mle_loss(qbot.params, e, target)
        logprob = qbot.decoder.sequence_logprob(qbot.params, e, target)
        assert loss.item() == pytest.approx(-logprob.item() / len(target))

    def test_token_hits(self, world: World, qbot: QBot) -> None:
        target = with_stop(_words(world, "is it red ?"), qbot.dims.q_max_len)
        hits, total = qbot.decoder.token_hits(qbot.params, self._encoding(qbot), target)
        assert total == 5
        assert 0 <= hits <= total

    @pytest.mark.parametrize("targets", [(), (5, 5, 5, 5, 5, 5), (10_000,)], ids=["empty", "too-long", "unknown"])
    def test_bad_targets(self, qbot: QBot, targets: tuple[int, ...]) -> None:
        with pytest.raises(AgentError):
            qbot.decoder.teacher_forced_logits(qbot.params, self._encoding(qbot), targets)

    def test_encoding_shape_checked(self, qbot: QBot) -> None:
        with pytest.raises(AgentError):
            qbot.decoder.decode(qbot.params, ops.zeros(7), greedy=True)


class TestTargets:
    def test_with_stop(self) -> None:
        assert with_stop((5, 6), max_len=4) == (5, 6, STOP_ID)
        assert with_stop((5, 6), max_len=2) == (5, 6)
        assert with_stop((5, STOP_ID), max_len=2) == (5, STOP_ID)

    def test_utterance_body(self) -> None:
        assert Utterance((5, 6, STOP_ID)).body == (5, 6)
        assert Utterance((5, 6)).body == (5, 6)
