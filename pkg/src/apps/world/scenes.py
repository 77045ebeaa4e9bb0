"""Scenes, their embeddings, captions, oracle dialogs and candidate answer sets."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from apps.numerics.tensor import Tensor

from .errors import CapacityError, OracleError, SchemaError
from .grammar import Grammar, Parse, UtteranceKind
from .schema import AttributeSchema, Vocabulary

if TYPE_CHECKING:
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

Tokens = tuple[int, ...]
Exchange = tuple[Tokens, Tokens]


@dataclass(frozen=True, slots=True, eq=False)
class Scene:
    """An attribute bundle standing in for an image."""

    scene_id: int
    assignment: tuple[int, ...]
    y_gt: Tensor
    caption_tokens: Tokens
    revealed: tuple[int, ...]


@dataclass(slots=True)
class Knowledge:
    """What a questioner can infer from the caption and the answers so far."""

    known: dict[int, int] = field(default_factory=dict)
    excluded: dict[int, set[int]] = field(default_factory=dict)

    def learn(self, attribute: int, value: int) -> None:
        self.known[attribute] = value

    def exclude(self, attribute: int, value: int, value_count: int) -> None:
        ruled_out = self.excluded.setdefault(attribute, set())
        ruled_out.add(value)
        remaining = set(range(value_count)) - ruled_out
        if len(remaining) == 1:
            self.known.setdefault(attribute, remaining.pop())


def orthonormal_mixing(dim: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Haar-distributed orthonormal matrix: sign-fixed Q factor of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


class World:
    """Schema, vocabulary, grammar and the fixed mixing matrix of one dataset."""

    def __init__(self, schema: AttributeSchema, mixing: NDArray[np.float64] | None = None) -> None:
        self.schema = schema
        self.vocab = Vocabulary.for_schema(schema)
        self.grammar = Grammar(schema, self.vocab)
        dim = schema.embedding_dim
        self.mixing = np.eye(dim) if mixing is None else np.asarray(mixing, dtype=np.float64)
        if self.mixing.shape != (dim, dim):
            raise SchemaError(f"mixing matrix must be {dim}x{dim}, got {self.mixing.shape}")

    @property
    def embedding_dim(self) -> int:
        return self.schema.embedding_dim

    # ─────────────────────────── Scenes ────────────────────────────

    def scene_embedding(self, assignment: Sequence[int]) -> Tensor:
        """Concatenated per-attribute one-hot blocks, mixed by the stored orthonormal matrix."""
        counts = self.schema.value_counts
        if len(assignment) != len(counts):
            raise SchemaError(f"assignment has {len(assignment)} entries, schema has {len(counts)} attributes")
        onehot = np.zeros(self.embedding_dim, dtype=np.float64)
        offset = 0
        for value, count in zip(assignment, counts, strict=True):
            if not 0 <= value < count:
                raise SchemaError(f"value index {value} out of range for an attribute with {count} values")
            onehot[offset + value] = 1.0
            offset += count
        return Tensor(self.mixing @ onehot)

    def make_scene(self, scene_id: int, assignment: Sequence[int], revealed: Sequence[int]) -> Scene:
        assignment = tuple(int(value) for value in assignment)
        revealed = tuple(sorted(int(attribute) for attribute in revealed))
        return Scene(
            scene_id=scene_id,
            assignment=assignment,
            y_gt=self.scene_embedding(assignment),
            caption_tokens=self.render_caption(assignment, revealed),
            revealed=revealed,
        )

    def render_caption(self, assignment: Sequence[int], revealed: Sequence[int]) -> Tokens:
        """Caption template `a <value> ... <value> thing` over the revealed attributes in schema order."""
        return self.grammar.caption([(attribute, assignment[attribute]) for attribute in sorted(revealed)])

    # ──────────────────────── Oracle dialogs ───────────────────────

    def oracle_dialog(self, scene: Scene, rounds: int) -> list[Exchange]:
        """
        What-questions for each unrevealed attribute in schema order, then
        truthful confirmations cycling through the attributes.
        """
        grammar = self.grammar
        hidden = [i for i in range(len(self.schema.attributes)) if i not in scene.revealed]
        dialog: list[Exchange] = [
            (grammar.what_question(i), grammar.value_answer(i, scene.assignment[i])) for i in hidden[:rounds]
        ]
        attribute_count = len(self.schema.attributes)
        for k in range(rounds - len(dialog)):
            attribute = k % attribute_count
            value = scene.assignment[attribute]
            dialog.append((grammar.confirm_question(attribute, value), (grammar.yes,)))
        return dialog

    def oracle_answer(self, scene: Scene, question: Sequence[int]) -> Tokens:
        parse = self.grammar.parse(question)
        if parse is None or not parse.is_question:
            raise OracleError(f"not an oracle-form question: {self.vocab.render(question)!r}")
        assert parse.attribute is not None
        if parse.kind is UtteranceKind.WHAT:
            return self.grammar.value_answer(parse.attribute, scene.assignment[parse.attribute])
        return (self.grammar.yes,) if scene.assignment[parse.attribute] == parse.value else (self.grammar.no,)

    # ─────────────────────── Consistency / relevance ───────────────────────

    def answer_consistent(self, scene: Scene, question: Sequence[int], answer: Sequence[int]) -> bool:
        """True when the answer is grammatical, fits the question form, and is true of the scene."""
        q = self.grammar.parse(question)
        a = self.grammar.parse(answer)
        if q is None or a is None or not q.is_question or not a.is_answer:
            return False
        assert q.attribute is not None
        truth = scene.assignment[q.attribute]
        if a.kind in (UtteranceKind.VALUE, UtteranceKind.IT_IS):
            return a.attribute == q.attribute and a.value == truth
        if q.kind is UtteranceKind.WHAT:
            return False
        holds = truth == q.value
        return holds if a.kind is UtteranceKind.YES else not holds

    def knowledge(self, caption: Sequence[int], history: Sequence[Exchange]) -> Knowledge:
        """Facts entailed by the caption and the (face-value) answers so far."""
        knowledge = Knowledge()
        caption_parse = self.grammar.parse(caption)
        if caption_parse is not None:
            for attribute, value in caption_parse.facts:
                knowledge.learn(attribute, value)
        for question, answer in history:
            self._absorb(knowledge, self.grammar.parse(question), self.grammar.parse(answer))
        return knowledge

    def _absorb(self, knowledge: Knowledge, q: Parse | None, a: Parse | None) -> None:
        if q is None or a is None or not q.is_question or not a.is_answer:
            return
        assert q.attribute is not None
        if a.kind in (UtteranceKind.VALUE, UtteranceKind.IT_IS):
            if a.attribute == q.attribute and a.value is not None:
                knowledge.learn(q.attribute, a.value)
        elif q.kind is UtteranceKind.CONFIRM and q.value is not None:
            if a.kind is UtteranceKind.YES:
                knowledge.learn(q.attribute, q.value)
            else:
                knowledge.exclude(q.attribute, q.value, self.schema.value_counts[q.attribute])

    def question_relevant(self, caption: Sequence[int], history: Sequence[Exchange], question: Sequence[int]) -> bool:
        """
        A what-question is relevant while its attribute is not entailed. A
        confirmation is irrelevant only when its value is entailed false;
        confirming an entailed value counts as grounding.
        """
        parse = self.grammar.parse(question)
        if parse is None or not parse.is_question:
            return False
        assert parse.attribute is not None
        knowledge = self.knowledge(caption, history)
        known = knowledge.known.get(parse.attribute)
        if parse.kind is UtteranceKind.WHAT:
            return known is None
        if parse.value in knowledge.excluded.get(parse.attribute, set()):
            return False
        return known is None or known == parse.value

    # ──────────────────────── Candidate answers ────────────────────────

    def answer_pool(self) -> list[Tokens]:
        """Every grammatical answer, in a fixed order."""
        grammar = self.grammar
        pairs = [(i, j) for i, count in enumerate(self.schema.value_counts) for j in range(count)]
        pool = [grammar.value_answer(i, j) for i, j in pairs]
        pool += [(grammar.yes,), (grammar.no,)]
        pool += [grammar.it_is_answer(i, j) for i, j in pairs]
        return pool

    def candidate_answers(
        self, scene: Scene, question: Sequence[int], n_candidates: int, seed: int
    ) -> tuple[list[Tokens], int]:
        """
        Ground truth plus distractors: other values of the queried attribute
        first, then random grammatical answers; deduplicated and shuffled.
        """
        pool = self.answer_pool()
        if not 1 <= n_candidates <= len(pool):
            raise CapacityError(n_candidates, len(pool), "grammatical answers")
        truth = self.oracle_answer(scene, question)
        parse = self.grammar.parse(question)
        assert parse is not None and parse.attribute is not None
        rng = np.random.default_rng(seed)

        chosen: list[Tokens] = [truth]
        siblings = [
            self.grammar.value_answer(parse.attribute, j) for j in range(self.schema.value_counts[parse.attribute])
        ]
        for candidate in siblings:
            if len(chosen) == n_candidates:
                break
            if candidate not in chosen:
                chosen.append(candidate)
        if len(chosen) < n_candidates:
            rest = [candidate for candidate in pool if candidate not in chosen]
            picks = rng.choice(len(rest), size=n_candidates - len(chosen), replace=False)
            chosen.extend(rest[int(i)] for i in picks)

        order = rng.permutation(len(chosen))
        shuffled = [chosen[int(i)] for i in order]
        return shuffled, int(np.flatnonzero(order == 0)[0])

    # ─────────────────────────── Records ───────────────────────────

    def scene_record(self, scene: Scene, rounds: int) -> dict[str, Any]:
        """JSON-ready record of a scene and its oracle dialog."""
        render = self.vocab.decode
        return {
            "scene_id": scene.scene_id,
            "assignment": list(scene.assignment),
            "revealed": list(scene.revealed),
            "caption": render(scene.caption_tokens),
            "dialog": [[render(q), render(a)] for q, a in self.oracle_dialog(scene, rounds)],
        }

    def scene_from_record(self, record: dict[str, Any]) -> Scene:
        scene = self.make_scene(record["scene_id"], record["assignment"], record["revealed"])
        if list(self.vocab.decode(scene.caption_tokens)) != list(record["caption"]):
            raise SchemaError(f"scene {record['scene_id']}: stored caption does not match its assignment")
        return scene


@dataclass(frozen=True, slots=True)
class DialogTranscript:
    """Tensor-free record of a played dialog."""

    scene_id: int
    caption: Tokens
    exchanges: tuple[Exchange, ...]

    def render(self, vocab: Vocabulary) -> dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "caption": vocab.render(self.caption),
            "dialog": [[vocab.render(q), vocab.render(a)] for q, a in self.exchanges],
        }


@dataclass(slots=True)
class Dataset:
    world: World
    train: list[Scene]
    val: list[Scene]
    test: list[Scene]
    seed: int

    def split(self, name: str) -> list[Scene]:
        match name:
            case "train":
                return self.train
            case "val":
                return self.val
            case "test":
                return self.test
        raise KeyError(name)


def generate_dataset(
    schema: AttributeSchema,
    seed: int,
    n_train: int,
    n_val: int,
    n_test: int,
    *,
    orthonormal: bool = True,
) -> Dataset:
    """
    Seeded train/val/test scenes. Test (gallery) scenes are mutually distinct
    assignments; train and val assignments are drawn uniformly with replacement.
    Scene ids run consecutively across train, val, test.
    """
    if min(n_train, n_val, n_test) < 1:
        raise SchemaError("every split needs at least one scene")
    if n_test > schema.capacity:
        raise CapacityError(n_test, schema.capacity, "gallery scenes")

    mixing_seq, gallery_seq, train_seq, val_seq, reveal_seq = np.random.SeedSequence(seed).spawn(5)
    mixing = orthonormal_mixing(schema.embedding_dim, np.random.default_rng(mixing_seq)) if orthonormal else None
    world = World(schema, mixing)
    reveal_rng = np.random.default_rng(reveal_seq)
    attribute_count = len(schema.attributes)

    def revealed() -> list[int]:
        return sorted(int(i) for i in reveal_rng.choice(attribute_count, size=schema.reveal_count, replace=False))

    def uniform(rng: np.random.Generator, count: int) -> list[tuple[int, ...]]:
        return [tuple(int(rng.integers(n)) for n in schema.value_counts) for _ in range(count)]

    train_assignments = uniform(np.random.default_rng(train_seq), n_train)
    val_assignments = uniform(np.random.default_rng(val_seq), n_val)
    gallery_indices = np.random.default_rng(gallery_seq).choice(schema.capacity, size=n_test, replace=False)
    test_assignments = [schema.decode_index(int(index)) for index in gallery_indices]

    next_id = 0
    splits: list[list[Scene]] = []
    for assignments in (train_assignments, val_assignments, test_assignments):
        scenes = []
        for assignment in assignments:
            scenes.append(world.make_scene(next_id, assignment, revealed()))
            next_id += 1
        splits.append(scenes)

    logger.info(
        "Generated dataset (seed=%d): %d train / %d val / %d test scenes, D=%d, vocab=%d",
        seed,
        n_train,
        n_val,
        n_test,
        schema.embedding_dim,
        len(world.vocab),
    )
    return Dataset(world, splits[0], splits[1], splits[2], seed)
