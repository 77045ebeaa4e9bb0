"""Attribute schemas and the vocabulary derived from them."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

from .errors import SchemaError, UnknownTokenError

PAD, START, STOP, UNK = "<pad>", "<start>", "<stop>", "<unk>"
RESERVED_TOKENS = (PAD, START, STOP, UNK)
PAD_ID, START_ID, STOP_ID, UNK_ID = range(4)

# Words the templates are built from.
TEMPLATE_WORDS = ("a", "thing", "what", "is", "it", "?", "yes", "no")
# In the vocabulary but in no template; room for agents to drift into.
FILLER_WORDS = ("the", "and")


@dataclass(frozen=True, slots=True)
class Attribute:
    name: str
    values: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class AttributeSchema:
    """Ordered attributes with their ordered values; ``reveal_count`` of them go into the caption."""

    attributes: tuple[Attribute, ...]
    reveal_count: int

    def __post_init__(self) -> None:
        if len(self.attributes) < 2:
            raise SchemaError("a schema needs at least 2 attributes")
        for attribute in self.attributes:
            if len(attribute.values) < 2:
                raise SchemaError(f"attribute {attribute.name!r} needs at least 2 values")
        if not 1 <= self.reveal_count < len(self.attributes):
            raise SchemaError(f"reveal_count must be in [1, {len(self.attributes) - 1}], got {self.reveal_count}")
        words = [attribute.name for attribute in self.attributes]
        words += [value for attribute in self.attributes for value in attribute.values]
        reserved = set(RESERVED_TOKENS) | set(TEMPLATE_WORDS) | set(FILLER_WORDS)
        if len(set(words)) != len(words) or reserved & set(words):
            raise SchemaError("attribute names and values must be distinct tokens, disjoint from template words")

    @property
    def value_counts(self) -> tuple[int, ...]:
        return tuple(len(attribute.values) for attribute in self.attributes)

    @property
    def embedding_dim(self) -> int:
        return sum(self.value_counts)

    @property
    def capacity(self) -> int:
        """Number of distinct assignments."""
        return math.prod(self.value_counts)

    def decode_index(self, index: int) -> tuple[int, ...]:
        """Mixed-radix decode of an assignment index (last attribute varies fastest)."""
        assignment = []
        for count in reversed(self.value_counts):
            index, digit = divmod(index, count)
            assignment.append(digit)
        return tuple(reversed(assignment))

    def to_dict(self) -> dict[str, Any]:
        return {
            "attributes": [{"name": a.name, "values": list(a.values)} for a in self.attributes],
            "reveal_count": self.reveal_count,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AttributeSchema:
        attributes = tuple(Attribute(item["name"], tuple(item["values"])) for item in data["attributes"])
        return cls(attributes, int(data["reveal_count"]))


def default_schema(reveal_count: int = 1) -> AttributeSchema:
    """color x 6, shape x 5, count x 4, background x 4 (embedding dimension 19)."""
    return AttributeSchema(
        (
            Attribute("color", ("red", "blue", "green", "yellow", "purple", "orange")),
            Attribute("shape", ("cube", "sphere", "cone", "cylinder", "torus")),
            Attribute("count", ("one", "two", "three", "four")),
            Attribute("background", ("grass", "sand", "snow", "water")),
        ),
        reveal_count,
    )


def small_schema(reveal_count: int = 1) -> AttributeSchema:
    """A three-attribute world for quick runs and tests."""
    return AttributeSchema(
        (
            Attribute("color", ("red", "blue", "green")),
            Attribute("shape", ("cube", "sphere")),
            Attribute("size", ("small", "large")),
        ),
        reveal_count,
    )


SCHEMAS = {"default": default_schema, "small": small_schema}


@dataclass(slots=True)
class Vocabulary:
    """Bijection between tokens and indices; reserved tokens occupy 0-3."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if self.tokens[:4] != RESERVED_TOKENS:
            raise SchemaError("reserved tokens must occupy indices 0-3")
        if len(set(self.tokens)) != len(self.tokens):
            raise SchemaError("vocabulary tokens must be unique")
        self.index = {token: i for i, token in enumerate(self.tokens)}

    @classmethod
    def for_schema(cls, schema: AttributeSchema) -> Vocabulary:
        words = [attribute.name for attribute in schema.attributes]
        words += [value for attribute in schema.attributes for value in attribute.values]
        return cls((*RESERVED_TOKENS, *TEMPLATE_WORDS, *FILLER_WORDS, *words))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.index.get(word, UNK_ID) for word in words)

    def decode(self, ids: Sequence[int]) -> list[str]:
        self.check(ids)
        return [self.tokens[i] for i in ids]

    def check(self, ids: Sequence[int]) -> None:
        for token in ids:
            if not 0 <= token < len(self.tokens):
                raise UnknownTokenError(int(token), len(self.tokens))

    def render(self, ids: Sequence[int]) -> str:
        return " ".join(self.decode(ids))
