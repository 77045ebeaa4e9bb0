"""
The template language and its exact checkers.

    caption  := "a" <value>+ "thing"        values of distinct attributes, schema order
    question := "what" <attribute> "?"  |  "is" "it" <value> "?"
    answer   := <value>  |  "yes"  |  "no"  |  "it" "is" <value>

A single trailing <stop> is ignored so decoder output can be checked as-is.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

from .schema import STOP_ID, AttributeSchema, Vocabulary


class UtteranceKind(StrEnum):
    CAPTION = "caption"
    WHAT = "what"
    CONFIRM = "confirm"
    VALUE = "value"
    YES = "yes"
    NO = "no"
    IT_IS = "it_is"


QUESTION_KINDS = frozenset({UtteranceKind.WHAT, UtteranceKind.CONFIRM})
ANSWER_KINDS = frozenset({UtteranceKind.VALUE, UtteranceKind.YES, UtteranceKind.NO, UtteranceKind.IT_IS})


@dataclass(frozen=True, slots=True)
class Parse:
    """Result of a successful parse; ``facts`` lists (attribute, value) pairs a caption states."""

    kind: UtteranceKind
    attribute: int | None = None
    value: int | None = None
    facts: tuple[tuple[int, int], ...] = ()

    @property
    def is_question(self) -> bool:
        return self.kind in QUESTION_KINDS

    @property
    def is_answer(self) -> bool:
        return self.kind in ANSWER_KINDS


def strip_stop(tokens: Sequence[int]) -> tuple[int, ...]:
    tokens = tuple(int(token) for token in tokens)
    return tokens[:-1] if tokens and tokens[-1] == STOP_ID else tokens


class Grammar:
    """Parser for the template language over one schema's vocabulary."""

    def __init__(self, schema: AttributeSchema, vocab: Vocabulary) -> None:
        self.schema = schema
        self.vocab = vocab
        word = vocab.index
        self.a, self.thing, self.what = word["a"], word["thing"], word["what"]
        self.is_, self.it, self.mark = word["is"], word["it"], word["?"]
        self.yes, self.no = word["yes"], word["no"]
        self.attribute_of_name = {word[attr.name]: i for i, attr in enumerate(schema.attributes)}
        self.value_of_token = {
            word[value]: (i, j) for i, attr in enumerate(schema.attributes) for j, value in enumerate(attr.values)
        }

    # Token builders.

    def value_token(self, attribute: int, value: int) -> int:
        return self.vocab.index[self.schema.attributes[attribute].values[value]]

    def attribute_token(self, attribute: int) -> int:
        return self.vocab.index[self.schema.attributes[attribute].name]

    def what_question(self, attribute: int) -> tuple[int, ...]:
        return (self.what, self.attribute_token(attribute), self.mark)

    def confirm_question(self, attribute: int, value: int) -> tuple[int, ...]:
        return (self.is_, self.it, self.value_token(attribute, value), self.mark)

    def value_answer(self, attribute: int, value: int) -> tuple[int, ...]:
        return (self.value_token(attribute, value),)

    def it_is_answer(self, attribute: int, value: int) -> tuple[int, ...]:
        return (self.it, self.is_, self.value_token(attribute, value))

    def caption(self, facts: Sequence[tuple[int, int]]) -> tuple[int, ...]:
        return (self.a, *(self.value_token(i, j) for i, j in sorted(facts)), self.thing)

    # Parsing.

    def parse(self, tokens: Sequence[int]) -> Parse | None:
        """Return the parse of an utterance, or None when it is not in the language."""
        self.vocab.check(tokens)
        body = strip_stop(tokens)
        match body:
            case (token,) if token == self.yes:
                return Parse(UtteranceKind.YES)
            case (token,) if token == self.no:
                return Parse(UtteranceKind.NO)
            case (token,) if token in self.value_of_token:
                attribute, value = self.value_of_token[token]
                return Parse(UtteranceKind.VALUE, attribute, value)
            case (first, name, last) if first == self.what and last == self.mark and name in self.attribute_of_name:
                return Parse(UtteranceKind.WHAT, self.attribute_of_name[name])
            case (first, second, token) if first == self.it and second == self.is_ and token in self.value_of_token:
                attribute, value = self.value_of_token[token]
                return Parse(UtteranceKind.IT_IS, attribute, value)
            case (first, second, token, last) if (
                first == self.is_ and second == self.it and last == self.mark and token in self.value_of_token
            ):
                attribute, value = self.value_of_token[token]
                return Parse(UtteranceKind.CONFIRM, attribute, value)
        return self._parse_caption(body)

    def _parse_caption(self, body: tuple[int, ...]) -> Parse | None:
        if len(body) < 3 or body[0] != self.a or body[-1] != self.thing:
            return None
        facts = []
        for token in body[1:-1]:
            if token not in self.value_of_token:
                return None
            facts.append(self.value_of_token[token])
        attributes = [attribute for attribute, _ in facts]
        if any(later <= earlier for earlier, later in zip(attributes, attributes[1:], strict=False)):
            return None
        return Parse(UtteranceKind.CAPTION, facts=tuple(facts))

    def is_grammatical(self, tokens: Sequence[int], role: str | None = None) -> bool:
        """Exact membership test; ``role`` restricts to "question", "answer" or "caption"."""
        parse = self.parse(tokens)
        if parse is None:
            return False
        match role:
            case "question":
                return parse.is_question
            case "answer":
                return parse.is_answer
            case "caption":
                return parse.kind is UtteranceKind.CAPTION
        return True
