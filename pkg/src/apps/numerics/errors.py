"""Exceptions raised by the tensor engine."""

from __future__ import annotations


class NumericsError(Exception):
    """Base class for tensor engine failures."""


class ShapeError(NumericsError):
    """Raised when operand shapes do not satisfy an op's shape rule."""

    def __init__(self, op_kind: str, shapes: tuple[tuple[int, ...], ...], detail: str = "") -> None:
        self.op_kind = op_kind
        self.shapes = shapes
        self.detail = detail
        rendered = ", ".join(str(shape) for shape in shapes)
        message = f"{op_kind}: incompatible shapes {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class NonFiniteError(NumericsError):
    """Raised as soon as an op produces NaN or Inf, in a value or a gradient."""

    def __init__(self, op_kind: str, where: str = "value") -> None:
        self.op_kind = op_kind
        self.where = where
        super().__init__(f"{op_kind}: non-finite {where}")


class GradientError(NumericsError):
    """Raised for misuse of backward, missing gradients or a nondeterministic objective."""
