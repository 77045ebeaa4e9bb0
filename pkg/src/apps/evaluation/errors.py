"""Exceptions raised by the metric suite."""


class EvaluationError(Exception):
    """Raised for empty inputs, undersized galleries or a missing ground-truth candidate."""
