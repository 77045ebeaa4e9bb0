"""Exceptions raised by the synthetic world."""


class WorldError(Exception):
    """Base class for world failures."""


class SchemaError(WorldError):
    """Raised when an attribute schema violates its invariants."""


class CapacityError(WorldError):
    """Raised when more distinct scenes or answers are requested than exist."""

    def __init__(self, requested: int, available: int, what: str) -> None:
        self.requested = requested
        self.available = available
        super().__init__(f"requested {requested} distinct {what}, only {available} exist")


class UnknownTokenError(WorldError):
    """Raised for token indices outside the vocabulary."""

    def __init__(self, token: int, vocab_size: int) -> None:
        self.token = token
        super().__init__(f"token index {token} outside vocabulary of size {vocab_size}")


class OracleError(WorldError):
    """Raised when an oracle answer is requested for a question outside the oracle forms."""
