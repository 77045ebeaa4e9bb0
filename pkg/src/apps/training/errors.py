"""Exceptions raised while configuring or running training."""


class TrainingError(Exception):
    """Base class for training failures."""


class ConfigError(TrainingError):
    """Raised for an unknown, uncastable or out-of-range run configuration key."""

    def __init__(self, key: str, detail: str) -> None:
        self.key = key
        self.detail = detail
        super().__init__(f"{key}: {detail}")


class PoolError(TrainingError):
    """Raised for an empty agent pool or pool sizes that break the one-sided rule."""


class CheckpointSinkError(TrainingError):
    """Raised when a sink cannot accept a checkpoint, log row or snapshot."""
