"""Curriculum over the number of teacher-forced rounds per episode."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True, slots=True)
class CurriculumSchedule:
    """K falls linearly from ``start_K`` at epoch 0 to 0 at epoch ``anneal_epochs - 1``."""

    start_K: int = 9
    anneal_epochs: int = 10

    def __post_init__(self) -> None:
        if self.start_K < 0:
            raise ConfigError("CURRICULUM_START_K", "must not be negative")
        if self.anneal_epochs < 2:
            raise ConfigError("CURRICULUM_EPOCHS", "must be at least 2")


def anneal_K(schedule: CurriculumSchedule, epoch: int) -> int:
    """K = floor(start_K * max(0, A - 1 - epoch) / (A - 1)); with the defaults 9, 8, ..., 0."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    span = schedule.anneal_epochs - 1
    return schedule.start_K * max(0, span - epoch) // span
