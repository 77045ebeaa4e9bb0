"""Pools of interchangeable partner agents."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generic, TypeVar

import numpy as np

from apps.agents.bots import ABot, QBot

from .errors import PoolError

AgentT = TypeVar("AgentT", QBot, ABot)


@dataclass(slots=True)
class AgentPool(Generic[AgentT]):
    role: str
    members: list[AgentT]
    rng: np.random.Generator

    def __post_init__(self) -> None:
        if not self.members:
            raise PoolError(f"{self.role} pool is empty")

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, index: int) -> AgentT:
        if not 0 <= index < len(self.members):
            raise PoolError(f"{self.role} pool has {len(self.members)} member(s), no index {index}")
        return self.members[index]


def sample_partner(pool: AgentPool, rng: np.random.Generator | None = None) -> int:
    """Uniform member index; draws from ``rng`` or, when omitted, the pool's own generator."""
    if not pool.members:
        raise PoolError(f"{pool.role} pool is empty")
    generator = pool.rng if rng is None else rng
    return int(generator.integers(len(pool.members)))


def check_pool_sizes(q_size: int, a_size: int) -> None:
    """Either side of a community may grow, never both."""
    if q_size < 1 or a_size < 1:
        raise PoolError(f"pool sizes must be positive, got q={q_size} a={a_size}")
    if q_size != 1 and a_size != 1:
        raise PoolError(f"either the Q-Bot or the A-Bot pool must have one member, got q={q_size} a={a_size}")
