"""
Run configuration: a flat KEY=VALUE file cast with django-environ's rules.

Every key has a type and a default; unknown keys and values that do not cast
are configuration errors naming the key. ``snapshot`` renders every key in
sorted order and its SHA-256 is the config hash stamped on checkpoints.
"""

from __future__ import annotations

import dataclasses
import hashlib
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

import environ

from apps.agents.bots import AgentDims
from apps.numerics.optim import OptimizerKind
from apps.world.errors import SchemaError
from apps.world.schema import SCHEMAS, AttributeSchema

from .errors import ConfigError


def _render(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_BOOL_WORDS = {*environ.Env.BOOLEAN_TRUE_STRINGS, "false", "off", "n", "no", "0"}

SYSTEMS = ("sl", "rl-1q1a", "rl-1q3a", "rl-3q1a")
_SYSTEM_POOLS = {"sl": (1, 1), "rl-1q1a": (1, 1), "rl-1q3a": (1, 3), "rl-3q1a": (3, 1)}

_CHOICES = {
    "schema": tuple(SCHEMAS),
    "mixing": ("orthonormal", "identity"),
    "optimizer": tuple(kind.value for kind in OptimizerKind),
    "reward_sign": ("eq1", "alg1"),
    "distance": ("squared", "euclidean"),
    "baseline": ("none", "ema"),
    "eval_context": ("oracle", "generated"),
}


@dataclass(frozen=True, slots=True)
class RunConfig:
    # Dataset
    run_id: str = "madf"
    seed: int = 0
    schema: str = "default"
    reveal_count: int = 1
    mixing: str = "orthonormal"
    n_train: int = 400
    n_val: int = 50
    n_test: int = 100
    # Training
    rounds: int = 10
    batch_size: int = 20
    sl_epochs: int = 15
    rl_epochs: int = 10
    optimizer: str = "adam"
    lr_sl: float = 1e-3
    lr_rl: float = 1e-4
    clip_norm: float = 5.0
    gamma: float = 1.0
    q_pool: int = 1
    a_pool: int = 1
    shared_init: bool = False
    curriculum_start_k: int = 9
    curriculum_epochs: int = 10
    image_loss_weight: float = 1.0
    reward_sign: str = "eq1"
    distance: str = "squared"
    baseline: str = "none"
    baseline_decay: float = 0.9
    truncate_history: bool = True
    rl_image_grad_encoder: bool = False
    # Networks
    embed_dim: int = 32
    hidden_dim: int = 64
    fusion_dim: int = 64
    fusion_layers: int = 2
    q_max_len: int = 8
    a_max_len: int = 6
    # Evaluation
    n_candidates: int = 20
    recall_k: int = 10
    recall_strict: bool = False
    eval_context: str = "oracle"
    eval_every: int = 5
    transcripts: int = 5

    def __post_init__(self) -> None:
        self.validate()

    # ─────────────────────────── Loading ────────────────────────────

    @classmethod
    def keys(cls) -> list[str]:
        return [field.name.upper() for field in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> RunConfig:
        """Cast string values by the declared field types; unknown keys are rejected."""
        fields = {field.name: field for field in dataclasses.fields(cls)}
        values: dict[str, Any] = {}
        for key, text in raw.items():
            name = key.strip().lower()
            if name not in fields:
                raise ConfigError(key.upper(), "unknown configuration key")
            cast = {"int": int, "float": float, "bool": bool, "str": str}[str(fields[name].type)]
            if cast is bool and text.strip().lower() not in _BOOL_WORDS:
                raise ConfigError(key.upper(), f"cannot read {text!r} as bool")
            try:
                # environ's float cast drops exponents.
                values[name] = float(text) if cast is float else environ.Env.parse_value(text.strip(), cast)
            except ValueError as e:
                raise ConfigError(key.upper(), f"cannot read {text!r} as {cast.__name__}") from e
        return cls(**values)

    @classmethod
    def from_text(cls, text: str) -> RunConfig:
        """Parse ``KEY=VALUE`` lines; blank lines and ``#`` comments are skipped."""
        raw: dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"line {number}", f"expected KEY=VALUE, got {stripped!r}")
            raw[key.strip().upper()] = value
        return cls.from_mapping(raw)

    def with_overrides(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **{key: value for key, value in changes.items() if value is not None})

    def for_system(self, system: str) -> RunConfig:
        """Pool sizes and phase lengths implied by a named system."""
        if system not in _SYSTEM_POOLS:
            raise ConfigError("--system", f"unknown system {system!r}; choose from {', '.join(SYSTEMS)}")
        q_pool, a_pool = _SYSTEM_POOLS[system]
        changes: dict[str, Any] = {"q_pool": q_pool, "a_pool": a_pool}
        if system == "sl":
            changes["rl_epochs"] = 0
        return dataclasses.replace(self, **changes)

    # ─────────────────────────── Snapshot ───────────────────────────

    def snapshot(self) -> str:
        """Canonical sorted ``KEY=VALUE`` text of every key."""
        lines = []
        for field in sorted(dataclasses.fields(self), key=lambda f: f.name):
            lines.append(f"{field.name.upper()}={_render(getattr(self, field.name))}\n")
        return "".join(lines)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.snapshot().encode()).hexdigest()

    # ────────────────────────── Derived views ───────────────────────

    def build_schema(self) -> AttributeSchema:
        return SCHEMAS[self.schema](self.reveal_count)

    def agent_dims(self, vocab_size: int, image_dim: int) -> AgentDims:
        return AgentDims(
            vocab_size=vocab_size,
            image_dim=image_dim,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            fusion_dim=self.fusion_dim,
            fusion_layers=self.fusion_layers,
            q_max_len=self.q_max_len,
            a_max_len=self.a_max_len,
        )

    # ────────────────────────── Validation ──────────────────────────

    def validate(self) -> None:
        for name, choices in _CHOICES.items():
            if getattr(self, name) not in choices:
                raise ConfigError(name.upper(), f"must be one of {', '.join(choices)}")
        positive = (
            "n_train", "n_val", "n_test", "rounds", "batch_size", "embed_dim", "hidden_dim",
            "fusion_dim", "fusion_layers", "q_pool", "a_pool", "n_candidates", "recall_k",
        )  # fmt: skip
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(name.upper(), "must be at least 1")
        for name in ("sl_epochs", "rl_epochs", "eval_every", "transcripts", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(name.upper(), "must not be negative")
        if not self.run_id or any(ch in self.run_id for ch in "/\\ ."):
            raise ConfigError("RUN_ID", "must be non-empty without path separators, dots or spaces")
        if self.q_pool != 1 and self.a_pool != 1:
            raise ConfigError("Q_POOL", "either Q_POOL or A_POOL must be 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("GAMMA", "must lie in [0, 1]")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError("BASELINE_DECAY", "must lie in [0, 1)")
        for name in ("lr_sl", "lr_rl"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(name.upper(), "must be positive")
        if self.clip_norm < 0.0:
            raise ConfigError("CLIP_NORM", "must not be negative (0 disables clipping)")
        if self.image_loss_weight < 0.0:
            raise ConfigError("IMAGE_LOSS_WEIGHT", "must not be negative")
        if self.curriculum_start_k < 0:
            raise ConfigError("CURRICULUM_START_K", "must not be negative")
        if self.curriculum_epochs < 2:
            raise ConfigError("CURRICULUM_EPOCHS", "must be at least 2")
        # Longest oracle question is "is it <value> ?" and longest answer "it is <value>".
        try:
            self.build_schema()
        except SchemaError as e:
            raise ConfigError("REVEAL_COUNT", str(e)) from e
        if self.q_max_len < 4:
            raise ConfigError("Q_MAX_LEN", "must be at least 4 to fit oracle questions")
        if self.a_max_len < 3:
            raise ConfigError("A_MAX_LEN", "must be at least 3 to fit oracle answers")
