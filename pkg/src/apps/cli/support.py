"""Helpers shared by the madf management commands."""

from __future__ import annotations

import logging
import shutil
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

from django.core.management.base import CommandError

from apps.agents.errors import AgentError
from apps.evaluation.errors import EvaluationError
from apps.numerics.errors import NumericsError
from apps.training.config import RunConfig
from apps.training.errors import CheckpointSinkError, ConfigError, PoolError, TrainingError
from apps.world.errors import CapacityError, SchemaError, WorldError

from .errors import ArtifactError
from .runs import LOCK_NAME

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


@contextmanager
def command_errors() -> Iterator[None]:
    """Translate domain exceptions into ``CommandError`` with the documented exit status."""
    try:
        yield
    except (ConfigError, PoolError, SchemaError, CapacityError) as e:
        raise CommandError(f"configuration error: {e}", returncode=EXIT_CONFIG) from e
    except (ArtifactError, CheckpointSinkError, WorldError, OSError) as e:
        raise CommandError(f"I/O error: {e}", returncode=EXIT_IO) from e
    except (NumericsError, AgentError, TrainingError, EvaluationError) as e:
        logger.exception("Numeric failure")
        raise CommandError(f"numeric failure: {e}", returncode=EXIT_NUMERIC) from e


def load_config(path: str | None, **overrides: object) -> RunConfig:
    """Read a ``KEY=VALUE`` config file (defaults when ``path`` is None) and apply CLI overrides."""
    if path is None:
        config = RunConfig()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ArtifactError(f"cannot read config {path}: {e}") from e
        config = RunConfig.from_text(text)
    return config.with_overrides(**overrides)


def clear_directory(directory: Path) -> None:
    """Remove everything in ``directory`` except a held lock file."""
    if not directory.exists():
        return
    for child in directory.iterdir():
        if child.name == LOCK_NAME:
            continue
        if child.is_dir():
            shutil.rmtree(child)
        else:
            child.unlink()
