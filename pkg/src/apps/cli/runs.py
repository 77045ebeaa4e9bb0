"""Run directories: layout, the exclusive lock, the manifest and the training sink."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Self

from django.conf import settings

from apps.training.loop import PHASES

from .artifacts import CheckpointHeader, write_checkpoint
from .errors import ArtifactError

if TYPE_CHECKING:
    from types import TracebackType

    import numpy as np
    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"
MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.txt"


def run_root() -> Path:
    return Path(settings.MADF_RUN_DIR)


def dataset_dir(run_id: str) -> Path:
    return run_root() / run_id


def training_dir(run_id: str, system: str) -> Path:
    return run_root() / f"{run_id}.{system}"


class RunLock:
    """Exclusive lock file held for the duration of one command."""

    def __init__(self, directory: Path) -> None:
        self.path = directory / LOCK_NAME

    def __enter__(self) -> Self:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        except FileExistsError as e:
            raise ArtifactError(f"{self.path.parent} is in use by another command (remove {self.path} if stale)") from e
        with os.fdopen(fd, "w") as handle:
            handle.write(f"{os.getpid()}\n")
        return self

    def __exit__(
        self, exc_type: type[BaseException] | None, exc: BaseException | None, tb: TracebackType | None
    ) -> None:
        self.path.unlink(missing_ok=True)


@dataclass(slots=True)
class RunManifest:
    """Index of a run directory: config, seeds, dataset hash, phase markers and every artifact."""

    run_id: str
    config: str
    config_hash: str
    seeds: dict[str, int]
    dataset_hash: str
    phases: dict[str, str] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)

    def collect(self, directory: Path) -> None:
        """List every file under ``directory`` except the lock and the manifest itself."""
        skip = {LOCK_NAME, MANIFEST_NAME}
        self.artifacts = sorted(
            path.relative_to(directory).as_posix()
            for path in directory.rglob("*")
            if path.is_file() and path.name not in skip and not path.name.endswith(".part")
        )

    def write(self, directory: Path) -> Path:
        self.collect(directory)
        path = directory / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, directory: Path) -> RunManifest:
        path = directory / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            return cls(**data)
        except FileNotFoundError as e:
            raise ArtifactError(f"no manifest in {directory}") from e
        except (OSError, TypeError, ValueError) as e:
            raise ArtifactError(f"unreadable manifest {path}: {e}") from e


def _append(path: Path, row: dict[str, Any]) -> None:
    with path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(row, separators=(",", ":")) + "\n")
        handle.flush()


def _order(row: dict[str, Any]) -> tuple[int, int]:
    return PHASES.index(row["phase"]), int(row["epoch"])


class JsonlRunSink:
    """Checkpoints under ``checkpoints/``, append-only ``train_log.jsonl`` and ``snapshots.jsonl``."""

    def __init__(self, directory: Path, run_id: str, config_hash: str) -> None:
        self.directory = directory
        self.run_id = run_id
        self.config_hash = config_hash
        self.checkpoint_dir = directory / "checkpoints"
        self.log_path = directory / "train_log.jsonl"
        self.snapshot_path = directory / "snapshots.jsonl"
        self.completed: dict[str, int] = {}

    def save_checkpoint(self, phase: str, epoch: int, state: dict[str, NDArray[np.float64]]) -> None:
        header = CheckpointHeader(self.run_id, epoch, phase, self.config_hash)
        write_checkpoint(self.checkpoint_dir / f"{header.name}.ckpt", header, state)
        self.completed[phase] = epoch

    def log_batch(self, row: dict[str, Any]) -> None:
        _append(self.log_path, row)

    def log_snapshot(self, row: dict[str, Any]) -> None:
        _append(self.snapshot_path, row)

    def truncate_after(self, phase: str, epoch: int) -> int:
        """
        Drop log rows written after the given epoch boundary, including a
        torn final line, so a resumed run appends onto a consistent log.
        """
        limit = (PHASES.index(phase), epoch)
        dropped = 0
        for path in (self.log_path, self.snapshot_path):
            if not path.exists():
                continue
            kept = []
            for line in path.read_text(encoding="utf-8").splitlines():
                try:
                    row = json.loads(line)
                except ValueError:
                    dropped += 1
                    continue
                if _order(row) <= limit:
                    kept.append(line + "\n")
                else:
                    dropped += 1
            path.write_text("".join(kept), encoding="utf-8")
        if dropped:
            logger.warning("Dropped %d log row(s) written after %s epoch %d", dropped, phase, epoch)
        return dropped
