"""
On-disk formats: named-tensor bodies, checkpoints and dataset directories.

A checkpoint is ``MADF`` + u16 format version, then the run id, a u32
epoch, the phase and the config hash (strings as u16 length + UTF-8), then a u32 entry count and one
record per tensor: u16 name length, UTF-8 name, u8 rank, u32 per dimension
and the values as little-endian float64. Every integer is little-endian.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from apps.world.errors import WorldError
from apps.world.schema import AttributeSchema
from apps.world.scenes import Dataset, World

from .errors import ArtifactError, CheckpointFormatError

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

MAGIC = b"MADF"
FORMAT_VERSION = 2
SPLITS = ("train", "val", "test")


# ─────────────────────────────── Tensor codec ────────────────────────────────


class _Reader:
    def __init__(self, data: bytes, what: str) -> None:
        self.data = data
        self.offset = 0
        self.what = what

    def take(self, fmt: str) -> tuple[Any, ...]:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ArtifactError(f"{self.what}: truncated at byte {self.offset}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def raw(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ArtifactError(f"{self.what}: truncated at byte {self.offset}")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def text(self) -> str:
        (length,) = self.take("<H")
        return self.raw(length).decode("utf-8")


def _text(value: str) -> bytes:
    encoded = value.encode("utf-8")
    return struct.pack("<H", len(encoded)) + encoded


def encode_tensors(tensors: Mapping[str, NDArray[np.float64]]) -> bytes:
    """Count-prefixed named tensor records, in mapping order."""
    parts = [struct.pack("<I", len(tensors))]
    for name, values in tensors.items():
        array = np.asarray(values, dtype=np.float64)
        parts.append(_text(name))
        parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        parts.append(array.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def _decode_tensors(reader: _Reader) -> dict[str, NDArray[np.float64]]:
    (count,) = reader.take("<I")
    tensors: dict[str, NDArray[np.float64]] = {}
    for _ in range(count):
        name = reader.text()
        (rank,) = reader.take("<B")
        shape = reader.take(f"<{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.raw(8 * size), dtype="<f8").astype(np.float64)
        if name in tensors:
            raise ArtifactError(f"{reader.what}: duplicate tensor {name!r}")
        tensors[name] = values.reshape(shape)
    return tensors


def decode_tensors(data: bytes, what: str = "tensor file") -> dict[str, NDArray[np.float64]]:
    reader = _Reader(data, what)
    tensors = _decode_tensors(reader)
    if reader.offset != len(data):
        raise ArtifactError(f"{what}: {len(data) - reader.offset} trailing bytes")
    return tensors


# ──────────────────────────────── Checkpoints ────────────────────────────────


@dataclass(frozen=True, slots=True)
class CheckpointHeader:
    run_id: str
    epoch: int
    phase: str
    config_hash: str
    version: int = FORMAT_VERSION

    @property
    def name(self) -> str:
        return f"{self.phase}_{self.epoch}"


def encode_checkpoint(header: CheckpointHeader, state: Mapping[str, NDArray[np.float64]]) -> bytes:
    head = MAGIC + struct.pack("<H", header.version)
    head += _text(header.run_id) + struct.pack("<I", header.epoch) + _text(header.phase) + _text(header.config_hash)
    return head + encode_tensors(state)


def decode_checkpoint(data: bytes, what: str = "checkpoint") -> tuple[CheckpointHeader, dict[str, NDArray[np.float64]]]:
    if data[:4] != MAGIC:
        raise CheckpointFormatError(0, f"{what}: not a checkpoint (bad magic)")
    reader = _Reader(data, what)
    reader.raw(4)
    (version,) = reader.take("<H")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(version, f"{what}: format version {version}, this build reads {FORMAT_VERSION}")
    run_id = reader.text()
    (epoch,) = reader.take("<I")
    phase, config_hash = reader.text(), reader.text()
    state = _decode_tensors(reader)
    if reader.offset != len(data):
        raise ArtifactError(f"{what}: {len(data) - reader.offset} trailing bytes")
    return CheckpointHeader(run_id, epoch, phase, config_hash, version), state


def write_checkpoint(path: Path, header: CheckpointHeader, state: Mapping[str, NDArray[np.float64]]) -> None:
    """Write through a temp file and rename, so a checkpoint on disk is always complete."""
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_suffix(path.suffix + ".part")
    partial.write_bytes(encode_checkpoint(header, state))
    partial.replace(path)


def read_checkpoint(path: Path) -> tuple[CheckpointHeader, dict[str, NDArray[np.float64]]]:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ArtifactError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(data, str(path))


def latest_checkpoint(directory: Path, phases: tuple[str, ...] = ("sl", "rl")) -> Path | None:
    """The checkpoint of the last completed epoch of the furthest phase, if any."""
    best: tuple[int, int] | None = None
    found = None
    for path in directory.glob("*.ckpt"):
        phase, _, epoch = path.stem.partition("_")
        if phase not in phases or not epoch.isdigit():
            continue
        key = (phases.index(phase), int(epoch))
        if best is None or key > best:
            best, found = key, path
    return found


# ───────────────────────────────── Datasets ──────────────────────────────────


def _jsonl(records: list[dict[str, Any]]) -> str:
    return "".join(json.dumps(record, separators=(",", ":")) + "\n" for record in records)


def write_dataset(directory: Path, dataset: Dataset, rounds: int) -> list[Path]:
    """Split JSONL files, schema JSON and the mixing matrix; returns the written paths."""
    world = dataset.world
    data_dir = directory / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for split in SPLITS:
        path = data_dir / f"{split}.jsonl"
        path.write_text(_jsonl([world.scene_record(scene, rounds) for scene in dataset.split(split)]), encoding="utf-8")
        written.append(path)
    schema_path = directory / "schema.json"
    schema_path.write_text(json.dumps(world.schema.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    mixing_path = directory / "mixing.bin"
    mixing_path.write_bytes(encode_tensors({"mixing": world.mixing}))
    return [*written, schema_path, mixing_path]


def dataset_files(directory: Path) -> list[Path]:
    return [directory / "data" / f"{split}.jsonl" for split in SPLITS] + [
        directory / "schema.json",
        directory / "mixing.bin",
    ]


def dataset_hash(directory: Path) -> str:
    """SHA-256 over the dataset files in a fixed order, each prefixed by its relative name."""
    digest = hashlib.sha256()
    for path in dataset_files(directory):
        try:
            content = path.read_bytes()
        except OSError as e:
            raise ArtifactError(f"dataset file missing: {path}") from e
        digest.update(path.relative_to(directory).as_posix().encode() + b"\0")
        digest.update(content)
    return digest.hexdigest()


def read_dataset(directory: Path, seed: int) -> Dataset:
    if not (directory / "schema.json").exists():
        raise ArtifactError(f"no dataset in {directory}; run gen-data first")
    try:
        schema = AttributeSchema.from_dict(json.loads((directory / "schema.json").read_text(encoding="utf-8")))
        mixing = decode_tensors((directory / "mixing.bin").read_bytes(), "mixing.bin")["mixing"]
        world = World(schema, mixing)
        splits = {}
        for split in SPLITS:
            lines = (directory / "data" / f"{split}.jsonl").read_text(encoding="utf-8").splitlines()
            splits[split] = [world.scene_from_record(json.loads(line)) for line in lines if line.strip()]
    except (OSError, KeyError, ValueError, WorldError) as e:
        raise ArtifactError(f"cannot read dataset in {directory}: {e}") from e
    logger.debug("Read dataset %s: %s", directory, {name: len(scenes) for name, scenes in splits.items()})
    return Dataset(world, splits["train"], splits["val"], splits["test"], seed)
