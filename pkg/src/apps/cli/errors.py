"""Exceptions raised while reading or writing run artifacts."""


class ArtifactError(Exception):
    """Raised for missing, locked, corrupt or mismatched artifacts."""


class CheckpointFormatError(ArtifactError):
    """Raised for a checkpoint whose magic or format version this build does not read."""

    def __init__(self, version: int, detail: str = "") -> None:
        self.version = version
        super().__init__(detail or f"unsupported checkpoint format version {version}")
