"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class FirmTriageError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FirmTriageError):
    pass


# extraction
class OffsetOutOfBounds(FirmTriageError):
    pass


class CorruptArchive(FirmTriageError):
    pass


class UnsupportedFormat(FirmTriageError):
    pass


# sbom
class DuplicateComponent(FirmTriageError):
    pass


class SchemaViolation(FirmTriageError):
    """Raised when an SBOM document is missing or mistypes a required field.

    ``path`` points at the offending field, e.g. ``components[3].version``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# matching
class SnapshotParseError(FirmTriageError):
    pass


class InvalidRecord(FirmTriageError):
    pass


class UnparseableVersion(FirmTriageError):
    pass


# feeds
class FeedParseError(FirmTriageError):
    pass


class RangeError(FirmTriageError):
    pass


class NetworkError(FirmTriageError):
    pass


class ProtocolError(FirmTriageError):
    pass


# pipeline
class ManifestError(FirmTriageError):
    pass


class ReportIOError(FirmTriageError, OSError):
    pass
