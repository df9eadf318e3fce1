"""Firmware carving, recursive unpacking and root filesystem normalisation."""

from .normalize import (MAX_SYMLINK_HOPS, EntryKind, FailureReason, FileEntry,
                        NormalizedFileSystem, detect_rootfs, normalize)
from .recursive import (DEFAULT_DEPTH_LIMIT, ExtractionLog, FirmwareImage,
                        extract_recursive, looks_encrypted, window_entropy)
from .signatures import (ADAPTER_FORMATS, BUILTIN_FORMATS, MAGIC_TABLE, Format,
                         SignatureHit, carve_region, scan_signatures)
from .unpack import GuardedTree, unpack

__all__ = [
    "ADAPTER_FORMATS", "BUILTIN_FORMATS", "DEFAULT_DEPTH_LIMIT", "MAGIC_TABLE",
    "MAX_SYMLINK_HOPS", "EntryKind", "ExtractionLog", "FailureReason", "FileEntry",
    "FirmwareImage", "Format", "GuardedTree", "NormalizedFileSystem", "SignatureHit",
    "carve_region", "detect_rootfs", "extract_recursive", "looks_encrypted",
    "normalize", "scan_signatures", "unpack", "window_entropy",
]
