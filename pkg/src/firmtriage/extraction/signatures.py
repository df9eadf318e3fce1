"""Magic-byte signature scanning and region carving."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..errors import OffsetOutOfBounds


class Format(str, Enum):
    GZIP = "Gzip"
    TAR = "Tar"
    CPIO = "Cpio"
    SQUASHFS = "SquashFS"
    CRAMFS = "CramFS"
    JFFS2 = "JFFS2"
    UBIFS = "UBIFS"
    UNKNOWN = "Unknown"


BUILTIN_FORMATS = frozenset({Format.GZIP, Format.TAR, Format.CPIO})
ADAPTER_FORMATS = frozenset({Format.SQUASHFS, Format.CRAMFS, Format.JFFS2, Format.UBIFS})


@dataclass(frozen=True)
class SignatureHit:
    format: Format
    offset: int
    magic_len: int


TAR_MAGIC_OFFSET = 257

# (format, magic, position of the magic relative to the start of the container).
# Order doubles as priority when two formats claim the same offset.
MAGIC_TABLE: tuple[tuple[Format, bytes, int], ...] = (
    (Format.SQUASHFS, b"hsqs", 0),
    (Format.SQUASHFS, b"sqsh", 0),
    (Format.CRAMFS, b"\x45\x3d\xcd\x28", 0),
    (Format.CRAMFS, b"\x28\xcd\x3d\x45", 0),
    (Format.UBIFS, b"\x31\x18\x10\x06", 0),
    (Format.CPIO, b"070701", 0),
    (Format.CPIO, b"070702", 0),
    (Format.CPIO, b"070707", 0),
    (Format.TAR, b"ustar", TAR_MAGIC_OFFSET),
    (Format.GZIP, b"\x1f\x8b", 0),
    (Format.JFFS2, b"\x85\x19", 0),
    (Format.JFFS2, b"\x19\x85", 0),
)

_JFFS2_NODETYPES = frozenset({0xE001, 0xE002, 0x2003, 0x2004, 0x2006, 0xE008, 0xE009})


def _tar_checksum_ok(header: bytes) -> bool:
    raw = header[148:156].replace(b"\x00", b" ").strip()
    try:
        stored = int(raw, 8)
    except ValueError:
        return False
    unsigned = sum(header[:148]) + 8 * 32 + sum(header[156:512])
    return stored == unsigned


def _plausible(fmt: Format, data: bytes, start: int, magic: bytes) -> bool:
    # Two-byte magics fire on noise every ~64 KiB; require header context.
    if fmt is Format.GZIP:
        if start + 10 > len(data):
            return False
        return data[start + 2] == 8 and data[start + 3] & 0xE0 == 0
    if fmt is Format.JFFS2:
        if start + 4 > len(data):
            return False
        order = "little" if magic == b"\x85\x19" else "big"
        return int.from_bytes(data[start + 2:start + 4], order) in _JFFS2_NODETYPES
    if fmt is Format.TAR:
        if start + 512 > len(data):
            return False
        return _tar_checksum_ok(data[start:start + 512])
    return True


def scan_signatures(image_bytes: bytes) -> list[SignatureHit]:
    """Return every recognised container signature in ``image_bytes``.

    Hits are sorted by offset, and at most one hit is reported per offset.
    """
    by_offset: dict[int, SignatureHit] = {}
    data = bytes(image_bytes)
    for fmt, magic, rel in MAGIC_TABLE:
        pos = data.find(magic)
        while pos != -1:
            start = pos - rel
            if start >= 0 and _plausible(fmt, data, start, magic):
                by_offset.setdefault(start, SignatureHit(fmt, start, rel + len(magic)))
            pos = data.find(magic, pos + 1)
    return [by_offset[k] for k in sorted(by_offset)]


def carve_region(image_bytes: bytes, hit: SignatureHit,
                 hits: list[SignatureHit] | None = None) -> bytes:
    """Slice from ``hit.offset`` up to the next hit in ``hits`` (or end of image)."""
    size = len(image_bytes)
    if hit.offset < 0 or hit.offset >= size or hit.offset + hit.magic_len > size:
        raise OffsetOutOfBounds(
            f"hit at offset {hit.offset} (+{hit.magic_len}) outside image of {size} bytes")
    end = size
    for other in hits or ():
        if hit.offset < other.offset < end:
            end = other.offset
    return bytes(image_bytes[hit.offset:end])
