"""Segment-wise version ordering for non-semver firmware ecosystems.

Versions split on ``.`` and ``-``.  Numeric segments compare as integers, and
a letter suffix on a numeric segment sorts after the bare number
(``2 < 2a < 2k < 2l < 3``), which is how OpenSSL letter releases order.
Segments that start with a letter compare case-insensitively as text and sort
after every numeric segment.  Trailing zero segments are insignificant.
"""

from __future__ import annotations

import re
from functools import lru_cache

from ..errors import UnparseableVersion

UNKNOWN_VERSION = "0.0.0-unknown"

_SPLIT = re.compile(r"[.\-]")
_NUMERIC = re.compile(r"(\d+)([A-Za-z][A-Za-z0-9]*)?")
_WORD = re.compile(r"[A-Za-z][A-Za-z0-9_+~]*")

Key = tuple[tuple[int, int, str], ...]
_ZERO = (0, 0, "")


@lru_cache(maxsize=4096)
def version_key(version: str) -> Key:
    """Sortable key for ``version``; raises :class:`UnparseableVersion`."""
    if not version:
        raise UnparseableVersion("empty version string")
    parts = []
    for seg in _SPLIT.split(version):
        m = _NUMERIC.fullmatch(seg)
        if m:
            parts.append((0, int(m.group(1)), (m.group(2) or "").lower()))
        elif _WORD.fullmatch(seg):
            parts.append((1, 0, seg.lower()))
        else:
            raise UnparseableVersion(f"bad segment {seg!r} in version {version!r}")
    while parts and parts[-1] == _ZERO:
        parts.pop()
    return tuple(parts)


def compare_versions(a: str, b: str) -> int:
    ka, kb = version_key(a), version_key(b)
    return (ka > kb) - (ka < kb)


def version_in_range(version: str, introduced: str, fixed: str | None = None) -> bool:
    """``introduced <= version < fixed``; an absent ``fixed`` leaves the range open."""
    if version == UNKNOWN_VERSION:
        raise ValueError("cannot range-check the unknown-version sentinel")
    key = version_key(version)
    if key < version_key(introduced):
        return False
    return fixed is None or key < version_key(fixed)
