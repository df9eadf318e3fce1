"""Printable-string version heuristics for stripped embedded binaries."""

from __future__ import annotations

import re

MIN_RUN = 6
_RUN = re.compile(rb"[\x20-\x7e]{%d,}" % MIN_RUN)

# the trailing guard rejects "10.0.0.1:80"-style host:port pairs
_VERSION = r"v?(\d+(?:\.\d+){1,3}[a-z]?)(?![\w.]|:\d)"
# "BusyBox v1.19.4", "OpenSSL 1.0.2k", "zlib 1.2.8"
_SPACED = re.compile(r"(?<![\w.+-])([A-Za-z][\w+-]*)\s+" + _VERSION)
# "zlib-1.2.8", "dropbear_2015.67", "lighttpd/1.4.35"
_JOINED = re.compile(
    r"(?<![\w.+-])([A-Za-z][A-Za-z0-9+]*(?:[-_][A-Za-z][A-Za-z0-9+]*)*)[-_/]" + _VERSION)

# Product tokens that carry a version but say nothing about what it versions.
GENERIC_PRODUCTS = frozenset({"version", "ver", "v", "release", "rev", "revision", "build"})


def printable_runs(data: bytes, min_len: int = MIN_RUN) -> list[tuple[int, str]]:
    pattern = _RUN if min_len == MIN_RUN else re.compile(rb"[\x20-\x7e]{%d,}" % min_len)
    return [(m.start(), m.group().decode("ascii")) for m in pattern.finditer(data)]


def _key(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def names_match(product: str, hint: str) -> bool:
    """Loose product/filename agreement: equal, or one a prefix/suffix of the other."""
    a, b = _key(product), _key(hint)
    if not a or not b:
        return False
    if a == b:
        return True
    short, long_ = sorted((a, b), key=len)
    return len(short) >= 3 and (long_.startswith(short) or long_.endswith(short))


def is_generic(product: str) -> bool:
    return product.lower() in GENERIC_PRODUCTS


def extract_version_strings(file_bytes: bytes, hint_name: str = "") -> list[tuple[str, str]]:
    """Return distinct ``(product, version)`` candidates, best first.

    Candidates whose product equals ``hint_name`` (case-insensitive) rank
    first, then loose name matches, then everything else; ties keep the order
    of appearance in the file.
    """
    first_seen: dict[tuple[str, str], int] = {}
    for offset, run in printable_runs(bytes(file_bytes)):
        for pattern in (_SPACED, _JOINED):
            for m in pattern.finditer(run):
                first_seen.setdefault((m.group(1), m.group(2)), offset + m.start())
    hint = hint_name.lower()

    def rank(item: tuple[tuple[str, str], int]) -> tuple[int, int]:
        (product, _), pos = item
        if hint and product.lower() == hint:
            tier = 0
        elif hint and names_match(product, hint):
            tier = 1
        else:
            tier = 2
        return tier, pos

    return [cand for cand, _ in sorted(first_seen.items(), key=rank)]
