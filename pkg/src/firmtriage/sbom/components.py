"""Component discovery over a normalised root filesystem."""

from __future__ import annotations

import logging
import posixpath
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence
from urllib.parse import quote

from ..extraction import NormalizedFileSystem
from .strings import extract_version_strings, is_generic, names_match

logger = logging.getLogger(__name__)

UNKNOWN_VERSION = "0.0.0-unknown"

BIN_ROOTS = ("/bin", "/usr/bin", "/sbin", "/usr/sbin")
LIB_ROOTS = ("/lib", "/usr/lib")
SCAN_ROOTS = BIN_ROOTS + LIB_ROOTS

# opkg and dpkg share the stanza format (Package:/Version: blocks).
STATUS_FILES = (
    "/usr/lib/opkg/status",
    "/var/lib/opkg/status",
    "/lib/opkg/status",
    "/etc/opkg/status",
    "/var/lib/dpkg/status",
)
# "name version" per line; /etc/sw-versions is the SWUpdate convention.
DEFAULT_VERSION_FILES = ("/etc/sw-versions",)

_SHARED_LIB = re.compile(r"^(?P<stem>.+?)\.so(?:\.(?P<chain>\d+(?:\.\d+)*))?$")
_STEM_VERSION = re.compile(r"^(?P<name>.+?)-(?P<version>\d+(?:\.\d+)+)$")


class ComponentKind(str, Enum):
    EXECUTABLE = "Executable"
    LIBRARY = "Library"
    CONFIG_DECLARED = "ConfigDeclared"
    MANIFEST_DECLARED = "ManifestDeclared"


class EvidenceKind(str, Enum):
    MANIFEST = "Manifest"
    VERSION_STRING = "VersionString"
    FILENAME_ONLY = "FilenameOnly"


@dataclass(frozen=True)
class Component:
    name: str
    version: str
    kind: ComponentKind
    evidence_kind: EvidenceKind
    evidence_paths: tuple[str, ...]
    purl: str | None = None
    cpe: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "evidence_paths", tuple(self.evidence_paths))
        object.__setattr__(self, "kind", ComponentKind(self.kind))
        object.__setattr__(self, "evidence_kind", EvidenceKind(self.evidence_kind))
        if not self.evidence_paths:
            raise ValueError(f"component {self.name!r} has no evidence paths")
        if self.version == UNKNOWN_VERSION and self.evidence_kind is not EvidenceKind.FILENAME_ONLY:
            raise ValueError(f"{self.name!r}: unknown version requires FilenameOnly evidence")

    @property
    def key(self) -> tuple[str, str, str]:
        return self.name, self.version, self.evidence_paths[0]

    @property
    def unknown_version(self) -> bool:
        return self.version == UNKNOWN_VERSION

    @property
    def ref(self) -> str:
        return f"{self.name}@{self.version}:{self.evidence_paths[0]}"


def make_purl(name: str, version: str) -> str | None:
    if version == UNKNOWN_VERSION:
        return None
    return f"pkg:generic/{quote(name.lower(), safe='')}@{quote(version, safe='')}"


def _cpe_escape(value: str) -> str:
    return re.sub(r"([^A-Za-z0-9._-])", r"\\\1", value.lower().replace(" ", "_"))


def make_cpe(vendor: str, product: str, version: str) -> str:
    return "cpe:2.3:a:{}:{}:{}:*:*:*:*:*:*:*".format(
        _cpe_escape(vendor), _cpe_escape(product), _cpe_escape(version))


def sort_components(components: Iterable[Component]) -> list[Component]:
    return sorted(components, key=lambda c: c.key)


# -- manifests ---------------------------------------------------------------

def parse_status_stanzas(text: str) -> list[dict[str, str]]:
    """Split an opkg/dpkg status file into field dictionaries."""
    stanzas, current, last = [], {}, None
    for line in text.splitlines():
        if not line.strip():
            if current:
                stanzas.append(current)
            current, last = {}, None
        elif line[0] in " \t" and last:
            current[last] += "\n" + line.strip()
        elif ":" in line:
            key, _, value = line.partition(":")
            last = key.strip()
            current[last] = value.strip()
    if current:
        stanzas.append(current)
    return stanzas


def _listed_files(fs: NormalizedFileSystem, status_path: str, package: str) -> list[str]:
    info = posixpath.join(posixpath.dirname(status_path), "info", f"{package}.list")
    raw = fs.read_bytes(info)
    if raw is None:
        return []
    listed = []
    for line in raw.decode("utf-8", "replace").splitlines():
        path = line.strip()
        if path and fs.exists(path):
            listed.append(posixpath.normpath("/" + path.lstrip("/")))
    return listed


def _manifest_components(fs: NormalizedFileSystem,
                         scan_files: Sequence[str]) -> tuple[list[Component], set[str]]:
    found: list[Component] = []
    claimed: set[str] = set()
    for status_path in STATUS_FILES:
        raw = fs.read_bytes(status_path)
        if raw is None:
            continue
        for stanza in parse_status_stanzas(raw.decode("utf-8", "replace")):
            name, version = stanza.get("Package"), stanza.get("Version")
            if not name or not version or "not-installed" in stanza.get("Status", ""):
                continue
            files = _listed_files(fs, status_path, name)
            if not files:
                files = [p for p in scan_files if posixpath.basename(p) == name]
            files = sorted(set(files))
            claimed.update(files)
            vendor = stanza.get("Vendor")
            found.append(Component(
                name=name.lower(), version=version,
                kind=ComponentKind.MANIFEST_DECLARED, evidence_kind=EvidenceKind.MANIFEST,
                evidence_paths=tuple(files + [status_path]),
                purl=make_purl(name, version),
                cpe=make_cpe(vendor, name, version) if vendor else None,
            ))
    return found, claimed


def _declared_components(fs: NormalizedFileSystem, version_files: Sequence[str]) -> list[Component]:
    found = []
    for path in version_files:
        raw = fs.read_bytes(path)
        if raw is None:
            continue
        seen = set()
        for line in raw.decode("utf-8", "replace").splitlines():
            parts = line.split("#", 1)[0].split()
            if len(parts) < 2 or (parts[0], parts[1]) in seen:
                continue
            seen.add((parts[0], parts[1]))
            found.append(Component(
                name=parts[0].lower(), version=parts[1],
                kind=ComponentKind.CONFIG_DECLARED, evidence_kind=EvidenceKind.VERSION_STRING,
                evidence_paths=(path,), purl=make_purl(parts[0], parts[1]),
            ))
    return found


# -- binaries and libraries --------------------------------------------------

def _from_strings(name: str, data: bytes) -> tuple[str, EvidenceKind] | None:
    generic = None
    for product, version in extract_version_strings(data, name):
        if names_match(product, name):
            return version, EvidenceKind.VERSION_STRING
        if generic is None and is_generic(product):
            generic = version
    if generic is not None:
        return generic, EvidenceKind.FILENAME_ONLY
    return None


def _file_component(path: str, kind: ComponentKind, data: bytes) -> Component:
    base = posixpath.basename(path)
    name, name_version = base.lower(), None
    if kind is ComponentKind.LIBRARY:
        m = _SHARED_LIB.match(base)
        stem = m.group("stem") if m else base
        name_version = m.group("chain") if m else None
        sm = _STEM_VERSION.match(stem)
        if sm and name_version is None:
            stem, name_version = sm.group("name"), sm.group("version")
        name = stem[3:] if stem.lower().startswith("lib") and len(stem) > 3 else stem
        name = name.lower()

    hit = _from_strings(name, data)
    if hit is not None and hit[1] is EvidenceKind.VERSION_STRING:
        version, evidence = hit
    elif name_version is not None:
        version, evidence = name_version, EvidenceKind.VERSION_STRING
    elif hit is not None:
        version, evidence = hit
    else:
        version, evidence = UNKNOWN_VERSION, EvidenceKind.FILENAME_ONLY
    return Component(name, version, kind, evidence, (path,), purl=make_purl(name, version))


def _scan_files(fs: NormalizedFileSystem, scan_roots: Sequence[str]) -> list[tuple[str, ComponentKind]]:
    files: dict[str, ComponentKind] = {}
    for root in scan_roots:
        if posixpath.basename(root.rstrip("/")).startswith("lib"):
            for ent in fs.files_under(root, recursive=True):
                if _SHARED_LIB.match(posixpath.basename(ent.path)):
                    files.setdefault(ent.path, ComponentKind.LIBRARY)
        else:
            for ent in fs.files_under(root, recursive=False):
                files.setdefault(ent.path, ComponentKind.EXECUTABLE)
    return sorted(files.items())


def identify_components(fs: NormalizedFileSystem, scan_roots: Sequence[str] = SCAN_ROOTS,
                        version_files: Sequence[str] = DEFAULT_VERSION_FILES) -> list[Component]:
    """Inventory the software in ``fs``, sorted by ``(name, version, path)``.

    Package manifests win over string heuristics for the files they list.
    Unrecognisable files are kept with the ``0.0.0-unknown`` version so they
    surface for manual review.
    """
    if not fs.ok:
        raise ValueError(f"cannot inventory a failed extraction ({fs.failure_reason.value})")
    candidates = _scan_files(fs, scan_roots)
    components, claimed = _manifest_components(fs, [p for p, _ in candidates])
    components += _declared_components(fs, version_files)
    for path, kind in candidates:
        if path in claimed:
            continue
        data = fs.read_bytes(path)
        if data is None:
            logger.warning("unreadable file skipped: %s", path)
            continue
        components.append(_file_component(path, kind, data))
    return sort_components(components)
