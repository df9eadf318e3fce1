"""Offline vulnerability snapshot loading and component matching."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from ..errors import InvalidRecord, SnapshotParseError, UnparseableVersion
from ..sbom import Component, EvidenceKind
from .versions import compare_versions, version_in_range

logger = logging.getLogger(__name__)

_VULN_ID = re.compile(r"^(CVE-\d{4}-\d{4,}|[A-Z][A-Z0-9]*-[A-Za-z0-9][\w.:-]*)$")


class MatchTier(str, Enum):
    MANIFEST_EXACT = "ManifestExact"
    NAME_HASH = "NameHash"
    FUZZY_NAME = "FuzzyName"


class Confidence(str, Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


@dataclass(frozen=True)
class AffectedRange:
    package_name: str
    introduced: str = "0"
    fixed: str | None = None


@dataclass(frozen=True)
class VulnRecord:
    vuln_id: str
    affected: tuple[AffectedRange, ...]
    cvss_base: float | None = None
    summary: str = ""

    def __post_init__(self):
        object.__setattr__(self, "affected", tuple(self.affected))
        problem = record_problem(self)
        if problem:
            raise InvalidRecord(f"{self.vuln_id}: {problem}")


def record_problem(rec: VulnRecord) -> str | None:
    """Describe the first violated record invariant, or ``None``."""
    if not isinstance(rec.vuln_id, str) or not _VULN_ID.match(rec.vuln_id):
        return f"malformed vulnerability id {rec.vuln_id!r}"
    if rec.cvss_base is not None and not 0.0 <= rec.cvss_base <= 10.0:
        return f"cvss_base {rec.cvss_base} outside [0, 10]"
    for rng in rec.affected:
        try:
            if rng.fixed is not None and compare_versions(rng.introduced, rng.fixed) > 0:
                return (f"{rng.package_name}: fixed {rng.fixed!r} precedes "
                        f"introduced {rng.introduced!r}")
        except UnparseableVersion as exc:
            return f"{rng.package_name}: {exc}"
    return None


@dataclass(frozen=True)
class RawMatch:
    component: Component
    vuln: VulnRecord
    matched_on: MatchTier
    confidence: Confidence


@dataclass(frozen=True)
class VulnDatabase:
    """Immutable snapshot indexed by lowercase package name."""

    records: tuple[VulnRecord, ...] = ()
    aliases: Mapping[str, str] = field(default_factory=dict)
    digest: str = ""

    def __post_init__(self):
        index: dict[str, list[VulnRecord]] = {}
        for rec in self.records:
            for name in sorted({r.package_name.lower() for r in rec.affected}):
                index.setdefault(name, []).append(rec)
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "aliases", MappingProxyType(
            {k.lower(): v.lower() for k, v in dict(self.aliases).items()}))
        object.__setattr__(self, "_index", MappingProxyType(
            {k: tuple(v) for k, v in index.items()}))

    def __len__(self) -> int:
        return len(self.records)

    def lookup(self, package_name: str) -> tuple[VulnRecord, ...]:
        return self._index.get(package_name.lower(), ())

    def canonical(self, name: str) -> str | None:
        return self.aliases.get(name.lower())


# -- snapshot parsing --------------------------------------------------------

def _ranges(raw_ranges: Any, ctx: str) -> list[tuple[str, str | None]]:
    out = []
    if not isinstance(raw_ranges, list):
        raise SnapshotParseError(f"{ctx}.ranges: expected list")
    for j, rng in enumerate(raw_ranges):
        if not isinstance(rng, dict):
            raise SnapshotParseError(f"{ctx}.ranges[{j}]: expected object")
        if "events" in rng:
            introduced = None
            for ev in rng["events"]:
                if "introduced" in ev:
                    introduced = str(ev["introduced"])
                elif "fixed" in ev:
                    out.append((introduced or "0", str(ev["fixed"])))
                    introduced = None
            if introduced is not None:
                out.append((introduced, None))
        else:
            fixed = rng.get("fixed")
            out.append((str(rng.get("introduced", "0")), None if fixed is None else str(fixed)))
    return out


def _cvss(raw: Any) -> float | None:
    for sev in raw.get("severity") or []:
        score = sev.get("score") if isinstance(sev, dict) else None
        try:
            return float(score)
        except (TypeError, ValueError):
            continue  # vector strings are not recomputed
    return None


def parse_record(raw: Any, index: int) -> VulnRecord:
    ctx = f"record[{index}]"
    if not isinstance(raw, dict):
        raise SnapshotParseError(f"{ctx}: expected object")
    vuln_id = raw.get("id")
    if not isinstance(vuln_id, str):
        raise SnapshotParseError(f"{ctx}: missing string field 'id'")
    ctx = f"{ctx} ({vuln_id})"
    affected = []
    for i, aff in enumerate(raw.get("affected") or []):
        try:
            name = aff["package"]["name"]
        except (KeyError, TypeError):
            raise SnapshotParseError(f"{ctx}.affected[{i}]: missing package.name") from None
        for introduced, fixed in _ranges(aff.get("ranges", [{"introduced": "0"}]), f"{ctx}.affected[{i}]"):
            affected.append(AffectedRange(str(name).lower(), introduced, fixed))
    try:
        return VulnRecord(vuln_id, tuple(affected), _cvss(raw), str(raw.get("summary", "")))
    except InvalidRecord as exc:
        raise InvalidRecord(f"{ctx}: {exc}") from None


def load_vuln_db(snapshot_file: str | os.PathLike) -> VulnDatabase:
    """Load a JSON snapshot: a bare record array or ``{"aliases", "vulnerabilities"}``.

    ``aliases`` maps a canonical package name to one alias or a list of them.
    """
    path = Path(snapshot_file)
    raw_bytes = path.read_bytes()
    digest = hashlib.sha256(raw_bytes).hexdigest()
    text = raw_bytes.decode("utf-8")
    if not text.strip():
        logger.warning("vulnerability snapshot %s is empty", path)
        return VulnDatabase(digest=digest)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None

    aliases: dict[str, str] = {}
    if isinstance(doc, list):
        items = doc
    elif isinstance(doc, dict):
        items = doc.get("vulnerabilities", [])
        for canonical, alias_list in (doc.get("aliases") or {}).items():
            if isinstance(alias_list, str):
                alias_list = [alias_list]
            for alias in alias_list:
                aliases[str(alias).lower()] = str(canonical).lower()
    else:
        raise SnapshotParseError(f"{path}: expected array or object at top level")
    if not isinstance(items, list):
        raise SnapshotParseError(f"{path}: 'vulnerabilities' must be an array")
    records = [parse_record(item, i) for i, item in enumerate(items)]
    return VulnDatabase(tuple(records), aliases, digest)


# -- matching ----------------------------------------------------------------

def assign_confidence(evidence_kind: EvidenceKind, matched_on: MatchTier) -> Confidence:
    """Waterfall: manifest-exact is High, any non-fuzzy corroborated match Medium, else Low."""
    evidence_kind, matched_on = EvidenceKind(evidence_kind), MatchTier(matched_on)
    if evidence_kind is EvidenceKind.MANIFEST and matched_on is MatchTier.MANIFEST_EXACT:
        return Confidence.HIGH
    if (evidence_kind is not EvidenceKind.FILENAME_ONLY
            and matched_on is not MatchTier.FUZZY_NAME):
        return Confidence.MEDIUM
    return Confidence.LOW


def _exact_tier(evidence_kind: EvidenceKind) -> MatchTier:
    if evidence_kind is EvidenceKind.MANIFEST:
        return MatchTier.MANIFEST_EXACT
    if evidence_kind is EvidenceKind.VERSION_STRING:
        return MatchTier.NAME_HASH
    return MatchTier.FUZZY_NAME


def _affects(rec: VulnRecord, package: str, version: str) -> bool:
    for rng in rec.affected:
        if rng.package_name != package:
            continue
        try:
            if version_in_range(version, rng.introduced, rng.fixed):
                return True
        except UnparseableVersion as exc:
            logger.warning("skipping %s range for %s@%s: %s", rec.vuln_id, package, version, exc)
    return False


def match_component(component: Component, db: VulnDatabase) -> list[RawMatch]:
    """All vulnerabilities in ``db`` whose affected ranges contain ``component``.

    Names match case-insensitively, or through the snapshot alias table (which
    always yields the fuzzy tier).  Unknown-version components never match.
    """
    if component.unknown_version:
        return []
    name = component.name.lower()
    lookups = [(name, _exact_tier(component.evidence_kind))]
    canonical = db.canonical(name)
    if canonical and canonical != name:
        lookups.append((canonical, MatchTier.FUZZY_NAME))

    matches: dict[str, RawMatch] = {}
    for package, tier in lookups:
        for rec in db.lookup(package):
            if rec.vuln_id in matches or not _affects(rec, package, component.version):
                continue
            matches[rec.vuln_id] = RawMatch(
                component, rec, tier, assign_confidence(component.evidence_kind, tier))
    return [matches[k] for k in sorted(matches)]


def match_all(components: Iterable[Component], db: VulnDatabase) -> list[RawMatch]:
    out: list[RawMatch] = []
    for comp in components:
        out.extend(match_component(comp, db))
    return out
