"""CycloneDX 1.5 JSON subset: emission and validating parser."""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .. import TOOL_NAME, __version__
from ..errors import DuplicateComponent, SchemaViolation
from ..extraction.recursive import utc_now
from .components import Component, ComponentKind, EvidenceKind, UNKNOWN_VERSION, sort_components

BOM_FORMAT = "CycloneDX"
SPEC_VERSION = "1.5"
PROPERTY_PREFIX = f"{TOOL_NAME}:"

_SERIAL = re.compile(r"^urn:uuid:[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")
_CDX_TYPE = {
    ComponentKind.EXECUTABLE: "application",
    ComponentKind.LIBRARY: "library",
    ComponentKind.CONFIG_DECLARED: "application",
    ComponentKind.MANIFEST_DECLARED: "application",
}


@dataclass(frozen=True)
class SBOMDocument:
    sample_id: str
    timestamp: str
    serial_number: str
    components: tuple[Component, ...] = field(default_factory=tuple)
    sample_sha256: str | None = None
    tool_name: str = TOOL_NAME
    tool_version: str = __version__
    spec_version: str = SPEC_VERSION
    bom_format: str = BOM_FORMAT

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))


def _component_json(c: Component) -> dict[str, Any]:
    out: dict[str, Any] = {"type": _CDX_TYPE[c.kind], "name": c.name, "version": c.version}
    if c.purl is not None:
        out["purl"] = c.purl
    if c.cpe is not None:
        out["cpe"] = c.cpe
    out["evidence"] = {"occurrences": [{"location": p} for p in c.evidence_paths]}
    out["properties"] = [
        {"name": PROPERTY_PREFIX + "kind", "value": c.kind.value},
        {"name": PROPERTY_PREFIX + "evidence_kind", "value": c.evidence_kind.value},
    ]
    return out


def document_json(doc: SBOMDocument) -> dict[str, Any]:
    subject: dict[str, Any] = {"type": "firmware", "name": doc.sample_id}
    if doc.sample_sha256:
        subject["hashes"] = [{"alg": "SHA-256", "content": doc.sample_sha256}]
    return {
        "bomFormat": doc.bom_format,
        "specVersion": doc.spec_version,
        "serialNumber": doc.serial_number,
        "version": 1,
        "metadata": {
            "timestamp": doc.timestamp,
            "tools": [{"name": doc.tool_name, "version": doc.tool_version}],
            "component": subject,
        },
        "components": [_component_json(c) for c in doc.components],
    }


def dumps(doc: SBOMDocument) -> str:
    return json.dumps(document_json(doc), indent=2, ensure_ascii=False) + "\n"


def make_document(components: Iterable[Component], sample_meta: Any,
                  timestamp: str | None = None, serial_number: str | None = None) -> SBOMDocument:
    """Assemble a document, rejecting duplicate ``(name, version, path)`` keys."""
    ordered = sort_components(components)
    seen: set[tuple[str, str, str]] = set()
    for c in ordered:
        if c.key in seen:
            raise DuplicateComponent(f"duplicate component {c.ref}")
        seen.add(c.key)
    meta = sample_meta if isinstance(sample_meta, Mapping) else sample_meta.metadata()
    return SBOMDocument(
        sample_id=meta["sample_id"],
        timestamp=timestamp or utc_now(),
        serial_number=serial_number or uuid.uuid4().urn,
        components=tuple(ordered),
        sample_sha256=meta.get("sha256") or None,
    )


def build_sbom(components: Iterable[Component], sample_meta: Any,
               timestamp: str | None = None, serial_number: str | None = None) -> str:
    """Serialise ``components`` as CycloneDX JSON text.

    ``sample_meta`` is a :class:`FirmwareImage` or a mapping with at least
    ``sample_id``.  Pass ``timestamp`` and ``serial_number`` for byte-stable
    output.
    """
    return dumps(make_document(components, sample_meta, timestamp, serial_number))


# -- parsing -----------------------------------------------------------------

def _get(obj: Mapping, key: str, typ: type | tuple[type, ...], path: str, required: bool = True):
    if key not in obj:
        if required:
            raise SchemaViolation(path, "missing required field")
        return None
    value = obj[key]
    if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
        raise SchemaViolation(path, f"expected {getattr(typ, '__name__', typ)}, got {type(value).__name__}")
    return value


def _parse_component(raw: Any, path: str) -> Component:
    if not isinstance(raw, dict):
        raise SchemaViolation(path, "expected object")
    name = _get(raw, "name", str, f"{path}.name")
    version = _get(raw, "version", str, f"{path}.version")
    ctype = _get(raw, "type", str, f"{path}.type")
    purl = _get(raw, "purl", str, f"{path}.purl", required=False)
    cpe = _get(raw, "cpe", str, f"{path}.cpe", required=False)
    evidence = _get(raw, "evidence", dict, f"{path}.evidence")
    occurrences = _get(evidence, "occurrences", list, f"{path}.evidence.occurrences")
    if not occurrences:
        raise SchemaViolation(f"{path}.evidence.occurrences", "must not be empty")
    locations = []
    for i, occ in enumerate(occurrences):
        opath = f"{path}.evidence.occurrences[{i}]"
        if not isinstance(occ, dict):
            raise SchemaViolation(opath, "expected object")
        locations.append(_get(occ, "location", str, f"{opath}.location"))

    props: dict[str, str] = {}
    for i, prop in enumerate(_get(raw, "properties", list, f"{path}.properties", required=False) or []):
        ppath = f"{path}.properties[{i}]"
        if not isinstance(prop, dict):
            raise SchemaViolation(ppath, "expected object")
        props[_get(prop, "name", str, f"{ppath}.name")] = _get(prop, "value", str, f"{ppath}.value")

    # Documents from other generators lack our properties; infer from type/version.
    kind_raw = props.get(PROPERTY_PREFIX + "kind",
                         "Library" if ctype == "library" else "Executable")
    evidence_raw = props.get(PROPERTY_PREFIX + "evidence_kind",
                             "FilenameOnly" if version == UNKNOWN_VERSION else "VersionString")
    try:
        kind = ComponentKind(kind_raw)
    except ValueError:
        raise SchemaViolation(f"{path}.properties", f"unknown component kind {kind_raw!r}") from None
    try:
        evidence_kind = EvidenceKind(evidence_raw)
    except ValueError:
        raise SchemaViolation(f"{path}.properties", f"unknown evidence kind {evidence_raw!r}") from None
    try:
        return Component(name, version, kind, evidence_kind, tuple(locations), purl, cpe)
    except ValueError as exc:
        raise SchemaViolation(path, str(exc)) from None


def parse_sbom(json_text: str) -> SBOMDocument:
    """Parse and validate a CycloneDX document produced by :func:`build_sbom`."""
    try:
        raw = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("$", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaViolation("$", "expected object")
    bom_format = _get(raw, "bomFormat", str, "bomFormat")
    if bom_format != BOM_FORMAT:
        raise SchemaViolation("bomFormat", f"expected {BOM_FORMAT!r}, got {bom_format!r}")
    spec_version = _get(raw, "specVersion", str, "specVersion")
    serial = _get(raw, "serialNumber", str, "serialNumber")
    if not _SERIAL.match(serial):
        raise SchemaViolation("serialNumber", "not an RFC 4122 UUID URN")
    meta = _get(raw, "metadata", dict, "metadata")
    timestamp = _get(meta, "timestamp", str, "metadata.timestamp")
    tools = _get(meta, "tools", list, "metadata.tools")
    tool_name, tool_version = TOOL_NAME, __version__
    if tools:
        if not isinstance(tools[0], dict):
            raise SchemaViolation("metadata.tools[0]", "expected object")
        tool_name = _get(tools[0], "name", str, "metadata.tools[0].name")
        tool_version = _get(tools[0], "version", str, "metadata.tools[0].version")
    subject = _get(meta, "component", dict, "metadata.component")
    sample_id = _get(subject, "name", str, "metadata.component.name")
    sha = None
    for i, h in enumerate(_get(subject, "hashes", list, "metadata.component.hashes", required=False) or []):
        if isinstance(h, dict) and h.get("alg") == "SHA-256":
            sha = _get(h, "content", str, f"metadata.component.hashes[{i}].content")
    comps = _get(raw, "components", list, "components")
    components = tuple(_parse_component(c, f"components[{i}]") for i, c in enumerate(comps))
    return SBOMDocument(
        sample_id=sample_id, timestamp=timestamp, serial_number=serial,
        components=components, sample_sha256=sha, tool_name=tool_name,
        tool_version=tool_version, spec_version=spec_version, bom_format=bom_format,
    )
