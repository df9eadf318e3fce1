"""Component inventory and CycloneDX serialisation."""

from .components import (DEFAULT_VERSION_FILES, SCAN_ROOTS, UNKNOWN_VERSION, Component,
                         ComponentKind, EvidenceKind, identify_components, make_cpe,
                         make_purl, parse_status_stanzas, sort_components)
from .cyclonedx import SBOMDocument, build_sbom, document_json, dumps, make_document, parse_sbom
from .strings import extract_version_strings, names_match, printable_runs

__all__ = [
    "DEFAULT_VERSION_FILES", "SCAN_ROOTS", "UNKNOWN_VERSION", "Component", "ComponentKind",
    "EvidenceKind", "SBOMDocument", "build_sbom", "document_json", "dumps",
    "extract_version_strings", "identify_components", "make_cpe", "make_document",
    "make_purl", "names_match", "parse_sbom", "parse_status_stanzas", "printable_runs",
    "sort_components",
]
