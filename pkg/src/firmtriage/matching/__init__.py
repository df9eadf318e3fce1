"""Vulnerability snapshot matching with confidence tiers."""

from .matcher import (AffectedRange, Confidence, MatchTier, RawMatch, VulnDatabase, VulnRecord,
                      assign_confidence, load_vuln_db, match_all, match_component, parse_record)
from .versions import compare_versions, version_in_range, version_key

__all__ = [
    "AffectedRange", "Confidence", "MatchTier", "RawMatch", "VulnDatabase", "VulnRecord",
    "assign_confidence", "compare_versions", "load_vuln_db", "match_all", "match_component",
    "parse_record", "version_in_range", "version_key",
]
