"""Pipeline configuration loaded from TOML or JSON."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .extraction import DEFAULT_DEPTH_LIMIT, Format
from .feeds import DEFAULT_EPSS_ENDPOINT
from .matching import Confidence
from .sbom import DEFAULT_VERSION_FILES, SCAN_ROOTS
from .scoring import BandThresholds, ScoreWeights, ScoringConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CVSS_CRITICAL = 9.0
SPOT_CHECK_FRACTION = 0.05


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path = Path("firmtriage-out")
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    scan_roots: tuple[str, ...] = SCAN_ROOTS
    version_files: tuple[str, ...] = DEFAULT_VERSION_FILES
    vuln_db: Path | None = None
    epss_snapshot: Path | None = None
    kev_snapshot: Path | None = None
    offline: bool = False
    epss_endpoint: str = DEFAULT_EPSS_ENDPOINT
    adapters: Mapping[str, str] = field(default_factory=dict)
    seed: int | None = None
    timestamp: str | None = None
    serial_number: str | None = None
    cvss_critical: float = CVSS_CRITICAL
    spot_check_fraction: float = SPOT_CHECK_FRACTION

    def __post_init__(self):
        if self.depth_limit < 1:
            raise ConfigError("depth_limit must be >= 1")
        for name in ("vuln_db", "epss_snapshot", "kev_snapshot"):
            value = getattr(self, name)
            if value is not None:
                value = Path(value)
                object.__setattr__(self, name, value)
                if not value.is_file():
                    raise ConfigError(f"{name}: file not found: {value}")
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        valid = {f.value for f in Format}
        for key in self.adapters:
            if key not in valid:
                raise ConfigError(f"adapter for unknown format {key!r}")
        if not 0.0 < self.spot_check_fraction <= 1.0:
            raise ConfigError("spot_check_fraction must be in (0, 1]")

    def with_overrides(self, **changes: Any) -> "PipelineConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        try:
            return replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _scoring(raw: Mapping[str, Any]) -> ScoringConfig:
    try:
        weights = ScoreWeights(**raw.get("weights", {}))
        bands = BandThresholds(**raw.get("bands", {}))
        mult = {Confidence.HIGH: 1.0, Confidence.MEDIUM: 0.9, Confidence.LOW: 0.5}
        for k, v in raw.get("confidence_multipliers", {}).items():
            mult[Confidence(k)] = float(v)
        return ScoringConfig(weights, bands, mult)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scoring configuration: {exc}") from None


def config_from_mapping(raw: Mapping[str, Any], base_dir: Path = Path(".")) -> PipelineConfig:
    known = {"out", "depth_limit", "weights", "bands", "confidence_multipliers", "scan_roots",
             "version_files", "vuln_db", "epss_snapshot", "kev_snapshot", "offline",
             "epss_endpoint", "adapters", "seed", "timestamp", "serial_number",
             "cvss_critical_threshold", "spot_check_fraction"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")

    def path(key: str) -> Path | None:
        value = raw.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    kwargs: dict[str, Any] = {
        "scoring": _scoring(raw),
        "vuln_db": path("vuln_db"),
        "epss_snapshot": path("epss_snapshot"),
        "kev_snapshot": path("kev_snapshot"),
        "adapters": dict(raw.get("adapters", {})),
    }
    if "out" in raw:
        kwargs["out_dir"] = path("out")
    simple = {"depth_limit": int, "offline": bool, "epss_endpoint": str, "seed": int,
              "timestamp": str, "serial_number": str, "spot_check_fraction": float}
    for key, typ in simple.items():
        if key in raw:
            kwargs[key] = typ(raw[key])
    if "cvss_critical_threshold" in raw:
        kwargs["cvss_critical"] = float(raw["cvss_critical_threshold"])
    for key in ("scan_roots", "version_files"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    return PipelineConfig(**kwargs)


def load_config(path: str | os.PathLike | None = None) -> PipelineConfig:
    """Load a ``.toml`` or ``.json`` config; relative paths resolve against its directory."""
    if path is None:
        return PipelineConfig()
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    try:
        raw = json.loads(text) if p.suffix == ".json" else tomllib.loads(text.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a table/object")
    return config_from_mapping(raw, p.parent)
