"""Risk Priority Score: weighted severity, exploitability and exposure context."""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .extraction import EntryKind, NormalizedFileSystem
from .feeds import EnrichmentSnapshot
from .matching import Confidence, RawMatch
from .sbom import Component

CONTEXT_DEFAULT = 5.0
CONTEXT_HIGH = 10.0
CVSS_DEFAULT = 5.0
KEV_EXPLOIT = 10.0

CRITICAL_PATHS = ("/usr/sbin/", "/sbin/")
INIT_DIRS = ("/etc/init.d", "/etc/rc.d")
SYSTEMD_DIRS = ("/etc/systemd/system", "/lib/systemd/system", "/usr/lib/systemd/system")

# key -> regex capturing a port number on one config line
PORT_KEYS: dict[str, re.Pattern] = {
    "port=": re.compile(r"^\s*port(?:\s*=\s*|\s+)['\"]?(\d{1,5})\b", re.I),
    "server.port": re.compile(r"^\s*server\.port\s*=\s*['\"]?(\d{1,5})\b"),
    "ListenAddress": re.compile(r"^\s*ListenAddress\s+(?:\S*:)?(\d{1,5})\s*$"),
    "Listen": re.compile(r"^\s*Listen\s+(?:\S*:)?(\d{1,5})\b"),
}
_RC_PREFIX = re.compile(r"^[SK]\d{2}")
_CONFIG_SUFFIX = re.compile(r"[-_]conf(?:ig)?$")


class Band(str, Enum):
    CRITICAL = "Critical"
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


class SignalKind(str, Enum):
    CONFIG_FILE = "ConfigFile"
    INIT_SCRIPT = "InitScript"
    CRITICAL_PATH = "CriticalPath"
    OPEN_PORT = "OpenPort"


_SIGNAL_ORDER = {k: i for i, k in enumerate(SignalKind)}


@dataclass(frozen=True)
class ScoreWeights:
    w_b: float = 3.0
    w_e: float = 4.0
    w_c: float = 3.0

    def __post_init__(self):
        if min(self.w_b, self.w_e, self.w_c) < 0:
            raise ValueError("weights must be non-negative")
        if 10.0 * (self.w_b + self.w_e + self.w_c) > 100.0:
            raise ValueError("weights would allow a score above 100")


@dataclass(frozen=True)
class BandThresholds:
    """Lower bounds of the Critical, High and Medium bands; Low starts at 0."""

    critical: float = 90.0
    high: float = 70.0
    medium: float = 40.0

    def __post_init__(self):
        if not 0.0 < self.medium < self.high < self.critical <= 100.0:
            raise ValueError("band thresholds must satisfy 0 < medium < high < critical <= 100")

    def intervals(self) -> list[tuple[Band, float, float]]:
        return [(Band.LOW, 0.0, self.medium), (Band.MEDIUM, self.medium, self.high),
                (Band.HIGH, self.high, self.critical), (Band.CRITICAL, self.critical, 100.0)]


DEFAULT_MULTIPLIERS: Mapping[Confidence, float] = {
    Confidence.HIGH: 1.0, Confidence.MEDIUM: 0.9, Confidence.LOW: 0.5,
}


@dataclass(frozen=True)
class ScoringConfig:
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    bands: BandThresholds = field(default_factory=BandThresholds)
    multipliers: Mapping[Confidence, float] = field(default_factory=lambda: dict(DEFAULT_MULTIPLIERS))

    def __post_init__(self):
        mult = {Confidence(k): float(v) for k, v in dict(self.multipliers).items()}
        if set(mult) != set(Confidence) or any(not 0 <= v <= 1 for v in mult.values()):
            raise ValueError("confidence multipliers must cover High/Medium/Low with values in [0, 1]")
        object.__setattr__(self, "multipliers", mult)


@dataclass(frozen=True)
class ScoreFactors:
    b: float
    e: float
    c: float
    b_defaulted: bool = False
    e_missing: bool = False

    def __post_init__(self):
        if not 0.0 <= self.b <= 10.0:
            raise ValueError(f"b={self.b} outside [0, 10]")
        if not 0.0 <= self.e <= 10.0:
            raise ValueError(f"e={self.e} outside [0, 10]")
        if not 0.0 <= self.c <= 10.0:
            raise ValueError(f"c={self.c} outside [0, 10]")


@dataclass(frozen=True)
class ContextSignal:
    kind: SignalKind
    evidence_path: str
    detail: str = ""


@dataclass(frozen=True)
class Finding:
    component: Component
    vuln_id: str
    confidence: Confidence
    factors: ScoreFactors
    rps: float
    adjusted_rps: float
    band: Band
    context_evidence: tuple[ContextSignal, ...] = ()
    kev: bool = False
    epss: float | None = None
    cvss_base: float | None = None
    matched_on: str = ""
    summary: str = ""


def exploit_factor(epss: float | None, in_kev: bool) -> tuple[float, bool]:
    """Exploitability in [0, 10] and whether it had to be defaulted to 0."""
    if in_kev:
        return KEV_EXPLOIT, False
    if epss is None:
        return 0.0, True
    if not 0.0 <= epss <= 1.0:
        raise ValueError(f"EPSS probability {epss} outside [0, 1]")
    return epss * 10.0, False


def _names(component: Component) -> set[str]:
    names = {component.name.lower()}
    for p in component.evidence_paths:
        if "/bin/" in p or "/sbin/" in p:
            names.add(posixpath.basename(p).lower())
    return names


def _config_ports(fs: NormalizedFileSystem, path: str) -> list[str]:
    raw = fs.read_bytes(path)
    if raw is None:
        return []
    ports = []
    for line in raw.decode("utf-8", "replace").splitlines():
        if line.lstrip().startswith("#"):
            continue
        for pattern in PORT_KEYS.values():
            m = pattern.match(line)
            if m and 0 < int(m.group(1)) < 65536:
                ports.append(m.group(1))
                break
    return sorted(set(ports), key=int)


def _references(fs: NormalizedFileSystem, path: str, component: Component, names: set[str]) -> bool:
    raw = fs.read_bytes(path)
    if raw is None:
        return False
    text = raw.decode("utf-8", "replace")
    if any(p in text for p in component.evidence_paths if p.count("/") > 1):
        return True
    return any(re.search(rf"(?:^|[\s/=]){re.escape(n)}(?:$|\s)", text, re.M) for n in names)


def context_factor(component: Component, fs: NormalizedFileSystem) -> tuple[float, list[ContextSignal]]:
    """Exposure context: 10 if any deployment signal fires, else 5."""
    if not fs.ok:
        raise ValueError("context requires a successfully extracted filesystem")
    names = _names(component)
    signals: list[ContextSignal] = []

    init_paths = set()
    for d in INIT_DIRS:
        for ent in fs.entries_under(d):
            if ent.kind is EntryKind.DIRECTORY:
                continue
            init_paths.add(ent.path)
            base = _RC_PREFIX.sub("", posixpath.basename(ent.path)).lower()
            if base in names:
                signals.append(ContextSignal(SignalKind.INIT_SCRIPT, ent.path))
    for d in SYSTEMD_DIRS:
        for ent in fs.files_under(d):
            if ent.path.endswith(".service") and _references(fs, ent.path, component, names):
                signals.append(ContextSignal(SignalKind.INIT_SCRIPT, ent.path))

    for ent in fs.files_under("/etc"):
        if ent.path in init_paths or ent.path.startswith("/etc/systemd/"):
            continue
        stem = _CONFIG_SUFFIX.sub("", posixpath.basename(ent.path).split(".", 1)[0].lower())
        if stem in names:
            signals.append(ContextSignal(SignalKind.CONFIG_FILE, ent.path))
            for port in _config_ports(fs, ent.path):
                signals.append(ContextSignal(SignalKind.OPEN_PORT, ent.path, port))

    for p in component.evidence_paths:
        if p.startswith(CRITICAL_PATHS):
            signals.append(ContextSignal(SignalKind.CRITICAL_PATH, p))

    signals = sorted(set(signals), key=lambda s: (_SIGNAL_ORDER[s.kind], s.evidence_path, s.detail))
    return (CONTEXT_HIGH if signals else CONTEXT_DEFAULT), signals


def compute_rps(factors: ScoreFactors, weights: ScoreWeights = ScoreWeights()) -> float:
    return factors.b * weights.w_b + factors.e * weights.w_e + factors.c * weights.w_c


def apply_confidence_penalty(rps: float, confidence: Confidence,
                             multipliers: Mapping[Confidence, float] = DEFAULT_MULTIPLIERS) -> float:
    return min(100.0, max(0.0, rps * multipliers[Confidence(confidence)]))


def assign_band(adjusted_rps: float, thresholds: BandThresholds = BandThresholds()) -> Band:
    if not 0.0 <= adjusted_rps <= 100.0:
        raise ValueError(f"score {adjusted_rps} outside [0, 100]")
    if adjusted_rps >= thresholds.critical:
        return Band.CRITICAL
    if adjusted_rps >= thresholds.high:
        return Band.HIGH
    if adjusted_rps >= thresholds.medium:
        return Band.MEDIUM
    return Band.LOW


def score_match(match: RawMatch, snapshot: EnrichmentSnapshot, fs: NormalizedFileSystem | None,
                config: ScoringConfig = ScoringConfig()) -> Finding:
    """Turn one raw match into a scored finding.

    Without a filesystem (re-scoring an archived SBOM) the context stays at
    its default of 5.
    """
    vid = match.vuln.vuln_id
    in_kev = vid in snapshot.kev
    epss = snapshot.epss.get(vid)
    e, e_missing = exploit_factor(epss, in_kev)
    cvss = match.vuln.cvss_base
    b, b_defaulted = (CVSS_DEFAULT, True) if cvss is None else (cvss, False)
    if fs is not None and fs.ok:
        c, signals = context_factor(match.component, fs)
    else:
        c, signals = CONTEXT_DEFAULT, []
    factors = ScoreFactors(b, e, c, b_defaulted, e_missing)
    rps = compute_rps(factors, config.weights)
    adjusted = apply_confidence_penalty(rps, match.confidence, config.multipliers)
    return Finding(
        component=match.component, vuln_id=vid, confidence=match.confidence,
        factors=factors, rps=rps, adjusted_rps=adjusted,
        band=assign_band(adjusted, config.bands), context_evidence=tuple(signals),
        kev=in_kev, epss=epss, cvss_base=cvss, matched_on=match.matched_on.value,
        summary=match.vuln.summary,
    )


def rank(findings: Iterable[Finding]) -> list[Finding]:
    """Highest adjusted score first; ties go to KEV entries, then ascending id."""
    return sorted(findings, key=lambda f: (-f.adjusted_rps, not f.kev, f.vuln_id,
                                           f.component.key))


def score_all(matches: Sequence[RawMatch], snapshot: EnrichmentSnapshot,
              fs: NormalizedFileSystem | None, config: ScoringConfig = ScoringConfig()) -> list[Finding]:
    return rank(score_match(m, snapshot, fs, config) for m in matches)
