"""Stage orchestration, artifact layout and the corpus evaluation harness.

Per-sample workspace under ``<out>/<sample_id>/``::

    01-carve/            carved blobs and intermediate layers
    02-rootfs/           normalised root filesystem
    extraction.log       one line per extraction event
    manifest.json        sample metadata and extraction outcome
    03-sbom.cdx.json     CycloneDX inventory
    epss-cache.csv       EPSS values fetched online (absent when offline)
    04-findings.json     full triage report
    05-report.md         analyst summary
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import random
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

from . import TOOL_NAME, __version__
from .config import PipelineConfig
from .errors import FirmTriageError, ManifestError
from .extraction import FirmwareImage, NormalizedFileSystem, extract_recursive, normalize
from .extraction.recursive import utc_now
from .feeds import EnrichmentSnapshot, Transport, fetch_epss, load_snapshot
from .matching import VulnDatabase, load_vuln_db, match_all
from .report import SUCCESS, TriageReport, emit_report, finding_id
from .sbom import SBOMDocument, dumps, identify_components, make_document, parse_sbom
from .scoring import score_all
from .sbom.strings import extract_version_strings

logger = logging.getLogger(__name__)

SBOM_FILE = "03-sbom.cdx.json"
MANIFEST_FILE = "manifest.json"
EPSS_CACHE = "epss-cache.csv"
MANIFEST_COLUMNS = ("sample_id", "device_type", "vendor", "release_year", "image_path")


def _clock(config: PipelineConfig) -> Callable[[], str]:
    return (lambda: config.timestamp) if config.timestamp else utc_now


def _serial(config: PipelineConfig, image: FirmwareImage) -> str:
    if config.serial_number:
        return config.serial_number
    if config.seed is not None:
        rng = random.Random(f"{config.seed}:{image.sha256}")
        return uuid.UUID(int=rng.getrandbits(128), version=4).urn
    return uuid.uuid4().urn


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def _sample_record(image: FirmwareImage, fs: NormalizedFileSystem) -> dict[str, Any]:
    rec = image.metadata()
    rec["extracted"] = fs.ok
    rec["filesystem"] = fs.filesystem
    return rec


def extraction_stage(image: FirmwareImage, config: PipelineConfig) -> tuple[Path, NormalizedFileSystem]:
    ws = config.out_dir / image.sample_id
    ws.mkdir(parents=True, exist_ok=True)
    fs = extract_recursive(image, config.depth_limit, ws, config.adapters, _clock(config))
    _write_json(ws / MANIFEST_FILE, {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "sample": _sample_record(image, fs),
        "extraction": {
            "outcome": SUCCESS if fs.ok else fs.failure_reason.value,
            "loop_flags": [list(p) for p in sorted(fs.loop_flags)],
            "entries": len(fs.entries),
        },
    })
    return ws, fs


def sbom_stage(image: FirmwareImage, fs: NormalizedFileSystem, ws: Path,
               config: PipelineConfig) -> SBOMDocument:
    components = identify_components(fs, config.scan_roots, config.version_files)
    doc = make_document(components, image, config.timestamp, _serial(config, image))
    (ws / SBOM_FILE).write_text(dumps(doc), encoding="utf-8")
    return doc


def enrichment_snapshot(vuln_ids: list[str], config: PipelineConfig, ws: Path | None,
                        transport: Transport | None = None) -> EnrichmentSnapshot:
    """Offline snapshots, optionally overlaid with live EPSS values."""
    snapshot = load_snapshot(config.epss_snapshot, config.kev_snapshot)
    if config.offline or not vuln_ids:
        return snapshot
    fetched = fetch_epss(vuln_ids, config.epss_endpoint, transport=transport, snapshot=snapshot,
                         cache_path=(ws / EPSS_CACHE) if ws is not None else None)
    return snapshot.with_epss(fetched)


def scoring_stage(sample: dict[str, Any], doc: SBOMDocument, fs: NormalizedFileSystem | None,
                  config: PipelineConfig, ws: Path | None,
                  transport: Transport | None = None,
                  loop_flags: list[tuple[str, str]] | None = None) -> TriageReport:
    """Match, enrich and score an SBOM; emit the report when ``ws`` is given."""
    db = load_vuln_db(config.vuln_db) if config.vuln_db else VulnDatabase()
    known = [c for c in doc.components if not c.unknown_version]
    matches = match_all(known, db)
    snapshot = enrichment_snapshot(sorted({m.vuln.vuln_id for m in matches}), config, ws, transport)
    findings = score_all(matches, snapshot, fs, config.scoring)
    report = TriageReport(
        sample=sample,
        outcome=SUCCESS,
        component_count=len(doc.components),
        manual_review=[c for c in doc.components if c.unknown_version],
        findings=findings,
        provenance={
            "epss_date": snapshot.epss_date.isoformat() if snapshot.epss_date else None,
            "kev_date": snapshot.kev_date.isoformat() if snapshot.kev_date else None,
            "vuln_db_sha256": db.digest or None,
            "offline": config.offline,
        },
        loop_flags=list(loop_flags or []),
    )
    if ws is not None:
        emit_report(report, ws)
    return report


def run_pipeline(image: FirmwareImage, config: PipelineConfig,
                 transport: Transport | None = None, sbom_only: bool = False) -> TriageReport:
    """Extract, inventory, match, enrich and score one image.

    Each stage writes its artifact before the next starts.  A failed
    extraction short-circuits into a report with zero findings; errors in
    later stages are recorded in ``outcome`` and the report is still written.
    """
    ws, fs = extraction_stage(image, config)
    sample = _sample_record(image, fs)
    loops = sorted(fs.loop_flags)
    if not fs.ok:
        report = TriageReport(sample, fs.failure_reason.value, loop_flags=loops)
        emit_report(report, ws)
        return report
    try:
        doc = sbom_stage(image, fs, ws, config)
        if sbom_only:
            return TriageReport(sample, SUCCESS, len(doc.components),
                                [c for c in doc.components if c.unknown_version], loop_flags=loops)
        return scoring_stage(sample, doc, fs, config, ws, transport, loops)
    except FirmTriageError as exc:
        logger.error("%s: %s", image.sample_id, exc)
        report = TriageReport(sample, f"Error: {type(exc).__name__}: {exc}", loop_flags=loops)
        emit_report(report, ws)
        return report


def rescore(sample_dir: str | os.PathLike, config: PipelineConfig,
            transport: Transport | None = None) -> TriageReport:
    """Regenerate 04/05 from the preserved rootfs, manifest and SBOM of a sample."""
    ws = Path(sample_dir)
    manifest = json.loads((ws / MANIFEST_FILE).read_text(encoding="utf-8"))
    doc = parse_sbom((ws / SBOM_FILE).read_text(encoding="utf-8"))
    rootfs = ws / "02-rootfs"
    fs = normalize(rootfs) if rootfs.is_dir() else None
    loops = [tuple(p) for p in manifest["extraction"]["loop_flags"]]
    return scoring_stage(manifest["sample"], doc, fs, config, ws, transport, loops)


def score_sbom(sbom_path: str | os.PathLike, config: PipelineConfig,
               rootfs: str | os.PathLike | None = None, out_dir: str | os.PathLike | None = None,
               transport: Transport | None = None) -> TriageReport:
    """Score an archived SBOM without re-extracting the image."""
    path = Path(sbom_path)
    doc = parse_sbom(path.read_text(encoding="utf-8"))
    fs = normalize(rootfs) if rootfs is not None and Path(rootfs).is_dir() else None
    sample = {"sample_id": doc.sample_id, "sha256": doc.sample_sha256, "extracted": True}
    ws = Path(out_dir) if out_dir is not None else path.parent
    return scoring_stage(sample, doc, fs, config, ws, transport)


def strings_baseline(image: FirmwareImage) -> int:
    """Distinct (product, version) pairs visible in the raw image bytes."""
    return len(set(extract_version_strings(image.image_bytes)))


# -- evaluation --------------------------------------------------------------

@dataclass
class EvaluationMetrics:
    total: int
    extracted: int
    extraction_success_rate: float
    component_visibility: dict[str, dict[str, int]] = field(default_factory=dict)
    triage_efficiency: dict[str, dict[str, int]] = field(default_factory=dict)
    spot_check_sample: list[str] = field(default_factory=list)
    total_findings: int = 0
    outcomes: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def spot_check(finding_ids: list[str], fraction: float = 0.05, seed: int = 0) -> list[str]:
    """Reproducible manual-verification sample of ``ceil(fraction * n)`` finding ids."""
    # exact rational product: 0.05 * 60 is 3.0000000000000004 in floats
    k = math.ceil(Fraction(repr(fraction)) * len(finding_ids))
    return sorted(random.Random(seed).sample(sorted(finding_ids), k))


@dataclass(frozen=True)
class ManifestRow:
    sample_id: str
    device_type: str
    vendor: str
    release_year: int | None
    image_path: Path


def read_manifest(corpus_manifest: str | os.PathLike) -> list[ManifestRow]:
    path = Path(corpus_manifest)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != list(MANIFEST_COLUMNS):
        raise ManifestError(f"{path}: header must be {','.join(MANIFEST_COLUMNS)}")
    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        sid = (rec["sample_id"] or "").strip()
        if not sid or sid in seen:
            raise ManifestError(f"{path}:{lineno}: missing or duplicate sample_id {sid!r}")
        seen.add(sid)
        year = (rec["release_year"] or "").strip()
        try:
            release_year = int(year) if year else None
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad release_year {year!r}") from None
        image = Path((rec["image_path"] or "").strip())
        rows.append(ManifestRow(sid, rec["device_type"].strip(), rec["vendor"].strip(),
                                release_year, image if image.is_absolute() else path.parent / image))
    if not rows:
        raise ManifestError(f"{path}: corpus is empty")
    return rows


def _evaluate_one(row: ManifestRow, config: PipelineConfig,
                  transport: Transport | None) -> tuple[ManifestRow, TriageReport | None, int, str]:
    if not row.image_path.is_file():
        msg = f"ManifestError: image not found: {row.image_path}"
        logger.warning("%s: %s", row.sample_id, msg)
        return row, None, 0, msg
    image = FirmwareImage.from_path(row.image_path, row.sample_id, device_type=row.device_type,
                                    vendor=row.vendor, release_year=row.release_year)
    report = run_pipeline(image, config, transport)
    return row, report, strings_baseline(image), report.outcome


def evaluate(corpus_manifest: str | os.PathLike, config: PipelineConfig,
             transport: Transport | None = None, workers: int = 1) -> EvaluationMetrics:
    """Run every manifest sample and compute the corpus metrics.

    Samples whose image is missing or whose extraction fails count towards the
    success-rate denominator only.
    """
    rows = read_manifest(corpus_manifest)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: _evaluate_one(r, config, transport), rows))
    else:
        results = [_evaluate_one(r, config, transport) for r in rows]

    seed = config.seed if config.seed is not None else 0
    metrics = EvaluationMetrics(total=len(rows), extracted=0, extraction_success_rate=0.0, seed=seed)
    finding_ids: list[str] = []
    critical = config.scoring.bands.critical
    for row, report, baseline, outcome in results:
        metrics.outcomes[row.sample_id] = outcome
        ok = report is not None and report.extracted
        if ok:
            metrics.extracted += 1
        metrics.component_visibility[row.sample_id] = {
            "pipeline_count": report.component_count if ok else 0,
            "strings_baseline_count": baseline,
        }
        findings = report.findings if ok else []
        metrics.triage_efficiency[row.sample_id] = {
            "critical_band_count_rps": sum(f.adjusted_rps >= critical for f in findings),
            "critical_count_cvss_only": sum(
                f.cvss_base is not None and f.cvss_base >= config.cvss_critical for f in findings),
        }
        finding_ids.extend(finding_id(row.sample_id, f) for f in findings)
    metrics.extraction_success_rate = metrics.extracted / metrics.total
    metrics.total_findings = len(finding_ids)
    metrics.spot_check_sample = spot_check(finding_ids, config.spot_check_fraction, seed)

    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / "evaluation.json").write_text(metrics.to_json(), encoding="utf-8")
    return metrics
