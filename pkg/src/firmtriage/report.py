"""Triage report model plus its JSON and Markdown renderings."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Iterable

from . import TOOL_NAME, __version__
from .errors import ReportIOError
from .sbom import Component
from .scoring import Finding

FINDINGS_FILE = "04-findings.json"
REPORT_FILE = "05-report.md"
NO_FINDINGS = "No findings."
SUCCESS = "Success"


@dataclass
class TriageReport:
    sample: dict[str, Any]
    outcome: str
    component_count: int = 0
    manual_review: list[Component] = field(default_factory=list)
    findings: list[Finding] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)
    loop_flags: list[tuple[str, str]] = field(default_factory=list)
    tool_version: str = __version__

    @property
    def extracted(self) -> bool:
        return bool(self.sample.get("extracted"))

    @property
    def succeeded(self) -> bool:
        return self.outcome == SUCCESS


def _component(c: Component) -> dict[str, Any]:
    return {
        "name": c.name,
        "version": c.version,
        "kind": c.kind.value,
        "evidence_kind": c.evidence_kind.value,
        "evidence_paths": list(c.evidence_paths),
        "purl": c.purl,
        "cpe": c.cpe,
    }


def finding_id(sample_id: str, f: Finding) -> str:
    return f"{sample_id}/{f.vuln_id}/{f.component.name}@{f.component.version}:{f.component.evidence_paths[0]}"


def _finding(rank: int, f: Finding, sample_id: str) -> dict[str, Any]:
    return {
        "id": finding_id(sample_id, f),
        "rank": rank,
        "vuln_id": f.vuln_id,
        "summary": f.summary,
        "component": _component(f.component),
        "confidence": f.confidence.value,
        "matched_on": f.matched_on,
        "factors": {
            "b": f.factors.b,
            "e": f.factors.e,
            "c": f.factors.c,
            "b_defaulted": f.factors.b_defaulted,
            "e_missing": f.factors.e_missing,
        },
        "cvss_base": f.cvss_base,
        "epss": f.epss,
        "kev": f.kev,
        "rps": f.rps,
        "adjusted_rps": f.adjusted_rps,
        "band": f.band.value,
        "context_evidence": [
            {"kind": s.kind.value, "evidence_path": s.evidence_path, "detail": s.detail}
            for s in f.context_evidence
        ],
    }


def report_json(report: TriageReport) -> dict[str, Any]:
    sid = report.sample.get("sample_id", "")
    return {
        "tool": {"name": TOOL_NAME, "version": report.tool_version},
        "sample": report.sample,
        "outcome": report.outcome,
        "loop_flags": [list(p) for p in report.loop_flags],
        "component_count": report.component_count,
        "manual_review": [_component(c) for c in report.manual_review],
        "findings": [_finding(i, f, sid) for i, f in enumerate(report.findings, start=1)],
        "finding_count": len(report.findings),
        "provenance": report.provenance,
    }


def dumps_json(report: TriageReport) -> str:
    return json.dumps(report_json(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _cell(text: Any) -> str:
    return str(text).replace("|", "\\|").replace("\n", " ")


def _score(value: float) -> str:
    # half-up, so 83.25 shows as 83.3 rather than float round-half-even's 83.2
    return str(Decimal(repr(value)).quantize(Decimal("0.1"), ROUND_HALF_UP))


def _evidence(f: Finding) -> str:
    parts = []
    for s in f.context_evidence:
        parts.append(f"{s.kind.value} {s.evidence_path}" + (f" ({s.detail})" if s.detail else ""))
    if f.kev:
        parts.append("KEV")
    if f.factors.e_missing:
        parts.append("EPSS missing")
    if f.factors.b_defaulted:
        parts.append("CVSS defaulted")
    return "; ".join(parts) or "-"


def render_markdown(report: TriageReport) -> str:
    s = report.sample
    prov = report.provenance
    lines = [
        f"# Triage report: {s.get('sample_id', '')}",
        "",
        "| Field | Value |",
        "|---|---|",
        f"| Device type | {_cell(s.get('device_type') or '-')} |",
        f"| Vendor | {_cell(s.get('vendor') or '-')} |",
        f"| Release year | {_cell(s.get('release_year') or '-')} |",
        f"| SHA-256 | `{s.get('sha256', '')}` |",
        f"| Extraction | {_cell(report.outcome)} |",
        f"| File system | {_cell(s.get('filesystem') or '-')} |",
        f"| Components | {report.component_count} |",
        f"| EPSS snapshot | {prov.get('epss_date') or '-'} |",
        f"| KEV catalog | {prov.get('kev_date') or '-'} |",
        f"| Vulnerability DB | `{prov.get('vuln_db_sha256') or '-'}` |",
        "",
        "## Findings",
        "",
    ]
    if report.findings:
        lines += [
            "| Rank | CVE | Component | Confidence | RPS | Band | Evidence |",
            "|---:|---|---|---|---:|---|---|",
        ]
        for i, f in enumerate(report.findings, start=1):
            lines.append(
                f"| {i} | {_cell(f.vuln_id)} | {_cell(f.component.name)} {_cell(f.component.version)} "
                f"| {f.confidence.value} | {_score(f.adjusted_rps)} | {f.band.value} | {_cell(_evidence(f))} |")
    else:
        lines.append(f"_{NO_FINDINGS}_")
    if report.manual_review:
        lines += ["", "## Manual review (version unknown)", ""]
        for c in report.manual_review:
            lines.append(f"- `{c.evidence_paths[0]}` ({_cell(c.name)})")
    return "\n".join(lines) + "\n"


def emit_report(report: TriageReport, out_dir: str | os.PathLike,
                formats: Iterable[str] = ("json", "md")) -> list[Path]:
    """Write the JSON report and/or Markdown summary into ``out_dir``."""
    out = Path(out_dir)
    renderers = {"json": (FINDINGS_FILE, dumps_json), "md": (REPORT_FILE, render_markdown)}
    written = []
    for fmt in formats:
        name, render = renderers[fmt]
        target = out / name
        try:
            out.mkdir(parents=True, exist_ok=True)
            target.write_text(render(report), encoding="utf-8")
        except OSError as exc:
            raise ReportIOError(f"cannot write {target}: {exc.strerror or exc}") from exc
        written.append(target)
    return written
