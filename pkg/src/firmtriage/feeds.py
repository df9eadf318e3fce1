"""EPSS and KEV exploit-maturity feeds: offline snapshots and the EPSS API client."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

from .errors import FeedParseError, NetworkError, ProtocolError, RangeError

logger = logging.getLogger(__name__)

DEFAULT_EPSS_ENDPOINT = "https://api.first.org/data/v1/epss?cve={ids}"
EPSS_BATCH = 100
RETRIES = 3
BACKOFF_BASE = 0.5

_DATE = re.compile(r"(\d{4}-\d{2}-\d{2})")

# (url, timeout seconds) -> response body
Transport = Callable[[str, float], bytes]


@dataclass(frozen=True)
class EnrichmentSnapshot:
    epss: Mapping[str, float] = field(default_factory=dict)
    kev: frozenset[str] = frozenset()
    epss_date: date | None = None
    kev_date: date | None = None

    def __post_init__(self):
        for vid, p in dict(self.epss).items():
            if not 0.0 <= p <= 1.0:
                raise RangeError(f"EPSS probability {p} for {vid} outside [0, 1]")
        object.__setattr__(self, "epss", MappingProxyType(dict(self.epss)))
        object.__setattr__(self, "kev", frozenset(self.kev))

    def with_epss(self, values: Mapping[str, float]) -> "EnrichmentSnapshot":
        """New snapshot with ``values`` layered over the current EPSS map."""
        merged = dict(self.epss)
        merged.update(values)
        return EnrichmentSnapshot(merged, self.kev, self.epss_date, self.kev_date)


def _parse_date(text: str | None) -> date | None:
    m = _DATE.search(text or "")
    return date.fromisoformat(m.group(1)) if m else None


def parse_epss_csv(text: str, source: str = "<epss>") -> tuple[dict[str, float], date | None]:
    scores: dict[str, float] = {}
    snapshot_date = None
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            for part in stripped[1:].split(","):
                key, _, value = part.partition(":")
                if key.strip() in ("score_date", "date", "model_date"):
                    snapshot_date = _parse_date(value) or snapshot_date
            continue
        row = next(csv.reader([stripped]))
        if not header_seen:
            if [c.strip().lower() for c in row[:3]] != ["cve", "epss", "percentile"]:
                raise FeedParseError(f"{source}:{lineno}: expected header cve,epss,percentile")
            header_seen = True
            continue
        if len(row) < 2 or not row[0].strip():
            raise FeedParseError(f"{source}:{lineno}: malformed row {line!r}")
        try:
            prob = float(row[1])
        except ValueError:
            raise FeedParseError(f"{source}:{lineno}: non-numeric epss {row[1]!r}") from None
        if not 0.0 <= prob <= 1.0 or math.isnan(prob):
            raise RangeError(f"{source}:{lineno}: EPSS probability {prob} outside [0, 1]")
        scores[row[0].strip()] = prob
    return scores, snapshot_date


def load_epss_snapshot(csv_file: str | os.PathLike) -> tuple[dict[str, float], date | None]:
    """Read an EPSS CSV export (``#`` metadata lines, then ``cve,epss,percentile``)."""
    path = Path(csv_file)
    return parse_epss_csv(path.read_text(encoding="utf-8"), str(path))


def load_kev_snapshot(json_file: str | os.PathLike) -> tuple[frozenset[str], date | None]:
    path = Path(json_file)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FeedParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("vulnerabilities"), list):
        raise FeedParseError(f"{path}: missing 'vulnerabilities' array")
    ids = set()
    for i, entry in enumerate(doc["vulnerabilities"]):
        cve = entry.get("cveID") if isinstance(entry, dict) else None
        if not isinstance(cve, str) or not cve:
            raise FeedParseError(f"{path}: vulnerabilities[{i}] has no cveID")
        ids.add(cve)
    return frozenset(ids), _parse_date(doc.get("dateReleased"))


def load_snapshot(epss_csv: str | os.PathLike | None = None,
                  kev_json: str | os.PathLike | None = None) -> EnrichmentSnapshot:
    epss, epss_date = load_epss_snapshot(epss_csv) if epss_csv else ({}, None)
    kev, kev_date = load_kev_snapshot(kev_json) if kev_json else (frozenset(), None)
    return EnrichmentSnapshot(epss, kev, epss_date, kev_date)


# -- online EPSS -------------------------------------------------------------

def urllib_transport(url: str, timeout: float) -> bytes:
    req = urllib.request.Request(url, headers={"Accept": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise NetworkError(f"{url}: {exc}") from exc


def _parse_epss_response(body: bytes) -> dict[str, float]:
    try:
        doc = json.loads(body)
        rows = doc["data"]
        out = {}
        for row in rows:
            prob = float(row["epss"])
            if not 0.0 <= prob <= 1.0:
                raise ProtocolError(f"EPSS value {prob} for {row['cve']} outside [0, 1]")
            out[str(row["cve"])] = prob
        return out
    except ProtocolError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"unexpected EPSS payload: {exc}") from None


def write_epss_csv(path: str | os.PathLike, scores: Mapping[str, float],
                   snapshot_date: date | None = None) -> None:
    buf = io.StringIO()
    if snapshot_date is not None:
        buf.write(f"#score_date:{snapshot_date.isoformat()}\n")
    buf.write("cve,epss,percentile\n")
    for vid in sorted(scores):
        buf.write(f"{vid},{scores[vid]!r},\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def fetch_epss(vuln_ids: Iterable[str], endpoint: str = DEFAULT_EPSS_ENDPOINT,
               timeout: float = 20.0, transport: Transport | None = None,
               snapshot: EnrichmentSnapshot | None = None,
               cache_path: str | os.PathLike | None = None,
               sleep: Callable[[float], None] | None = None) -> dict[str, float]:
    """Query the EPSS API in batches of at most 100 ids.

    Fetched values override ``snapshot`` values for the same id.  A batch
    that still fails after three retries falls back to the snapshot with a
    warning.  The merged map is written to ``cache_path`` when given.
    """
    ids = sorted(set(vuln_ids))
    if not ids:
        return {}
    transport = transport or urllib_transport
    sleep = sleep or time.sleep
    base = dict(snapshot.epss) if snapshot else {}
    fetched: dict[str, float] = {}
    for start in range(0, len(ids), EPSS_BATCH):
        batch = ids[start:start + EPSS_BATCH]
        url = endpoint.format(ids=",".join(batch))
        for attempt in range(RETRIES + 1):
            try:
                fetched.update(_parse_epss_response(transport(url, timeout)))
                break
            except NetworkError as exc:
                if attempt == RETRIES:
                    logger.warning("EPSS fetch failed for %d ids, using snapshot: %s", len(batch), exc)
                    break
                sleep(BACKOFF_BASE * 2 ** attempt)
    merged = {vid: base[vid] for vid in ids if vid in base}
    merged.update(fetched)
    merged = {vid: merged[vid] for vid in sorted(merged)}
    if cache_path is not None:
        write_epss_csv(cache_path, merged)
    return merged
