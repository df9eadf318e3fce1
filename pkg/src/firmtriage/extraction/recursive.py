"""Layer-by-layer extraction of a firmware image down to its root filesystem."""

from __future__ import annotations

import hashlib
import os
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ..errors import CorruptArchive, UnsupportedFormat
from .normalize import (FailureReason, NormalizedFileSystem, detect_rootfs,
                        normalize)
from .signatures import (ADAPTER_FORMATS, BUILTIN_FORMATS, Format,
                         carve_region, scan_signatures)
from .unpack import run_adapter, unpack_builtin

DEFAULT_DEPTH_LIMIT = 8
ENTROPY_WINDOW = 4096
ENTROPY_THRESHOLD = 7.9
# A lone 4 KiB window of noise is not evidence of an encrypted payload.
MIN_ENTROPY_WINDOWS = 2
ROOTFS_SEARCH_DEPTH = 4


@dataclass(frozen=True)
class FirmwareImage:
    sample_id: str
    image_bytes: bytes = field(repr=False)
    device_type: str = ""
    vendor: str = ""
    release_year: int | None = None
    sha256: str = ""

    def __post_init__(self):
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")
        digest = hashlib.sha256(self.image_bytes).hexdigest()
        if not self.sha256:
            object.__setattr__(self, "sha256", digest)
        elif self.sha256 != digest:
            raise ValueError(f"sha256 mismatch for {self.sample_id}")

    @classmethod
    def from_path(cls, path: str | os.PathLike, sample_id: str | None = None,
                  **meta) -> "FirmwareImage":
        p = Path(path)
        return cls(sample_id or p.stem, p.read_bytes(), **meta)

    def metadata(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "device_type": self.device_type,
            "vendor": self.vendor,
            "release_year": self.release_year,
            "sha256": self.sha256,
        }


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class ExtractionLog:
    """Append-only event log: ``timestamp<TAB>action<TAB>path<TAB>outcome``."""

    def __init__(self, path: Path, clock: Callable[[], str] = utc_now):
        self.path = path
        self.clock = clock
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def __call__(self, action: str, path: str, outcome: str) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(f"{self.clock()}\t{action}\t{path}\t{outcome}\n")


def window_entropy(data: bytes, window: int = ENTROPY_WINDOW) -> np.ndarray:
    """Shannon entropy in bits/byte of each full ``window``-sized block."""
    n = len(data) // window
    if n == 0:
        return np.zeros(0)
    arr = np.frombuffer(data, dtype=np.uint8, count=n * window).reshape(n, window)
    rows = np.arange(n, dtype=np.int64)[:, None] * 256
    counts = np.bincount((arr + rows).ravel(), minlength=256 * n).reshape(n, 256)
    p = counts / window
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    return terms.sum(axis=1)


def looks_encrypted(data: bytes) -> bool:
    ent = window_entropy(data)
    return len(ent) >= MIN_ENTROPY_WINDOWS and bool(np.all(ent > ENTROPY_THRESHOLD))


def find_rootfs(tree: Path, max_depth: int = ROOTFS_SEARCH_DEPTH) -> Path | None:
    """Shallowest directory under ``tree`` (inclusive) that looks like a Linux root."""
    level = [tree]
    for _ in range(max_depth + 1):
        nxt = []
        for d in level:
            if detect_rootfs(d):
                return d
            nxt.extend(sorted(c for c in d.iterdir() if c.is_dir() and not c.is_symlink()))
        level = nxt
    return None


@dataclass
class _Walk:
    depth_limit: int
    adapters: Mapping[str, str]
    log: ExtractionLog
    base: Path
    depth_exceeded: bool = False
    unsupported: bool = False


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _descend(data: bytes, depth: int, layer_dir: Path, w: _Walk) -> tuple[Path, Format] | None:
    hits = scan_signatures(data)
    cursor = 0
    for hit in hits:
        if hit.offset < cursor:
            continue
        name = f"{hit.offset}.{hit.format.value}"
        label = (layer_dir / name).relative_to(w.base).as_posix()
        if depth > w.depth_limit:
            w.depth_exceeded = True
            w.log("unpack", label, f"DepthLimit({w.depth_limit})")
            return None
        out = layer_dir / name
        try:
            if hit.format in BUILTIN_FORMATS:
                consumed = unpack_builtin(data[hit.offset:], hit.format, out, w.log)
                _write(layer_dir / f"{name}.bin", data[hit.offset:hit.offset + consumed])
            elif hit.format in ADAPTER_FORMATS and w.adapters.get(hit.format.value):
                blob = carve_region(data, hit, hits)
                _write(layer_dir / f"{name}.bin", blob)
                run_adapter(w.adapters[hit.format.value], layer_dir / f"{name}.bin", out)
                consumed = len(blob)
            else:
                _write(layer_dir / f"{name}.bin", carve_region(data, hit, hits))
                raise UnsupportedFormat(f"no adapter configured for {hit.format.value}")
        except UnsupportedFormat as exc:
            w.unsupported = True
            w.log("unpack", label, f"UnsupportedFormat: {exc}")
            continue
        except CorruptArchive as exc:
            w.log("unpack", label, f"CorruptArchive: {exc}")
            continue
        w.log("unpack", label, f"ok ({consumed} bytes)")
        cursor = hit.offset + consumed

        root = find_rootfs(out)
        if root is not None:
            w.log("rootfs", root.relative_to(w.base).as_posix(), "found")
            return root, hit.format
        for f in sorted(p for p in out.rglob("*") if p.is_file() and not p.is_symlink()):
            rel = f.relative_to(out).as_posix().replace("/", "__")
            found = _descend(f.read_bytes(), depth + 1, layer_dir / f"{name}.layers" / rel, w)
            if found is not None:
                return found
    return None


def extract_recursive(image: FirmwareImage, depth_limit: int = DEFAULT_DEPTH_LIMIT,
                      workspace: str | os.PathLike = ".",
                      adapters: Mapping[str, str] | None = None,
                      clock: Callable[[], str] = utc_now) -> NormalizedFileSystem:
    """Unpack ``image`` under ``workspace`` until a Linux root tree appears.

    Layout: carved blobs and intermediate trees go to ``01-carve/``, the root
    tree is copied to ``02-rootfs/`` and normalised in place, and every step is
    appended to ``extraction.log``.  Failure is reported through
    ``failure_reason``; partial layers stay on disk.
    """
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    ws = Path(workspace)
    carve_dir = ws / "01-carve"
    rootfs_dir = ws / "02-rootfs"
    for stale in (carve_dir, rootfs_dir):
        if stale.exists():
            shutil.rmtree(stale)
    carve_dir.mkdir(parents=True)
    log = ExtractionLog(ws / "extraction.log", clock)
    log("scan", image.sample_id, f"{len(image.image_bytes)} bytes sha256={image.sha256}")

    w = _Walk(depth_limit, dict(adapters or {}), log, ws)
    found = _descend(image.image_bytes, 1, carve_dir, w)
    if found is not None:
        root, fmt = found
        shutil.copytree(root, rootfs_dir, symlinks=True)
        fs = normalize(rootfs_dir)
        fs.filesystem = fmt.value
        for link, target in sorted(fs.loop_flags):
            log("symlink", link, f"loop -> {target}")
        log("normalize", "02-rootfs", f"{len(fs.entries)} entries")
        return fs

    if w.depth_exceeded:
        reason = FailureReason.DEPTH_LIMIT
    elif w.unsupported:
        reason = FailureReason.UNSUPPORTED_FORMAT
    elif not scan_signatures(image.image_bytes) and looks_encrypted(image.image_bytes):
        reason = FailureReason.ENCRYPTED
    else:
        reason = FailureReason.NO_FILESYSTEM
    log("extract", image.sample_id, f"failed: {reason.value}")
    return NormalizedFileSystem(carve_dir, failure_reason=reason,
                                filesystem="Encrypted" if reason is FailureReason.ENCRYPTED else None)
