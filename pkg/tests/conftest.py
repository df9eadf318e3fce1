"""Fixture builders: synthetic root filesystems, archives and snapshots."""

from __future__ import annotations

import gzip
import io
import json
import os
import random
import tarfile
from pathlib import Path

import pytest

FIXED_TS = "2024-01-01T00:00:00Z"
FIXED_SERIAL = "urn:uuid:00000000-0000-4000-8000-000000000000"

# path -> bytes (file), None (directory) or ("->", target) (symlink)
Tree = dict


def dropbear_tree() -> Tree:
    """Small router rootfs with an SSH daemon planted for matching."""
    return {
        "bin": None,
        "bin/busybox": b"\x7fELF" + b"\0" * 32 + b"BusyBox v1.19.4 (2017-05-17 10:00:00 UTC)\0",
        "bin/sh": ("->", "busybox"),
        "etc": None,
        "etc/init.d": None,
        "etc/init.d/S50dropbear": b"#!/bin/sh\n/usr/sbin/dropbear -p 22\n",
        "etc/dropbear": None,
        "etc/passwd": b"root:x:0:0:root:/root:/bin/sh\n",
        "lib": None,
        "lib/libz.so.1.2.8": b"\x7fELF" + b"\0" * 16 + b"inflate 1.2.8 Copyright\0",
        "usr": None,
        "usr/sbin": None,
        "usr/sbin/dropbear": b"\x7fELF" + b"\0" * 24 + b"dropbear_2015.67\0SSH-2.0-%s\0",
        "usr/bin": None,
        "usr/bin/mystery": b"\x7fELF" + b"\0" * 64,
    }


def write_tree(root: Path, tree: Tree) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for rel, value in sorted(tree.items()):
        path = root / rel
        if value is None:
            path.mkdir(parents=True, exist_ok=True)
        elif isinstance(value, tuple):
            path.parent.mkdir(parents=True, exist_ok=True)
            os.symlink(value[1], path)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(value)
    return root


def tar_bytes(tree: Tree, prefix: str = "") -> bytes:
    """Deterministic ustar archive of ``tree`` (fixed mtime, owner and order)."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tf:
        for rel, value in sorted(tree.items()):
            info = tarfile.TarInfo(prefix + rel)
            info.mtime = 1_500_000_000
            info.uname = info.gname = "root"
            if value is None:
                info.type, info.mode = tarfile.DIRTYPE, 0o755
                tf.addfile(info)
            elif isinstance(value, tuple):
                info.type, info.linkname, info.mode = tarfile.SYMTYPE, value[1], 0o777
                tf.addfile(info)
            else:
                info.size, info.mode = len(value), 0o755
                tf.addfile(info, io.BytesIO(value))
    return buf.getvalue()


def gzip_bytes(data: bytes, name: str | None = "rootfs.tar") -> bytes:
    buf = io.BytesIO()
    with gzip.GzipFile(filename=name or "", mode="wb", fileobj=buf, mtime=0) as gz:
        gz.write(data)
    return buf.getvalue()


def cpio_newc_entry(name: bytes, data: bytes = b"", mode: int = 0o100644) -> bytes:
    fields = [1, mode, 0, 0, 1, 0, len(data), 0, 0, 0, 0, len(name) + 1, 0]
    head = b"070701" + b"".join(b"%08X" % f for f in fields) + name + b"\0"
    head += b"\0" * (-len(head) % 4)
    return head + data + b"\0" * (-len(data) % 4)


def cpio_bytes(tree: Tree) -> bytes:
    """newc archive of ``tree`` (symlinks stored as link-target payloads)."""
    out = []
    for rel, value in sorted(tree.items()):
        if value is None:
            out.append(cpio_newc_entry(rel.encode(), mode=0o040755))
        elif isinstance(value, tuple):
            out.append(cpio_newc_entry(rel.encode(), value[1].encode(), mode=0o120777))
        else:
            out.append(cpio_newc_entry(rel.encode(), value))
    return b"".join(out) + cpio_newc_entry(b"TRAILER!!!")


def firmware_blob(payload: bytes, header: bytes = b"FWHDR\x01\x00\x00" + b"\x00" * 56) -> bytes:
    """Vendor-style header followed by ``payload``, padded to a 4 KiB boundary."""
    blob = header + payload
    return blob + b"\xff" * (-len(blob) % 4096)


def random_bytes(n: int, seed: int = 1) -> bytes:
    return random.Random(seed).randbytes(n)


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2), encoding="utf-8")
    return path


def write_snapshots(directory: Path, vulns: list[dict], epss: dict[str, float],
                    kev: list[str], aliases: dict | None = None) -> dict[str, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    db = {"aliases": aliases or {}, "vulnerabilities": vulns}
    lines = ["#model_version:v2023.03.01,score_date:2024-01-01T00:00:00+0000",
             "cve,epss,percentile"]
    lines += [f"{k},{v},0.5" for k, v in sorted(epss.items())]
    (directory / "epss.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json(directory / "kev.json", {
        "title": "Known Exploited Vulnerabilities Catalog",
        "dateReleased": "2024-01-02T00:00:00.000Z",
        "vulnerabilities": [{"cveID": c} for c in kev],
    })
    write_json(directory / "vulns.json", db)
    return {"vuln_db": directory / "vulns.json", "epss_snapshot": directory / "epss.csv",
            "kev_snapshot": directory / "kev.json"}


def vuln(vuln_id: str, package: str, introduced: str = "0", fixed: str | None = None,
         cvss: float | None = None, summary: str = "") -> dict:
    """OSV-style snapshot record."""
    rng = {"introduced": introduced} | ({"fixed": fixed} if fixed else {})
    rec = {"id": vuln_id, "summary": summary,
           "affected": [{"package": {"name": package}, "ranges": [rng]}]}
    if cvss is not None:
        rec["severity"] = [{"type": "CVSS_V3", "score": cvss}]
    return rec


DROPBEAR_VULNS = [
    vuln("CVE-2016-7406", "dropbear", fixed="2016.74", cvss=7.5, summary="format string in dbclient"),
    vuln("CVE-2017-9078", "dropbear", "2013.0", "2016.0", cvss=9.8, summary="double free in server"),
    vuln("CVE-2099-0001", "dropbear", fixed="2012.55", cvss=4.0, summary="fixed long ago"),
]
DROPBEAR_EPSS = {"CVE-2016-7406": 0.05, "CVE-2017-9078": 0.01}
DROPBEAR_KEV = ["CVE-2016-7406"]


def camera_tree() -> Tree:
    """Uncompressed rootfs: version strings stay visible in the raw image."""
    return {
        "bin": None, "etc": None, "lib": None, "usr/sbin": None,
        "bin/busybox": b"\x7fELF" + b"\0" * 8 + b"BusyBox v1.24.1 (2016-02-01)\0",
        "usr/sbin/lighttpd": b"\x7fELF" + b"\0" * 8 + b"lighttpd/1.4.35\0",
        "etc/lighttpd.conf": b"server.port = 8080\n",
        "etc/init.d/S40openssl": b"#!/bin/sh\n",
        "usr/lib/opkg/status": b"Package: openssl\nVersion: 1.0.2k\nVendor: OpenSSL\n"
                               b"Status: install ok installed\n",
        "usr/bin/openssl": b"\x7fELF" + b"\0" * 8 + b"OpenSSL 1.0.2k  26 Jan 2017\0",
    }


def nas_tree() -> Tree:
    return {"bin": None, "etc": None, "lib": None,
            "bin/busybox": b"\x7fELF" + b"\0" * 8 + b"BusyBox v1.30.1\0",
            "bin/ls": ("->", "busybox"), "etc/fstab": b"",
            "lib/libc.so.6": b"\x7fELF"}


CORPUS_VULNS = DROPBEAR_VULNS + [
    vuln("CVE-2017-3735", "openssl", "1.0.2", "1.0.2m", cvss=7.5, summary="one-byte overread"),
    vuln("CVE-2018-19052", "lighttpd", "0", "1.4.51", cvss=9.8, summary="path traversal in mod_alias"),
]
CORPUS_EPSS = DROPBEAR_EPSS | {"CVE-2017-3735": 0.3}
CORPUS_KEV = DROPBEAR_KEV + ["CVE-2017-3735"]
CORPUS_COLUMNS = "sample_id,device_type,vendor,release_year,image_path"


def build_corpus(directory: Path) -> tuple[Path, dict[str, Path]]:
    """Four images: gzip tar, raw tar, cpio, and an encrypted blob.

    Critical-band counts differ by construction: openssl (CVSS 7.5, KEV,
    manifest) is Critical by RPS only, while lighttpd and dropbear carry
    CVSS 9.8 records that RPS places below Critical.
    """
    images = directory / "images"
    images.mkdir(parents=True, exist_ok=True)
    blobs = {
        "router-a": firmware_blob(gzip_bytes(tar_bytes(dropbear_tree()))),
        "camera-b": firmware_blob(tar_bytes(camera_tree())),
        "nas-c": firmware_blob(cpio_bytes(nas_tree())),
        "enc-d": random_bytes(1 << 16, seed=4),
    }
    meta = {"router-a": ("Router", "Acme", 2017), "camera-b": ("IP Camera", "Lens", 2018),
            "nas-c": ("NAS", "Store", 2019), "enc-d": ("Router", "Vault", 2021)}
    rows = [CORPUS_COLUMNS]
    for sid, blob in blobs.items():
        (images / f"{sid}.bin").write_bytes(blob)
        device, vendor, year = meta[sid]
        rows.append(f"{sid},{device},{vendor},{year},images/{sid}.bin")
    manifest = directory / "corpus.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest, write_snapshots(directory / "snap", CORPUS_VULNS, CORPUS_EPSS, CORPUS_KEV)


@pytest.fixture
def snapshots(tmp_path) -> dict[str, Path]:
    return write_snapshots(tmp_path / "snap", DROPBEAR_VULNS, DROPBEAR_EPSS, DROPBEAR_KEV)


@pytest.fixture
def dropbear_image() -> bytes:
    return firmware_blob(gzip_bytes(tar_bytes(dropbear_tree())))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import ACCEPTANCE_KEY

    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
