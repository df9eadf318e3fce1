"""Walk one synthetic router image through every stage and print the report.

    python3 demos/triage_walkthrough.py [--keep DIR]
"""

from __future__ import annotations

import argparse
import gzip
import io
import json
import tarfile
import tempfile
from pathlib import Path

from firmtriage.config import PipelineConfig
from firmtriage.extraction import FirmwareImage
from firmtriage.pipeline import run_pipeline

ROOTFS = {
    "bin/busybox": b"\x7fELF\0\0\0\0BusyBox v1.19.4 (2017-05-17)\0",
    "etc/init.d/S50dropbear": b"#!/bin/sh\n/usr/sbin/dropbear -p 22\n",
    "lib/libz.so.1.2.8": b"\x7fELF\0\0inflate 1.2.8 Copyright\0",
    "usr/sbin/dropbear": b"\x7fELF\0\0\0\0dropbear_2015.67\0",
}

VULNS = [
    {"id": "CVE-2016-7406", "summary": "format string in dbclient",
     "severity": [{"type": "CVSS_V3", "score": 7.5}],
     "affected": [{"package": {"name": "dropbear"}, "ranges": [{"introduced": "0", "fixed": "2016.74"}]}]},
]


def build_image() -> bytes:
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        for rel, data in sorted(ROOTFS.items()):
            info = tarfile.TarInfo(rel)
            info.size, info.mode = len(data), 0o755
            tf.addfile(info, io.BytesIO(data))
    # a 64-byte vendor header in front of the compressed rootfs
    return b"FWHDR".ljust(64, b"\0") + gzip.compress(buf.getvalue(), mtime=0)


def write_snapshots(directory: Path) -> dict[str, Path]:
    (directory / "vulns.json").write_text(json.dumps(VULNS))
    (directory / "epss.csv").write_text("#score_date:2024-01-01T00:00:00+0000\n"
                                        "cve,epss,percentile\nCVE-2016-7406,0.05,0.5\n")
    (directory / "kev.json").write_text(json.dumps({"vulnerabilities": [{"cveID": "CVE-2016-7406"}]}))
    return {"vuln_db": directory / "vulns.json", "epss_snapshot": directory / "epss.csv",
            "kev_snapshot": directory / "kev.json"}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--keep", type=Path, help="write artifacts here instead of a temp dir")
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        work = args.keep or Path(tmp)
        work.mkdir(parents=True, exist_ok=True)
        config = PipelineConfig(out_dir=work / "out", offline=True, seed=1,
                                timestamp="2024-01-01T00:00:00Z", **write_snapshots(work))
        report = run_pipeline(FirmwareImage("demo-router", build_image(), device_type="Router",
                                            vendor="Acme", release_year=2017), config)
        ws = work / "out" / "demo-router"
        print(f"outcome: {report.outcome}; components: {report.component_count}")
        for name in sorted(p.name for p in ws.iterdir()):
            print(f"  {name}")
        print()
        print((ws / "05-report.md").read_text())


if __name__ == "__main__":
    main()
