"""Command-line entry point.

Exit codes: 0 success, 1 analysis failure recorded, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config
from .errors import ConfigError, FirmTriageError, ManifestError
from .extraction import FirmwareImage
from .feeds import Transport
from .pipeline import evaluate, run_pipeline, score_sbom

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML or JSON configuration file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--vuln-db", type=Path, help="vulnerability snapshot (JSON)")
    p.add_argument("--epss-snapshot", type=Path, help="EPSS CSV export")
    p.add_argument("--kev-snapshot", type=Path, help="KEV catalog JSON")
    p.add_argument("--offline", action="store_true", default=None,
                   help="never open a network connection")
    p.add_argument("--epss-endpoint", help="EPSS API URL template with {ids}")
    p.add_argument("--depth-limit", type=int)
    p.add_argument("--seed", type=int, help="seed for serial numbers and spot checks")
    p.add_argument("--timestamp", help="fixed ISO-8601 timestamp for reproducible output")
    p.add_argument("-v", "--verbose", action="store_true")


def _image_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("image", type=Path)
    p.add_argument("--sample-id")
    p.add_argument("--device-type", default="")
    p.add_argument("--vendor", default="")
    p.add_argument("--release-year", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="firmtriage",
                                     description="Firmware SBOM and vulnerability triage.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full pipeline on one image")
    _image_args(p)
    _common(p)

    p = sub.add_parser("sbom", help="extract and inventory only")
    _image_args(p)
    _common(p)

    p = sub.add_parser("score", help="re-score an archived CycloneDX SBOM")
    p.add_argument("sbom", type=Path)
    p.add_argument("--rootfs", type=Path, help="preserved 02-rootfs for context signals")
    _common(p)

    p = sub.add_parser("evaluate", help="run the corpus evaluation harness")
    p.add_argument("manifest", type=Path)
    p.add_argument("--workers", type=int, default=1)
    _common(p)
    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    base = load_config(args.config)
    return base.with_overrides(
        out_dir=args.out, vuln_db=args.vuln_db, epss_snapshot=args.epss_snapshot,
        kev_snapshot=args.kev_snapshot, offline=args.offline, epss_endpoint=args.epss_endpoint,
        depth_limit=args.depth_limit, seed=args.seed, timestamp=args.timestamp,
    )


def _image(args: argparse.Namespace) -> FirmwareImage:
    try:
        return FirmwareImage.from_path(args.image, args.sample_id, device_type=args.device_type,
                                       vendor=args.vendor, release_year=args.release_year)
    except OSError as exc:
        raise ConfigError(f"cannot read image {args.image}: {exc.strerror or exc}") from None


def main(argv: list[str] | None = None, transport: Transport | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args)
        if args.command in ("analyze", "sbom"):
            image = _image(args)
            report = run_pipeline(image, config, transport, sbom_only=args.command == "sbom")
            ws = config.out_dir / image.sample_id
            print(f"{image.sample_id}: {report.outcome}, {report.component_count} components, "
                  f"{len(report.findings)} findings -> {ws}")
            return EXIT_OK if report.succeeded else EXIT_FAILURE
        if args.command == "score":
            report = score_sbom(args.sbom, config, args.rootfs, args.out, transport)
            print(f"{report.sample.get('sample_id')}: {len(report.findings)} findings")
            return EXIT_OK
        metrics = evaluate(args.manifest, config, transport, args.workers)
        print(f"extraction success rate {metrics.extraction_success_rate:.2f} "
              f"({metrics.extracted}/{metrics.total}), {metrics.total_findings} findings, "
              f"spot check {len(metrics.spot_check_sample)}")
        return EXIT_OK
    except (ConfigError, ManifestError) as exc:
        print(f"firmtriage: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FirmTriageError as exc:
        print(f"firmtriage: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
