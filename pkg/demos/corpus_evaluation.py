"""Evaluate the four-image synthetic corpus used by the test suite.

    python3 demos/corpus_evaluation.py
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import FIXED_TS, build_corpus  # noqa: E402
from firmtriage.config import PipelineConfig  # noqa: E402
from firmtriage.pipeline import evaluate  # noqa: E402


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        manifest, snapshots = build_corpus(Path(tmp))
        print(manifest.read_text())
        config = PipelineConfig(out_dir=Path(tmp) / "out", offline=True, seed=3,
                                timestamp=FIXED_TS, **snapshots)
        metrics = evaluate(manifest, config)
        print(metrics.to_json())


if __name__ == "__main__":
    main()
