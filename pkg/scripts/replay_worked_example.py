#!/usr/bin/env python3
"""Replay the worked four-setting comparison on the shipped fixture.

Runs SG, PG+SG, BS+SG, and WA+SG over the single NINE question entirely from
the recorded cache (no network, no credentials) and prints the graded table.
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from talm.harness import ExperimentConfig, run_experiment  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"


def pick_runner() -> Path:
    production = REPO / "runner" / "runner.py"
    return production if production.is_file() else REPO / "tests" / "stub_runner.py"


def main() -> int:
    runner = pick_runner()
    print(f"runner: {runner}")
    print(f"{'setting':8s}  {'answer':6s}  graded")
    with tempfile.TemporaryDirectory() as tmp:
        for setting in ("sg", "pg+sg", "bs+sg", "wa+sg"):
            cfg = ExperimentConfig(
                dataset="math",
                data_path=str(FIXTURES / "nine_math"),
                out_dir=f"{tmp}/{setting.replace('+', '_')}",
                setting=setting,
                cache_mode="replay",
                cache_dir=str(FIXTURES / "nine_cache"),
                runner=str(runner),
                concurrency=1,
            )
            artifacts = run_experiment(cfg, provider=None)
            [record] = artifacts.records
            answer = record.final.extracted.value if record.final else "-"
            verdict = "correct" if artifacts.report.overall == 1.0 else "wrong"
            print(f"{setting:8s}  {answer:6s}  {verdict}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
