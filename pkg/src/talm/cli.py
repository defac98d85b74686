"""Command-line entry point: run experiments, grade saved records, render reports."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .answers import score_run
from .datasets import DatasetDescriptor, load_dataset
from .harness import (
    ConfigError,
    ExperimentConfig,
    load_records,
    render_report,
    report_from_dict,
    report_to_dict,
    run_experiment,
)


def _add_dataset_args(parser: argparse.ArgumentParser):
    parser.add_argument("--dataset", required=True, choices=("math", "gsm8k", "aqua", "mmlu_math"))
    parser.add_argument("--data-path", required=True, help="dataset root directory or file")
    parser.add_argument("--split", default="test")
    parser.add_argument("--expected-count", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="talm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a setting over a dataset slice")
    _add_dataset_args(run)
    run.add_argument("--setting", default="pg+wa+sg", help='module sequence ("pg+wa+sg"), "pas", or "react"')
    run.add_argument("--cache", default="replay", choices=("record", "replay", "live"))
    run.add_argument("--cache-dir", default=None)
    run.add_argument("--sample", type=int, default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output directory for run artifacts")
    run.add_argument("--concurrency", type=int, default=4)
    run.add_argument("--model", default="gpt-3.5-turbo")
    run.add_argument(
        "--model-for",
        action="append",
        default=[],
        metavar="MODULE=NAME",
        help="per-module model override, e.g. --model-for PG=phind-codellama-34b-v2 (repeatable)",
    )
    run.add_argument("--runner", default=None, help="path to the sandbox runner script")
    run.add_argument("--top-k", type=int, default=3)
    run.add_argument("--max-refinements", type=int, default=3)
    run.add_argument("--react-budget", type=int, default=8)
    run.add_argument("--wall-timeout", type=float, default=10.0)

    grade = sub.add_parser("grade", help="recompute the accuracy report for saved records")
    grade.add_argument("--records", required=True)
    _add_dataset_args(grade)
    grade.add_argument("--format", default="text", choices=("text", "csv", "md"))

    report = sub.add_parser("report", help="render a stored report")
    report.add_argument("--run-dir", default=None, help="run directory containing report.json")
    report.add_argument("--report", default=None, help="path to a report.json")
    report.add_argument("--format", default="text", choices=("text", "csv", "md"))
    return parser


def _parse_model_overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        module, sep, name = pair.partition("=")
        if not sep or not name:
            raise ConfigError(f"--model-for expects MODULE=NAME, got {pair!r}")
        overrides[module.strip().upper()] = name.strip()
    return overrides


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        dataset=args.dataset,
        data_path=args.data_path,
        out_dir=args.out,
        setting=args.setting,
        split=args.split,
        cache_mode=args.cache,
        cache_dir=args.cache_dir,
        sample=args.sample,
        seed=args.seed,
        concurrency=args.concurrency,
        model=args.model,
        models=_parse_model_overrides(args.model_for),
        top_k=args.top_k,
        max_refinements=args.max_refinements,
        react_budget=args.react_budget,
        runner=args.runner,
        wall_timeout=args.wall_timeout,
        expected_count=args.expected_count,
    )
    artifacts = run_experiment(cfg)
    print(f"{len(artifacts.records)} records -> {artifacts.records_path}")
    print(render_report(artifacts.report))
    return 0


def _cmd_grade(args) -> int:
    records = load_records(args.records)
    descriptor = DatasetDescriptor(
        kind=args.dataset, path=Path(args.data_path), split=args.split, expected_count=args.expected_count
    )
    report = score_run(records, load_dataset(descriptor))
    print(render_report(report, args.format))
    out = Path(args.records).parent / "report.json"
    out.write_text(json.dumps(report_to_dict(report), indent=2), encoding="utf-8")
    return 0


def _cmd_report(args) -> int:
    if not args.run_dir and not args.report:
        print("one of --run-dir or --report is required", file=sys.stderr)
        return 2
    path = Path(args.report) if args.report else Path(args.run_dir) / "report.json"
    report = report_from_dict(json.loads(path.read_text(encoding="utf-8")))
    print(render_report(report, args.format))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "grade":
            return _cmd_grade(args)
        return _cmd_report(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
