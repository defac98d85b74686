"""Experiment harness: configure a setting, run it over a dataset slice with
bounded concurrency, persist per-question records (JSON lines, resumable),
and render accuracy tables.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import answers
from .answers import AccuracyReport, score_run
from .cache import MODES, CacheStore
from .datasets import (
    DATASET_KINDS,
    DatasetDescriptor,
    load_dataset,
    sample_questions,
    subject_level_histogram,
)
from .gateway import Gateway, LiveProvider, Provider
from .modules import (
    DEFAULT_MAX_REFINEMENTS,
    DEFAULT_MODEL,
    DEFAULT_TOP_K,
    FinalAnswer,
    KnowledgeModule,
    ProgramModule,
    RefineModule,
    SolutionModule,
    WebSearchModule,
    WolframModule,
)
from .pipeline import ModuleId, Question, RunRecord, SequenceError, TraceEntry, run_pipeline
from .planners import DEFAULT_REACT_BUDGET, ToolFn, plan_fixed, plan_pas, run_react
from .sandbox import ExecutionLimits, Sandbox
from .search import SearchClient
from .wolfram import WolframClient, pods_text

CACHE_DIR_ENV = "TALM_CACHE_DIR"

SUBJECT_SHORT = {
    "Algebra": "Alg",
    "Precalculus": "P.Cal",
    "Prealgebra": "P.Alg",
    "Geometry": "Geom",
    "Counting and Probability": "Prob",
    "Number Theory": "N.Th",
    "Intermediate Algebra": "Int.Alg",
}


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    dataset: str
    data_path: str
    out_dir: str
    setting: str = "pg+wa+sg"
    split: str = "test"
    cache_mode: str = "replay"
    cache_dir: str | None = None
    sample: int | None = None
    seed: int = 0
    concurrency: int = 4
    model: str = DEFAULT_MODEL
    models: dict[str, str] = field(default_factory=dict)  # per-module overrides, keyed KR/BS/WA/PG/CR/SG
    top_k: int = DEFAULT_TOP_K
    max_refinements: int = DEFAULT_MAX_REFINEMENTS
    react_budget: int = DEFAULT_REACT_BUDGET
    runner: str | None = None
    wall_timeout: float = 10.0
    max_output_bytes: int = 16384
    expected_count: int | None = None

    def model_for(self, module: ModuleId) -> str:
        return self.models.get(module.name, self.model)

    def needs_sandbox(self) -> bool:
        if self.setting in ("pas", "react"):
            return True
        return any(m in (ModuleId.PG, ModuleId.CR) for m in plan_fixed(self.setting).sequence)

    def resolved_runner(self) -> Path | None:
        if self.runner:
            return Path(self.runner)
        bundled = Path(__file__).resolve().parents[2] / "runner" / "runner.py"
        return bundled if bundled.is_file() else None

    def validate(self) -> None:
        if self.dataset not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if not Path(self.data_path).exists():
            raise ConfigError(f"data path {self.data_path} does not exist")
        if self.cache_mode not in MODES:
            raise ConfigError(f"cache mode must be one of {MODES}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.sample is not None and self.sample < 1:
            raise ConfigError("sample must be >= 1")
        if self.setting not in ("pas", "react"):
            try:
                plan_fixed(self.setting)
            except (SequenceError, KeyError) as exc:
                raise ConfigError(f"invalid setting {self.setting!r}: {exc}") from exc
            if self.needs_sandbox() and self.resolved_runner() is None:
                raise ConfigError("setting uses the program module but no runner script was found")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))


def build_registry(cfg: ExperimentConfig, gateway: Gateway, cache: CacheStore | None):
    search = SearchClient(cache=cache)
    wolfram = WolframClient(cache=cache)
    registry = {
        ModuleId.KR: KnowledgeModule(gateway, model=cfg.model_for(ModuleId.KR), dataset=cfg.dataset),
        ModuleId.BS: WebSearchModule(
            gateway, search, top_k=cfg.top_k, model=cfg.model_for(ModuleId.BS), dataset=cfg.dataset
        ),
        ModuleId.WA: WolframModule(gateway, wolfram, model=cfg.model_for(ModuleId.WA), dataset=cfg.dataset),
        ModuleId.SG: SolutionModule(gateway, model=cfg.model_for(ModuleId.SG)),
    }
    runner = cfg.resolved_runner()
    if runner is not None:
        sandbox = Sandbox(runner=runner)
        limits = ExecutionLimits(wall_timeout=cfg.wall_timeout, max_output_bytes=cfg.max_output_bytes)
        registry[ModuleId.PG] = ProgramModule(
            gateway,
            sandbox,
            limits=limits,
            max_refinements=cfg.max_refinements,
            model=cfg.model_for(ModuleId.PG),
            dataset=cfg.dataset,
        )
        registry[ModuleId.CR] = RefineModule(
            gateway, sandbox, limits=limits, max_refinements=cfg.max_refinements, model=cfg.model_for(ModuleId.CR)
        )
    return registry


def make_react_tools(registry, question: Question) -> dict[str, ToolFn]:
    """Adapt registry modules to the planner's named tools."""
    tools: dict[str, ToolFn] = {}

    if ModuleId.BS in registry:
        bs = registry[ModuleId.BS]

        def bing_search(arg: str, ctx) -> str:
            results = bs.search.search(arg, bs.top_k)
            if not results:
                return "(no results)"
            return "\n".join(f"- {name}: {snippet[:512]} ({url})" for name, snippet, url in results)

        tools["bing-search"] = bing_search

    if ModuleId.WA in registry:
        wa = registry[ModuleId.WA]

        def wolfram_search(arg: str, ctx) -> str:
            return pods_text(wa.wolfram.query(arg)) or "(no result pods)"

        tools["wolfram-alpha-search"] = wolfram_search

    if ModuleId.PG in registry:
        pg = registry[ModuleId.PG]

        def python_generator(arg: str, ctx) -> str:
            out = pg.run(ctx, question, None)
            return out.text if not out.omitted_from_context else "[program execution failed]"

        tools["python-generator"] = python_generator

    sg = registry[ModuleId.SG]

    def solution_generator(arg: str, ctx) -> str:
        return sg.run(ctx, question, None).text

    tools["solution-generator"] = solution_generator
    return tools


# --- record (de)serialization -------------------------------------------------


def record_to_dict(record: RunRecord) -> dict:
    final = None
    if record.final is not None:
        final = {
            "raw_solution": record.final.raw_solution,
            "kind": record.final.extracted.kind,
            "value": record.final.extracted.value,
            "grounded_sources": list(record.final.grounded_sources),
        }
    return {
        "id": record.question_id,
        "setting": record.setting,
        "error_label": record.error_label,
        "duration": record.duration,
        "final": final,
        "trace": [
            {
                "module": e.module,
                "text": e.text,
                "omitted": e.omitted,
                "latency": e.latency,
                "error": e.error,
                "prompts": list(e.prompts),
                "artifacts": e.artifacts,
            }
            for e in record.trace
        ],
    }


def record_from_dict(data: dict) -> RunRecord:
    final = None
    if data.get("final"):
        f = data["final"]
        final = FinalAnswer(
            raw_solution=f["raw_solution"],
            extracted=answers.canonical_from(f["kind"], f["value"]),
            grounded_sources=tuple(f.get("grounded_sources", ())),
        )
    trace = tuple(
        TraceEntry(
            module=e["module"],
            text=e["text"],
            omitted=e["omitted"],
            latency=e["latency"],
            error=e.get("error"),
            prompts=tuple(e.get("prompts", ())),
            artifacts=e.get("artifacts"),
        )
        for e in data.get("trace", ())
    )
    return RunRecord(
        question_id=data["id"],
        setting=data.get("setting", ""),
        trace=trace,
        final=final,
        error_label=data.get("error_label"),
        duration=data.get("duration", 0.0),
    )


def load_records(path: str | Path) -> list[RunRecord]:
    records = []
    path = Path(path)
    if not path.exists():
        return records
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(record_from_dict(json.loads(line)))
    return records


# --- report rendering ----------------------------------------------------------


def _pct(fraction: float) -> str:
    return f"{100 * fraction:.1f}"


def _ordered_subjects(report: AccuracyReport) -> list[str]:
    known = [s for s in SUBJECT_SHORT if s in report.by_subject]
    extra = sorted(s for s in report.by_subject if s not in SUBJECT_SHORT)
    return known + extra


def render_report(report: AccuracyReport, fmt: str = "text") -> str:
    """Accuracy tables with one-decimal percentages: per-subject columns plus
    O.Acc, and a per-level section when level data exists."""
    subjects = _ordered_subjects(report)
    subject_cells = [(SUBJECT_SHORT.get(s, s), _pct(report.by_subject[s])) for s in subjects]
    level_cells = [(f"Level {lvl}", _pct(report.by_level[lvl])) for lvl in sorted(report.by_level)]
    rows = subject_cells + [("O.Acc", _pct(report.overall))] + level_cells
    errors = sorted(report.error_breakdown.items())

    if fmt == "text":
        lines = [f"{label} {value}" for label, value in rows]
        if errors:
            lines.append("errors: " + ", ".join(f"{k}={v}" for k, v in errors))
        if report.empty:
            lines.append("note: no graded records (total 0)")
        return "\n".join(lines)

    if fmt == "csv":
        lines = ["metric,percent"]
        lines += [f"{label},{value}" for label, value in rows]
        for k, v in errors:
            lines.append(f"error:{k},{v}")
        if report.empty:
            lines.append("note,total 0")
        return "\n".join(lines)

    if fmt in ("md", "markdown"):
        headers = [label for label, _ in subject_cells] + ["O.Acc"]
        values = [value for _, value in subject_cells] + [_pct(report.overall)]
        lines = [
            "| " + " | ".join(headers) + " |",
            "| " + " | ".join("---" for _ in headers) + " |",
            "| " + " | ".join(values) + " |",
        ]
        if level_cells:
            lines.append("")
            lines.append("| " + " | ".join(label for label, _ in level_cells) + " |")
            lines.append("| " + " | ".join("---" for _ in level_cells) + " |")
            lines.append("| " + " | ".join(value for _, value in level_cells) + " |")
        if errors:
            lines.append("")
            lines += [f"- {k}: {v}" for k, v in errors]
        if report.empty:
            lines.append("")
            lines.append("_no graded records (total 0)_")
        return "\n".join(lines)

    raise ValueError(f"unknown report format {fmt!r}")


def report_to_dict(report: AccuracyReport) -> dict:
    return {
        "correct": report.correct,
        "total": report.total,
        "overall": report.overall,
        "by_subject": report.by_subject,
        "by_level": {str(k): v for k, v in report.by_level.items()},
        "counts_by_subject": {k: list(v) for k, v in report.counts_by_subject.items()},
        "counts_by_level": {str(k): list(v) for k, v in report.counts_by_level.items()},
        "error_breakdown": report.error_breakdown,
    }


def report_from_dict(data: dict) -> AccuracyReport:
    return AccuracyReport(
        correct=data["correct"],
        total=data["total"],
        by_subject=dict(data.get("by_subject", {})),
        by_level={int(k): v for k, v in data.get("by_level", {}).items()},
        counts_by_subject={k: tuple(v) for k, v in data.get("counts_by_subject", {}).items()},
        counts_by_level={int(k): tuple(v) for k, v in data.get("counts_by_level", {}).items()},
        error_breakdown=dict(data.get("error_breakdown", {})),
    )


# --- experiment driver ----------------------------------------------------------


@dataclass
class RunArtifacts:
    out_dir: Path
    records_path: Path
    report: AccuracyReport
    records: list[RunRecord]


def run_experiment(cfg: ExperimentConfig, provider: Provider | None = None) -> RunArtifacts:
    """Run every sampled question through the configured setting. Per-question
    failures are recorded, never fatal; rerunning skips completed ids."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(cfg.to_json(), encoding="utf-8")

    descriptor = DatasetDescriptor(
        kind=cfg.dataset, path=Path(cfg.data_path), split=cfg.split, expected_count=cfg.expected_count
    )
    questions = sample_questions(load_dataset(descriptor), cfg.sample, cfg.seed)
    subjects, levels = subject_level_histogram(questions)
    (out_dir / "histogram.json").write_text(
        json.dumps({"subjects": dict(subjects), "levels": {str(k): v for k, v in levels.items()}}, indent=2),
        encoding="utf-8",
    )

    cache_dir = cfg.cache_dir or os.environ.get(CACHE_DIR_ENV) or str(out_dir / "cache")
    cache = CacheStore(cache_dir, cfg.cache_mode)
    if provider is None and cfg.cache_mode != "replay":
        provider = LiveProvider()
    gateway = Gateway(provider, cache, max_in_flight=cfg.concurrency)
    registry = build_registry(cfg, gateway, cache)

    records_path = out_dir / "records.jsonl"
    records = load_records(records_path)  # the progress marker: completed ids are skipped
    done = {r.question_id for r in records}
    todo = [q for q in questions if q.id not in done]

    write_lock = threading.Lock()

    def solve(question: Question) -> RunRecord:
        try:
            if cfg.setting == "react":
                return run_react(
                    question,
                    gateway=gateway,
                    tools=make_react_tools(registry, question),
                    budget=cfg.react_budget,
                    model=cfg.model_for(ModuleId.SG),
                )
            if cfg.setting == "pas":
                decision = plan_pas(question, gateway=gateway, model=cfg.model_for(ModuleId.SG))
                return run_pipeline(decision.pipeline, question, registry)
            return run_pipeline(plan_fixed(cfg.setting), question, registry)
        except Exception as exc:  # per-question failures become records
            entry = TraceEntry(
                module="harness", text="", omitted=True, latency=0.0, error=f"{type(exc).__name__}: {exc}"
            )
            return RunRecord(
                question_id=question.id,
                setting=cfg.setting,
                trace=(entry,),
                final=None,
                error_label=answers.UNANSWERED,
            )

    def worker(question: Question) -> None:
        record = solve(question)
        # default=str: a rogue module artifact must not take down the run.
        line = json.dumps(record_to_dict(record), sort_keys=True, default=str)
        with write_lock:
            with records_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            records.append(record)

    if todo:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            list(pool.map(worker, todo))

    report = score_run(records, questions)
    (out_dir / "report.json").write_text(json.dumps(report_to_dict(report), indent=2), encoding="utf-8")
    for fmt, suffix in (("text", "txt"), ("csv", "csv"), ("md", "md")):
        (out_dir / f"report.{suffix}").write_text(render_report(report, fmt) + "\n", encoding="utf-8")
    return RunArtifacts(out_dir=out_dir, records_path=records_path, report=report, records=records)
