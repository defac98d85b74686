"""Core pipeline formalism: prompt assembly, context propagation, validated
module sequences, and sequential execution with full tracing.

A pipeline threads an append-only Context through an ordered sequence of
modules; each module sees the question plus every earlier non-omitted output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Mapping, Protocol, Sequence

from . import answers

if TYPE_CHECKING:  # pragma: no cover
    from .modules import FinalAnswer

ANSWER_FORMATS = ("boxed", "integer", "multiple_choice")


class ModuleId(Enum):
    KR = "KR"  # LLM knowledge retrieval
    BS = "BS"  # web search
    WA = "WA"  # computational knowledge engine
    PG = "PG"  # program generation + execution
    CR = "CR"  # code refinement
    SG = "SG"  # solution generation

    def __str__(self) -> str:
        return self.name


# How a module's context entry announces itself in downstream prompts.
SOURCE_NAMES = {
    "question": "Question",
    "KR": "Retrieved knowledge",
    "BS": "Web search results",
    "WA": "WolframAlpha response",
    "PG": "Python code and output",
    "CR": "Refined Python code and output",
    "SG": "Solution",
}


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    gold: str
    answer_format: str = "boxed"
    subject: str | None = None
    level: int | None = None
    options: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"question {self.id!r} has empty text")
        if self.answer_format not in ANSWER_FORMATS:
            raise ValueError(f"unknown answer format {self.answer_format!r}")
        if self.level is not None and not 1 <= self.level <= 5:
            raise ValueError(f"question {self.id!r} level {self.level} outside [1, 5]")
        has_options = self.options is not None
        if has_options != (self.answer_format == "multiple_choice"):
            raise ValueError(f"question {self.id!r}: options present iff multiple choice")


@dataclass(frozen=True)
class ModuleSpec:
    id: ModuleId
    instruction: str
    few_shot: tuple[str, ...] = ()
    config: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("module instruction must be nonempty")


@dataclass(frozen=True)
class ContextEntry:
    label: str  # "question" or the producing module id
    text: str


@dataclass(frozen=True)
class Context:
    entries: tuple[ContextEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("context must contain at least the question")
        if self.entries[0].label != "question":
            raise ValueError("context entry 0 must be the question")

    @classmethod
    def for_question(cls, question: Question) -> "Context":
        return cls(entries=(ContextEntry("question", question.text),))

    @property
    def question_text(self) -> str:
        return self.entries[0].text


@dataclass(frozen=True)
class ModuleOutput:
    producer: ModuleId
    text: str
    artifacts: Mapping[str, Any] | None = None
    omitted_from_context: bool = False


SECTION_DELIMITER = "\n---\n"


def render_context(ctx: Context) -> str:
    blocks = []
    for entry in ctx.entries:
        name = SOURCE_NAMES.get(entry.label, entry.label)
        if entry.label == "question":
            blocks.append(f"Question: {entry.text}")
        else:
            blocks.append(f"{name}:\n{entry.text}")
    return "\n\n".join(blocks)


def assemble_prompt(spec: ModuleSpec, ctx: Context) -> str:
    """Instruction, then in-context examples, then the running context, as
    sections split by a horizontal rule. Empty few-shot collapses to two
    sections. Pure and byte-deterministic."""
    sections = [spec.instruction]
    if spec.few_shot:
        sections.append("\n\n".join(spec.few_shot))
    sections.append(render_context(ctx))
    return SECTION_DELIMITER.join(sections)


def extend_context(ctx: Context, out: ModuleOutput) -> Context:
    if out.omitted_from_context:
        return ctx
    return Context(entries=ctx.entries + (ContextEntry(out.producer.name, out.text),))


class SequenceError(Exception):
    pass


class SgNotTerminal(SequenceError):
    pass


class OrphanCr(SequenceError):
    pass


class DuplicateModule(SequenceError):
    pass


@dataclass(frozen=True)
class ValidatedPipeline:
    sequence: tuple[ModuleId, ...]

    def __post_init__(self):
        seq = self.sequence
        if not seq:
            raise SequenceError("module sequence is empty")
        seen = set()
        for mid in seq:
            if mid in seen:
                raise DuplicateModule(f"{mid} appears more than once")
            seen.add(mid)
        if seq[-1] is not ModuleId.SG:
            raise SgNotTerminal("SG must be the last module in every sequence")
        for i, mid in enumerate(seq):
            if mid is ModuleId.CR and (i == 0 or seq[i - 1] is not ModuleId.PG):
                raise OrphanCr("CR is only valid immediately after PG")

    @property
    def setting(self) -> str:
        return "+".join(m.name for m in self.sequence)


def validate_sequence(ids: Sequence[ModuleId | str]) -> ValidatedPipeline:
    coerced = tuple(m if isinstance(m, ModuleId) else ModuleId[str(m).strip().upper()] for m in ids)
    return ValidatedPipeline(sequence=coerced)


class ToolApiError(Exception):
    """Hard tool/API failure: the module's output is omitted and the run
    proceeds, since SG can still answer from partial context."""


class UnregisteredModule(Exception):
    pass


class PipelineModule(Protocol):  # pragma: no cover - structural type only
    module_id: ModuleId

    def run(self, ctx: Context, question: Question, prev: ModuleOutput | None) -> ModuleOutput: ...


@dataclass(frozen=True)
class TraceEntry:
    module: str
    text: str
    omitted: bool
    latency: float
    error: str | None = None
    prompts: tuple[str, ...] = ()
    artifacts: Mapping[str, Any] | None = None


@dataclass
class RunRecord:
    question_id: str
    setting: str
    trace: tuple[TraceEntry, ...]
    final: "FinalAnswer | None"
    error_label: str | None = None
    duration: float = 0.0


def run_pipeline(
    pipeline: ValidatedPipeline,
    question: Question,
    registry: Mapping[ModuleId, PipelineModule],
) -> RunRecord:
    """Execute the sequence in order, threading the context. Tool failures are
    recorded in the trace and the failing output omitted; the run continues."""
    missing = [m.name for m in pipeline.sequence if m not in registry]
    if missing:
        raise UnregisteredModule(f"no implementation registered for {', '.join(missing)}")

    started = time.perf_counter()
    ctx = Context.for_question(question)
    trace: list[TraceEntry] = []
    prev: ModuleOutput | None = None
    final: "FinalAnswer | None" = None
    pg_exec_failed = False

    for mid in pipeline.sequence:
        module = registry[mid]
        t0 = time.perf_counter()
        error = None
        try:
            out = module.run(ctx, question, prev)
        except ToolApiError as exc:
            out = ModuleOutput(producer=mid, text="", omitted_from_context=True)
            error = f"{type(exc).__name__}: {exc}"
        latency = time.perf_counter() - t0

        artifacts = dict(out.artifacts) if out.artifacts else {}
        prompts = tuple(artifacts.pop("prompts", ()))
        if mid is ModuleId.PG and artifacts.get("exec_error") and out.omitted_from_context:
            pg_exec_failed = True
        if mid is ModuleId.CR and not out.omitted_from_context:
            pg_exec_failed = False
        if mid is ModuleId.SG:
            final = artifacts.pop("final", None)

        trace.append(
            TraceEntry(
                module=mid.name,
                text=out.text,
                omitted=out.omitted_from_context,
                latency=latency,
                error=error,
                prompts=prompts,
                artifacts=artifacts or None,
            )
        )
        ctx = extend_context(ctx, out)
        prev = out

    if final is None:
        label = answers.UNANSWERED
    elif pg_exec_failed:
        label = answers.PG_EXEC_ERR
    else:
        label = None

    return RunRecord(
        question_id=question.id,
        setting=pipeline.setting,
        trace=tuple(trace),
        final=final,
        error_label=label,
        duration=time.perf_counter() - started,
    )
