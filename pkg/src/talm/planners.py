"""Module-sequence planners: fixed configuration, plan-ahead (one LLM call
choosing the whole sequence), and an iterative thought/action/observation loop
with a step budget.

Action grammar for the iterative planner, one action per line:
    Action: <tool-name>[<input>]
    Action: Finish[<answer>]
"""

from __future__ import annotations

import ast
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import answers, prompts
from .answers import ExtractionFailure
from .gateway import Gateway, chat_request
from .modules import DEFAULT_MODEL, FinalAnswer
from .pipeline import (
    Context,
    ModuleId,
    ModuleOutput,
    Question,
    RunRecord,
    SequenceError,
    ToolApiError,
    TraceEntry,
    ValidatedPipeline,
    assemble_prompt,
    extend_context,
    validate_sequence,
)

# Tool names exposed to the planners (knowledge retrieval and code refinement
# are not in the planner vocabulary).
TOOL_NAME_TO_MODULE = {
    "wolfram-alpha-search": ModuleId.WA,
    "bing-search": ModuleId.BS,
    "python-generator": ModuleId.PG,
    "solution-generator": ModuleId.SG,
}

DEFAULT_FALLBACK = ("PG", "WA", "SG")
DEFAULT_REACT_BUDGET = 8
REPROMPT_SENTINEL = "[malformed action]"

_LIST_LITERAL = re.compile(r"\[[^\[\]]*\]")
_ACTION_LINE = re.compile(r"Action:\s*([A-Za-z][\w-]*)\s*\[(.*)\]")
_THOUGHT_LINE = re.compile(r"Thought:\s*(.+)")

ToolFn = Callable[[str, Context], str]


def plan_fixed(config_sequence: str | Sequence[ModuleId | str]) -> ValidatedPipeline:
    """Validate a predetermined sequence like ``"PG,WA,SG"`` or ``"pg+wa+sg"``."""
    if isinstance(config_sequence, str):
        parts = [p for p in re.split(r"[+,]", config_sequence) if p.strip()]
        return validate_sequence(parts)
    return validate_sequence(list(config_sequence))


@dataclass(frozen=True)
class PlannerDecision:
    raw: str
    pipeline: ValidatedPipeline
    fallback_used: bool

    @property
    def sequence(self) -> tuple[ModuleId, ...]:
        return self.pipeline.sequence


def _parse_module_list(raw: str) -> ValidatedPipeline | None:
    m = _LIST_LITERAL.search(raw)
    if not m:
        return None
    try:
        names = ast.literal_eval(m.group(0))
        ids = [TOOL_NAME_TO_MODULE[str(n).strip().lower()] for n in names]
        return validate_sequence(ids)
    except (ValueError, SyntaxError, KeyError, TypeError, SequenceError):
        return None


def plan_pas(
    question: Question,
    *,
    gateway: Gateway,
    model: str = DEFAULT_MODEL,
    fallback: Sequence[str] = DEFAULT_FALLBACK,
) -> PlannerDecision:
    """One planner call choosing the whole module sequence up front; any parse
    or validation failure falls back to the configured default."""
    prompt = prompts.pas_spec()
    text = gateway.complete(chat_request(model, _pas_prompt(prompt, question))).text
    pipeline = _parse_module_list(text)
    if pipeline is None:
        return PlannerDecision(raw=text, pipeline=validate_sequence(list(fallback)), fallback_used=True)
    return PlannerDecision(raw=text, pipeline=pipeline, fallback_used=False)


def _pas_prompt(spec, question: Question) -> str:
    return assemble_prompt(spec, Context.for_question(question)) + "\nModules:"


@dataclass
class ReactState:
    """Evolving thought/action/observation trace confined to one run."""

    budget: int
    context: Context
    trace: list[tuple[str, str, str]] = field(default_factory=list)
    step: int = 0
    finished: bool = False
    final_text: str | None = None

    def record(self, thought: str, action: str, observation: str):
        if self.step >= self.budget:
            raise ValueError("step budget exhausted")
        self.step += 1
        self.trace.append((thought, action, observation))

    def finish(self, thought: str, answer: str):
        self.record(thought, f"Finish[{answer}]", "finished")
        self.finished = True
        self.final_text = answer


def _parse_step(text: str, known_tools: set[str]) -> tuple[str, tuple[str, str] | None]:
    thoughts = _THOUGHT_LINE.findall(text)
    thought = thoughts[0].strip() if thoughts else text.strip().splitlines()[0] if text.strip() else ""
    for name, arg in _ACTION_LINE.findall(text):
        if name == "Finish" or name in known_tools:
            return thought, (name, arg.strip())
    return thought, None


def _react_prompt(instruction: str, question: Question, state: ReactState) -> str:
    lines = [f"Question: {question.text}"]
    for thought, action, observation in state.trace:
        lines.append(f"Thought: {thought}")
        lines.append(f"Action: {action}")
        if observation != "finished":
            lines.append(f"Observation: {observation}")
    lines.append("Thought:")
    return instruction + "\n---\n" + "\n".join(lines)


def _finish_answer(arg: str, answer_format: str) -> FinalAnswer:
    if "\\boxed" in arg:
        try:
            extracted = answers.extract_final(arg, "boxed")
        except ExtractionFailure:
            extracted = answers.normalize(arg)
    elif answer_format == "multiple_choice":
        try:
            extracted = answers.extract_final(arg, "multiple_choice")
        except ExtractionFailure:
            extracted = answers.normalize(arg)
    else:
        extracted = answers.normalize(arg)
    return FinalAnswer(raw_solution=arg, extracted=extracted)


def run_react(
    question: Question,
    *,
    gateway: Gateway,
    tools: Mapping[str, ToolFn],
    budget: int = DEFAULT_REACT_BUDGET,
    model: str = DEFAULT_MODEL,
) -> RunRecord:
    """Iterate thought/action/observation triplets until a Finish action or
    budget exhaustion; exhaustion yields a non-convergent record."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    unknown = set(tools) - set(TOOL_NAME_TO_MODULE)
    if unknown:
        raise ValueError(f"unknown tool names: {sorted(unknown)}")

    started = time.perf_counter()
    instruction = prompts.react_instruction()
    state = ReactState(budget=budget, context=Context.for_question(question))
    entries: list[TraceEntry] = []
    final: FinalAnswer | None = None

    while state.step < budget and not state.finished:
        t0 = time.perf_counter()
        prompt = _react_prompt(instruction, question, state)
        text = gateway.complete(chat_request(model, prompt)).text
        used_prompts = [prompt]
        thought, action = _parse_step(text, set(tools))
        if action is None:
            nudge = (
                prompt
                + "\n\nYour previous response was malformed. Respond with a Thought line and "
                + "exactly one line of the form Action: <tool>[<input>]."
            )
            text = gateway.complete(chat_request(model, nudge)).text
            used_prompts.append(nudge)
            thought, action = _parse_step(text, set(tools))

        if action is None:
            state.record(thought, "(malformed)", REPROMPT_SENTINEL)
            entries.append(
                TraceEntry(
                    module="react",
                    text=REPROMPT_SENTINEL,
                    omitted=True,
                    latency=time.perf_counter() - t0,
                    error="malformed action after reprompt",
                    prompts=tuple(used_prompts),
                    artifacts={"thought": thought},
                )
            )
            continue

        name, arg = action
        if name == "Finish":
            state.finish(thought, arg)
            final = _finish_answer(arg, question.answer_format)
            entries.append(
                TraceEntry(
                    module="finish",
                    text=arg,
                    omitted=False,
                    latency=time.perf_counter() - t0,
                    prompts=tuple(used_prompts),
                    artifacts={"thought": thought, "action": f"Finish[{arg}]"},
                )
            )
            break

        try:
            observation = tools[name](arg, state.context)
            error = None
        except ToolApiError as exc:
            observation = f"[tool error: {exc}]"
            error = f"{type(exc).__name__}: {exc}"
        state.context = extend_context(
            state.context,
            ModuleOutput(producer=TOOL_NAME_TO_MODULE[name], text=observation),
        )
        state.record(thought, f"{name}[{arg}]", observation)
        entries.append(
            TraceEntry(
                module=name,
                text=observation,
                omitted=False,
                latency=time.perf_counter() - t0,
                error=error,
                prompts=tuple(used_prompts),
                artifacts={"thought": thought, "action": f"{name}[{arg}]"},
            )
        )

    if state.finished and final is not None:
        label = None
    else:
        label = answers.NON_CONVERGENT
    return RunRecord(
        question_id=question.id,
        setting="react",
        trace=tuple(entries),
        final=final,
        error_label=label,
        duration=time.perf_counter() - started,
    )
