"""The six pipeline modules: LLM knowledge retrieval (KR), web search (BS),
computational knowledge engine (WA), program generation + execution (PG),
code refinement (CR), and solution generation (SG).

Module functions are the operational surface; the thin *Module classes at the
bottom adapt them to the pipeline registry. All are stateless given their
(gateway, search, wolfram, sandbox) handles.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import answers, prompts
from .answers import CanonicalAnswer, ExtractionFailure
from .gateway import Gateway, chat_request
from .pipeline import (
    SECTION_DELIMITER,
    Context,
    ModuleId,
    ModuleOutput,
    Question,
    assemble_prompt,
    render_context,
)
from .sandbox import ExecutionLimits, ExecutionResult, Sandbox
from .search import SearchClient
from .wolfram import WolframApiError, WolframClient, pods_text

DEFAULT_MODEL = "gpt-3.5-turbo"
DEFAULT_TOP_K = 3
DEFAULT_MAX_REFINEMENTS = 3
SNIPPET_CAP = 512


class RefinementExhausted(Exception):
    pass


class PreconditionViolated(Exception):
    pass


@dataclass(frozen=True)
class SearchBundle:
    """Snippets from the two retrieval branches; rendering always puts the
    similar-questions block before the concepts block."""

    similar_questions: tuple[tuple[str, str, str], ...]
    concepts: tuple[tuple[str, str, str], ...]
    generated_query: str

    def render(self) -> str:
        if not self.similar_questions and not self.concepts:
            return ""

        def block(title: str, items) -> str:
            lines = [f"{title}:"]
            for name, snippet, url in items:
                lines.append(f"- {name}: {snippet} ({url})")
            if not items:
                lines.append("- (none)")
            return "\n".join(lines)

        return block("Similar questions", self.similar_questions) + "\n" + block("Concepts", self.concepts)


@dataclass(frozen=True)
class WolframExchange:
    thought: str
    final_query: str
    raw_response: dict
    extracted: str

    def __post_init__(self):
        if self.extracted and not self.final_query.strip():
            raise ValueError("a successful exchange needs a nonempty final query")


@dataclass(frozen=True)
class CodeArtifact:
    source: str
    imports_required: tuple[str, ...] = ()
    attempt: int = 0
    rationale: str | None = None

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError("code artifact needs nonempty source")
        if self.attempt < 0:
            raise ValueError("attempt index must be >= 0")


@dataclass(frozen=True)
class FinalAnswer:
    raw_solution: str
    extracted: CanonicalAnswer
    grounded_sources: tuple[str, ...] = ()


_CODE_FENCE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)
_THOUGHT_LINE = re.compile(r"^Thought:\s*(.+)$", re.MULTILINE)
_QUERY_LINE = re.compile(r"^Query:\s*(.+)$", re.MULTILINE)
_FINAL_QUERY_LINE = re.compile(r"^Final Query:\s*(.+)$", re.MULTILINE)
_ERRORS_FIXED = re.compile(r"Errors fixed:\s*(.+)", re.DOTALL)
_IMPORT = re.compile(r"^\s*(?:from|import)\s+([A-Za-z_][A-Za-z0-9_]*)", re.MULTILINE)

_SOURCE_HINTS = {
    "KR": ("knowledge",),
    "BS": ("search", "web", "retrieved"),
    "WA": ("wolfram",),
    "PG": ("python", "code"),
    "CR": ("python", "code"),
}


def extract_code(completion: str) -> str:
    m = _CODE_FENCE.search(completion)
    return (m.group(1) if m else completion).strip()


def _imports(source: str) -> tuple[str, ...]:
    seen: list[str] = []
    for name in _IMPORT.findall(source):
        if name not in seen:
            seen.append(name)
    return tuple(seen)


def _question_metadata(question: Question | None) -> str:
    if question is None:
        return ""
    lines = []
    if question.subject:
        lines.append(f"Mathematics Problem Type: {question.subject}")
    if question.level is not None:
        lines.append(f"Level of Problem: Level {question.level}")
    return ("\n" + "\n".join(lines)) if lines else ""


def _cap_snippets(results) -> tuple[tuple[str, str, str], ...]:
    return tuple((name, snippet[:SNIPPET_CAP], url) for name, snippet, url in results)


def _grounded_sources(ctx: Context, solution: str) -> tuple[str, ...]:
    present = {entry.label for entry in ctx.entries}
    low = solution.lower()
    return tuple(
        mid for mid, hints in _SOURCE_HINTS.items() if mid in present and any(h in low for h in hints)
    )


def run_kr(
    ctx: Context,
    *,
    gateway: Gateway,
    question: Question | None = None,
    model: str = DEFAULT_MODEL,
    dataset: str = "math",
) -> ModuleOutput:
    """One LLM call retrieving concepts, formulas, and hints for the question."""
    spec = prompts.spec_for(ModuleId.KR, dataset)
    prompt = assemble_prompt(spec, ctx) + _question_metadata(question)
    resp = gateway.complete(chat_request(model, prompt, system=spec.config.get("system")))
    return ModuleOutput(ModuleId.KR, resp.text.strip(), artifacts={"prompts": (prompt,)})


def run_bs(
    ctx: Context,
    *,
    gateway: Gateway,
    search: SearchClient,
    question: Question | None = None,
    top_k: int = DEFAULT_TOP_K,
    model: str = DEFAULT_MODEL,
    dataset: str = "math",
) -> ModuleOutput:
    """Two retrievals: the raw question queried directly (similar questions),
    and one LLM-generated query (concepts)."""
    used_prompts: tuple[str, ...] = ()
    if top_k <= 0:
        bundle = SearchBundle((), (), "")
    else:
        similar = _cap_snippets(search.search(ctx.question_text, top_k))
        spec = prompts.spec_for(ModuleId.BS, dataset)
        prompt = assemble_prompt(spec, ctx) + _question_metadata(question)
        resp = gateway.complete(chat_request(model, prompt, system=spec.config.get("system")))
        queries = _QUERY_LINE.findall(resp.text)
        generated = queries[-1].strip() if queries else resp.text.strip()
        concepts = _cap_snippets(search.search(generated, top_k))
        bundle = SearchBundle(similar, concepts, generated)
        used_prompts = (prompt,)
    return ModuleOutput(
        ModuleId.BS,
        bundle.render(),
        artifacts={
            "prompts": used_prompts,
            "generated_query": bundle.generated_query,
            "similar_questions": [list(t) for t in bundle.similar_questions],
            "concepts": [list(t) for t in bundle.concepts],
        },
    )


def run_wa(
    ctx: Context,
    *,
    gateway: Gateway,
    wolfram: WolframClient,
    model: str = DEFAULT_MODEL,
    dataset: str = "math",
) -> ModuleOutput:
    """Thought, final query, API call, then LLM distillation of the pods."""
    tprompt = assemble_prompt(prompts.wa_thought_spec(dataset), ctx)
    tresp = gateway.complete(chat_request(model, tprompt))
    thoughts = _THOUGHT_LINE.findall(tresp.text)
    thought = thoughts[-1].strip() if thoughts else tresp.text.strip()

    qprompt = assemble_prompt(prompts.wa_query_spec(dataset), ctx) + f"\n\nThought: {thought}"
    qresp = gateway.complete(chat_request(model, qprompt))
    queries = _FINAL_QUERY_LINE.findall(qresp.text)
    used_prompts = [tprompt, qprompt]
    if not queries:
        # One retry with an explicit format nudge, then give up on this tool.
        nudged = qprompt + "\n\nRespond with exactly one line of the form: Final Query: <query>"
        qresp = gateway.complete(chat_request(model, nudged))
        queries = _FINAL_QUERY_LINE.findall(qresp.text)
        used_prompts.append(nudged)
        if not queries:
            raise WolframApiError("could not parse a final query from the model output")
    final_query = queries[-1].strip()

    document = wolfram.query(final_query)
    pods = pods_text(document)
    if not pods.strip():
        raise WolframApiError(f"no result pods for query {final_query!r}")

    eprompt = SECTION_DELIMITER.join([prompts.wa_extract_instruction(), render_context(ctx), pods])
    eresp = gateway.complete(chat_request(model, eprompt))
    used_prompts.append(eprompt)
    exchange = WolframExchange(
        thought=thought, final_query=final_query, raw_response=document, extracted=eresp.text.strip()
    )

    return ModuleOutput(
        ModuleId.WA,
        exchange.extracted,
        artifacts={
            "prompts": tuple(used_prompts),
            "thought": exchange.thought,
            "final_query": exchange.final_query,
            "raw_response": exchange.raw_response,
        },
    )


def _execution_error(result: ExecutionResult) -> str:
    if result.stderr.strip():
        return result.stderr.strip()
    return f"execution failed with status {result.status}"


def _refine_once(
    failed: CodeArtifact,
    err: str,
    ctx: Context,
    *,
    gateway: Gateway,
    model: str,
) -> tuple[CodeArtifact, str]:
    system = prompts.cr_system_prompt()
    user = SECTION_DELIMITER.join(
        [
            f"Incorrect program:\n```python\n{failed.source}\n```",
            f"Error message:\n{err}",
            render_context(ctx),
        ]
    )
    resp = gateway.complete(chat_request(model, user, system=system))
    source = extract_code(resp.text)
    m = _ERRORS_FIXED.search(resp.text)
    rationale = m.group(1).strip() if m else None
    artifact = CodeArtifact(
        source=source,
        imports_required=_imports(source),
        attempt=failed.attempt + 1,
        rationale=rationale,
    )
    return artifact, user


def run_cr(
    failed: CodeArtifact,
    err: str,
    ctx: Context,
    *,
    gateway: Gateway,
    model: str = DEFAULT_MODEL,
    max_refinements: int = DEFAULT_MAX_REFINEMENTS,
) -> CodeArtifact:
    """One LLM repair round: corrected program plus an "Errors fixed" rationale.
    Only runs on failures."""
    if not err or not err.strip():
        raise PreconditionViolated("refinement requires the failing program's error message")
    if failed.attempt >= max_refinements:
        raise RefinementExhausted(f"attempt {failed.attempt} reached the budget of {max_refinements}")
    artifact, _ = _refine_once(failed, err, ctx, gateway=gateway, model=model)
    return artifact


def run_pg(
    ctx: Context,
    *,
    gateway: Gateway,
    sandbox: Sandbox,
    limits: ExecutionLimits | None = None,
    refine: bool = False,
    max_refinements: int = DEFAULT_MAX_REFINEMENTS,
    model: str = DEFAULT_MODEL,
    dataset: str = "math",
) -> ModuleOutput:
    """Generate a program, execute it, and either surface code + stdout or
    omit the output (optionally refining failures first)."""
    spec = prompts.spec_for(ModuleId.PG, dataset)
    prompt = assemble_prompt(spec, ctx)
    resp = gateway.complete(chat_request(model, prompt, system=spec.config.get("system")))
    artifact = CodeArtifact(source=extract_code(resp.text), imports_required=_imports(extract_code(resp.text)))
    used_prompts = [prompt]

    result = sandbox.execute(artifact, limits)
    err = None if result.ok else _execution_error(result)
    while err is not None and refine and artifact.attempt < max_refinements:
        artifact, rprompt = _refine_once(artifact, err, ctx, gateway=gateway, model=model)
        used_prompts.append(rprompt)
        result = sandbox.execute(artifact, limits)
        err = None if result.ok else _execution_error(result)

    if err is None:
        text = f"{artifact.source}\n\nOutput:\n{result.stdout}".rstrip()
        return ModuleOutput(
            ModuleId.PG,
            text,
            artifacts={
                "prompts": tuple(used_prompts),
                "code": artifact.source,
                "stdout": result.stdout,
                "status": "ok",
                "attempt": artifact.attempt,
                "rationale": artifact.rationale,
            },
        )
    # A failing program never reaches the context, not even partial stdout.
    return ModuleOutput(
        ModuleId.PG,
        "",
        omitted_from_context=True,
        artifacts={
            "prompts": tuple(used_prompts),
            "code": artifact.source,
            "exec_error": err,
            "status": result.status,
            "attempt": artifact.attempt,
        },
    )


def _generate_solution(
    ctx: Context, answer_format: str, gateway: Gateway, model: str
) -> tuple[str, str]:
    spec = prompts.sg_spec(answer_format)
    prompt = assemble_prompt(spec, ctx)
    resp = gateway.complete(chat_request(model, prompt, system=spec.config.get("system")))
    return resp.text, prompt


def run_sg(
    ctx: Context,
    answer_format: str,
    *,
    gateway: Gateway,
    model: str = DEFAULT_MODEL,
) -> FinalAnswer:
    """Compile the step-by-step solution and extract the final answer."""
    raw, _ = _generate_solution(ctx, answer_format, gateway, model)
    extracted = answers.extract_final(raw, answer_format)
    return FinalAnswer(raw_solution=raw, extracted=extracted, grounded_sources=_grounded_sources(ctx, raw))


# Pipeline-registry adapters.


class KnowledgeModule:
    module_id = ModuleId.KR

    def __init__(self, gateway: Gateway, model: str = DEFAULT_MODEL, dataset: str = "math"):
        self.gateway = gateway
        self.model = model
        self.dataset = dataset

    def run(self, ctx, question, prev):
        return run_kr(ctx, gateway=self.gateway, question=question, model=self.model, dataset=self.dataset)


class WebSearchModule:
    module_id = ModuleId.BS

    def __init__(
        self,
        gateway: Gateway,
        search: SearchClient,
        top_k: int = DEFAULT_TOP_K,
        model: str = DEFAULT_MODEL,
        dataset: str = "math",
    ):
        self.gateway = gateway
        self.search = search
        self.top_k = top_k
        self.model = model
        self.dataset = dataset

    def run(self, ctx, question, prev):
        return run_bs(
            ctx,
            gateway=self.gateway,
            search=self.search,
            question=question,
            top_k=self.top_k,
            model=self.model,
            dataset=self.dataset,
        )


class WolframModule:
    module_id = ModuleId.WA

    def __init__(self, gateway: Gateway, wolfram: WolframClient, model: str = DEFAULT_MODEL, dataset: str = "math"):
        self.gateway = gateway
        self.wolfram = wolfram
        self.model = model
        self.dataset = dataset

    def run(self, ctx, question, prev):
        return run_wa(ctx, gateway=self.gateway, wolfram=self.wolfram, model=self.model, dataset=self.dataset)


class ProgramModule:
    module_id = ModuleId.PG

    def __init__(
        self,
        gateway: Gateway,
        sandbox: Sandbox,
        limits: ExecutionLimits | None = None,
        refine: bool = False,
        max_refinements: int = DEFAULT_MAX_REFINEMENTS,
        model: str = DEFAULT_MODEL,
        dataset: str = "math",
    ):
        self.gateway = gateway
        self.sandbox = sandbox
        self.limits = limits
        self.refine = refine
        self.max_refinements = max_refinements
        self.model = model
        self.dataset = dataset

    def run(self, ctx, question, prev):
        return run_pg(
            ctx,
            gateway=self.gateway,
            sandbox=self.sandbox,
            limits=self.limits,
            refine=self.refine,
            max_refinements=self.max_refinements,
            model=self.model,
            dataset=self.dataset,
        )


class RefineModule:
    """CR as a pipeline stage: repairs the immediately preceding PG failure,
    re-executing until success or budget exhaustion."""

    module_id = ModuleId.CR

    def __init__(
        self,
        gateway: Gateway,
        sandbox: Sandbox,
        limits: ExecutionLimits | None = None,
        max_refinements: int = DEFAULT_MAX_REFINEMENTS,
        model: str = DEFAULT_MODEL,
    ):
        self.gateway = gateway
        self.sandbox = sandbox
        self.limits = limits
        self.max_refinements = max_refinements
        self.model = model

    def run(self, ctx, question, prev):
        failed_pg = (
            prev is not None
            and prev.producer is ModuleId.PG
            and prev.artifacts is not None
            and prev.artifacts.get("exec_error")
        )
        if not failed_pg:
            return ModuleOutput(
                ModuleId.CR,
                "",
                omitted_from_context=True,
                artifacts={"note": "no failing program to refine"},
            )
        artifact = CodeArtifact(source=prev.artifacts["code"], attempt=int(prev.artifacts.get("attempt", 0)))
        err = str(prev.artifacts["exec_error"])
        used_prompts: list[str] = []
        while artifact.attempt < self.max_refinements:
            artifact, rprompt = _refine_once(artifact, err, ctx, gateway=self.gateway, model=self.model)
            used_prompts.append(rprompt)
            result = self.sandbox.execute(artifact, self.limits)
            if result.ok:
                text = f"{artifact.source}\n\nOutput:\n{result.stdout}".rstrip()
                return ModuleOutput(
                    ModuleId.CR,
                    text,
                    artifacts={
                        "prompts": tuple(used_prompts),
                        "code": artifact.source,
                        "stdout": result.stdout,
                        "status": "ok",
                        "attempt": artifact.attempt,
                        "rationale": artifact.rationale,
                    },
                )
            err = _execution_error(result)
        return ModuleOutput(
            ModuleId.CR,
            "",
            omitted_from_context=True,
            artifacts={
                "prompts": tuple(used_prompts),
                "code": artifact.source,
                "exec_error": err,
                "status": "refinement_exhausted",
                "attempt": artifact.attempt,
            },
        )


class SolutionModule:
    module_id = ModuleId.SG

    def __init__(self, gateway: Gateway, model: str = DEFAULT_MODEL):
        self.gateway = gateway
        self.model = model

    def run(self, ctx, question, prev):
        raw, prompt = _generate_solution(ctx, question.answer_format, self.gateway, self.model)
        artifacts: dict = {"prompts": (prompt,)}
        try:
            extracted = answers.extract_final(raw, question.answer_format)
            artifacts["final"] = FinalAnswer(
                raw_solution=raw,
                extracted=extracted,
                grounded_sources=_grounded_sources(ctx, raw),
            )
        except ExtractionFailure as exc:
            artifacts["final"] = None
            artifacts["extraction_error"] = str(exc)
        return ModuleOutput(ModuleId.SG, raw, artifacts=artifacts)
