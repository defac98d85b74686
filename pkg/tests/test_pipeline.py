from __future__ import annotations

import itertools

import pytest
from hypothesis import given, strategies as st

from helpers import StubModule, make_question, scripted_gateway, stub_sg
from talm import prompts
from talm.modules import ProgramModule, SolutionModule
from talm.pipeline import (
    Context,
    DuplicateModule,
    ModuleId,
    ModuleOutput,
    ModuleSpec,
    OrphanCr,
    Question,
    SequenceError,
    SgNotTerminal,
    ToolApiError,
    UnregisteredModule,
    assemble_prompt,
    extend_context,
    render_context,
    run_pipeline,
    validate_sequence,
)
from talm.sandbox import ExecutionLimits, Sandbox

KR, BS, WA, PG, CR, SG = ModuleId


class TestQuestion:
    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            Question(id="x", text="", gold="1")

    def test_level_bounds(self):
        with pytest.raises(ValueError):
            make_question(level=6)
        assert make_question(level=5).level == 5

    def test_options_iff_multiple_choice(self):
        with pytest.raises(ValueError):
            make_question(options=("A) 1", "B) 2"))
        with pytest.raises(ValueError):
            make_question(answer_format="multiple_choice", gold="A")
        q = make_question(answer_format="multiple_choice", gold="A", options=("A) 1", "B) 2"))
        assert q.options is not None


class TestCoreTypes:
    def test_context_never_empty(self):
        with pytest.raises(ValueError):
            Context(entries=())

    def test_context_entry_zero_is_question(self):
        from talm.pipeline import ContextEntry

        with pytest.raises(ValueError):
            Context(entries=(ContextEntry("WA", "tool output first"),))

    def test_module_spec_requires_instruction(self):
        with pytest.raises(ValueError):
            ModuleSpec(id=SG, instruction="")

    def test_canonical_answer_invariants(self):
        from talm.answers import CanonicalAnswer

        with pytest.raises(ValueError):
            CanonicalAnswer(kind="numeric", value="1")  # missing numeric_value
        with pytest.raises(ValueError):
            CanonicalAnswer(kind="mcq_letter", value="F")


class TestAssemblePrompt:
    def test_empty_few_shot_collapses(self):
        q = make_question(text="What is 2+2?")
        ctx = Context.for_question(q)
        spec = ModuleSpec(id=SG, instruction="Solve step by step")
        assert assemble_prompt(spec, ctx) == f"Solve step by step\n---\n{render_context(ctx)}"

    def test_sections_ordered_instruction_examples_question(self):
        spec = prompts.spec_for(KR)
        q = make_question(
            text="The point $P=(1,2,3)$ is reflected in the $xy$-plane. What are the coordinates of the image?"
        )
        prompt = assemble_prompt(spec, Context.for_question(q))
        i_instruction = prompt.index(spec.instruction[:40])
        i_example = prompt.index(spec.few_shot[0][:40])
        i_question = prompt.index(q.text[:40])
        assert i_instruction < i_example < i_question

    def test_deterministic(self):
        spec = prompts.spec_for(BS)
        ctx = Context.for_question(make_question())
        assert assemble_prompt(spec, ctx) == assemble_prompt(spec, ctx)

    def test_pure_does_not_mutate_inputs(self):
        ctx = Context.for_question(make_question())
        before = ctx.entries
        assemble_prompt(ModuleSpec(id=SG, instruction="i"), ctx)
        assert ctx.entries == before


class TestExtendContext:
    def test_base_step(self):
        ctx = Context.for_question(make_question())
        out = ModuleOutput(WA, "twelve arrangements")
        ctx2 = extend_context(ctx, out)
        assert [e.label for e in ctx2.entries] == ["question", "WA"]
        assert ctx.entries == ctx2.entries[:1]

    def test_inductive_step(self):
        ctx = Context.for_question(make_question())
        ctx = extend_context(ctx, ModuleOutput(PG, "code"))
        ctx = extend_context(ctx, ModuleOutput(WA, "pods"))
        assert [e.label for e in ctx.entries] == ["question", "PG", "WA"]

    def test_omitted_output_leaves_context_unchanged(self):
        ctx = Context.for_question(make_question())
        out = ModuleOutput(PG, "failing stdout", omitted_from_context=True)
        assert extend_context(ctx, out) is ctx

    def test_append_only(self):
        ctx = Context.for_question(make_question())
        ctx2 = extend_context(ctx, ModuleOutput(BS, "snippets"))
        assert ctx2.entries[: len(ctx.entries)] == ctx.entries


# Every reported modular setting, one row per table entry (PG appears twice
# because one row swaps its backbone model, not its position).
REPORTED_SETTINGS = [
    [SG],
    [KR, SG],
    [BS, SG],
    [PG, SG],
    [PG, CR, SG],
    [PG, SG],
    [WA, SG],
    [PG, BS, SG],
    [BS, PG, SG],
    [WA, PG, SG],
    [PG, WA, SG],
    [BS, WA, SG],
    [WA, BS, SG],
    [BS, PG, WA, SG],
]


class TestValidateSequence:
    @pytest.mark.parametrize("seq", REPORTED_SETTINGS)
    def test_accepts_all_reported_settings(self, seq):
        assert validate_sequence(seq).sequence == tuple(seq)

    def test_accepts_names(self):
        assert validate_sequence(["pg", "wa", "SG"]).sequence == (PG, WA, SG)

    def test_sg_not_terminal(self):
        with pytest.raises(SgNotTerminal):
            validate_sequence([SG, PG])
        with pytest.raises(SgNotTerminal):
            validate_sequence([PG, SG, WA])

    def test_orphan_cr(self):
        with pytest.raises(OrphanCr):
            validate_sequence([CR, SG])
        with pytest.raises(OrphanCr):
            validate_sequence([WA, CR, SG])

    def test_duplicates_rejected(self):
        with pytest.raises(DuplicateModule):
            validate_sequence([PG, PG, SG])

    def test_empty_rejected(self):
        with pytest.raises(SequenceError):
            validate_sequence([])

    @pytest.mark.parametrize("seq", [s for s in REPORTED_SETTINGS if len(s) > 1])
    def test_rejects_every_nonterminal_sg_permutation(self, seq):
        for perm in set(itertools.permutations(seq)):
            if perm[-1] is not SG:
                with pytest.raises(SequenceError):
                    validate_sequence(list(perm))


def _registry_of_stubs(texts: dict[ModuleId, str], omitted: set[ModuleId] = frozenset()):
    registry = {}
    for mid, text in texts.items():
        registry[mid] = StubModule(mid, text=text, omitted=mid in omitted)
    registry[SG] = stub_sg()
    return registry


class TestRunPipeline:
    def test_trace_matches_pipeline_and_sg_is_last(self):
        registry = _registry_of_stubs({WA: "wa out", PG: "pg out"})
        pipeline = validate_sequence([WA, PG, SG])
        record = run_pipeline(pipeline, make_question(), registry)
        assert [e.module for e in record.trace] == ["WA", "PG", "SG"]
        assert record.final is not None and record.final.extracted.numeric_value == 12

    def test_context_threads_non_omitted_outputs(self):
        registry = _registry_of_stubs({WA: "wa out", PG: "pg out"}, omitted={PG})
        pipeline = validate_sequence([WA, PG, SG])
        run_pipeline(pipeline, make_question(), registry)
        sg_ctx = registry[SG].seen_contexts[0]
        assert [e.label for e in sg_ctx.entries] == ["question", "WA"]

    def test_tool_failure_is_recorded_and_omitted(self):
        registry = _registry_of_stubs({})
        registry[WA] = StubModule(WA, error=ToolApiError("engine down"))
        record = run_pipeline(validate_sequence([WA, SG]), make_question(), registry)
        wa_entry = record.trace[0]
        assert wa_entry.omitted and "engine down" in wa_entry.error
        assert [e.label for e in registry[SG].seen_contexts[0].entries] == ["question"]
        assert record.final is not None  # the run still answers

    def test_unregistered_module(self):
        with pytest.raises(UnregisteredModule):
            run_pipeline(validate_sequence([WA, SG]), make_question(), {SG: stub_sg()})

    def test_failing_program_never_reaches_sg_prompt(self, stub_runner):
        # A real PG whose generated code crashes, followed by a real SG.
        gateway = scripted_gateway(
            "```python\nprint(x)\n```",
            "Therefore, the answer is $\\boxed{5}$.",
        )
        sandbox = Sandbox(runner=stub_runner)
        registry = {
            PG: ProgramModule(gateway, sandbox, limits=ExecutionLimits(wall_timeout=10)),
            SG: SolutionModule(gateway),
        }
        record = run_pipeline(validate_sequence([PG, SG]), make_question(), registry)
        assert record.trace[0].omitted
        assert "name 'x' is not defined" in record.trace[0].artifacts["exec_error"]
        sg_prompt = record.trace[1].prompts[0]
        assert "print(x)" not in sg_prompt
        assert record.error_label == "pg_exec_err"


module_pool = st.sampled_from([KR, BS, WA, PG])


@given(
    mids=st.lists(module_pool, min_size=1, max_size=4, unique=True),
    omitted_mask=st.lists(st.booleans(), min_size=4, max_size=4),
)
def test_context_equals_question_plus_non_omitted_prefix(mids, omitted_mask):
    seq = mids + [SG]
    omitted = {m for m, flag in zip(mids, omitted_mask) if flag}
    registry = {m: StubModule(m, text=f"{m.name}-output", omitted=m in omitted) for m in mids}
    registry[SG] = stub_sg()
    run_pipeline(validate_sequence(seq), make_question(), registry)
    for i, mid in enumerate(seq):
        module = registry[mid]
        seen = module.seen_contexts[0]
        expected = ["question"] + [m.name for m in seq[:i] if m not in omitted]
        assert [e.label for e in seen.entries] == expected
