"""Shared builders for stub modules, questions, and records."""

from __future__ import annotations

from talm import answers
from talm.gateway import Gateway, MockProvider
from talm.modules import FinalAnswer
from talm.pipeline import ModuleId, ModuleOutput, Question, RunRecord, TraceEntry


def make_question(
    text: str = "Determine the number of ways to arrange the letters of the word NINE.",
    gold: str = "12",
    answer_format: str = "boxed",
    qid: str = "q0",
    **kwargs,
) -> Question:
    return Question(id=qid, text=text, gold=gold, answer_format=answer_format, **kwargs)


def scripted_gateway(*replies: str, responder=None, by_key=None, default=None) -> Gateway:
    return Gateway(MockProvider(script=list(replies), responder=responder, by_key=by_key, default=default))


class StubModule:
    """Canned pipeline module; ``fn`` overrides the canned output, ``error``
    raises instead."""

    def __init__(self, module_id: ModuleId, text: str = "", omitted: bool = False, artifacts=None, error=None, fn=None):
        self.module_id = module_id
        self.text = text
        self.omitted = omitted
        self.artifacts = artifacts
        self.error = error
        self.fn = fn
        self.seen_contexts = []

    def run(self, ctx, question, prev):
        self.seen_contexts.append(ctx)
        if self.error is not None:
            raise self.error
        if self.fn is not None:
            return self.fn(ctx, question, prev)
        return ModuleOutput(self.module_id, self.text, artifacts=self.artifacts, omitted_from_context=self.omitted)


def stub_sg(answer_text: str = "Therefore, the answer is $\\boxed{12}$.", answer_format: str = "boxed") -> StubModule:
    def fn(ctx, question, prev):
        final = FinalAnswer(
            raw_solution=answer_text,
            extracted=answers.extract_final(answer_text, answer_format),
        )
        return ModuleOutput(ModuleId.SG, answer_text, artifacts={"final": final})

    return StubModule(ModuleId.SG, fn=fn)


def make_record(
    qid: str,
    value: str | None,
    setting: str = "SG",
    error_label: str | None = None,
    trace: tuple[TraceEntry, ...] = (),
) -> RunRecord:
    final = None
    if value is not None:
        raw = f"Therefore, the answer is $\\boxed{{{value}}}$."
        final = FinalAnswer(raw_solution=raw, extracted=answers.normalize(value))
    return RunRecord(question_id=qid, setting=setting, trace=trace, final=final, error_label=error_label)
