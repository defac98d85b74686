"""Final-answer extraction, normalization, equivalence grading, and accuracy reports.

Grading is deliberately CAS-free: numeric answers are compared as exact
rationals with a small absolute tolerance fallback, everything else as
normalized strings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:  # pragma: no cover
    from .pipeline import Question, RunRecord

# Error labels attached to run records and counted in reports.
PG_EXEC_ERR = "pg_exec_err"
PG_REASONING_ERR = "pg_reasoning_err"
SG_ERR = "sg_err"
UNANSWERED = "unanswered"
NON_CONVERGENT = "non_convergent"
ERROR_LABELS = (PG_EXEC_ERR, PG_REASONING_ERR, SG_ERR, UNANSWERED, NON_CONVERGENT)

NUMERIC_TOLERANCE = Fraction(1, 10**6)


class ExtractionFailure(Exception):
    """No recognizable answer pattern in the solution text."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class CanonicalAnswer:
    kind: str  # numeric | expression | mcq_letter | text
    value: str
    numeric_value: Fraction | None = None

    def __post_init__(self):
        if self.kind == "numeric" and self.numeric_value is None:
            raise ValueError("numeric answers need a numeric_value")
        if self.kind == "mcq_letter" and self.value not in "ABCDE":
            raise ValueError(f"invalid option letter {self.value!r}")


_BOXED = re.compile(r"\\boxed")
_ANSWER_IS_NUM = re.compile(r"answer\s+is[:\s]*\$?(-?[\d][\d,]*(?:\.\d+)?)", re.IGNORECASE)
_MCQ_LETTER = re.compile(r"(?<![A-Za-z0-9])\(?([A-E])\)?(?=[\s.,:;)]|$)")
_VAR_BINDING = re.compile(r"^[A-Za-z][A-Za-z0-9_]*\s*=\s*(?=\S)")
_THOUSANDS = re.compile(r"(?<=\d),(?=\d{3}(?:\D|$))")
_DEGREE = re.compile(r"(\^\s*\{?\\circ\}?|\\circ|°|\s*degrees?\b)")
_FRAC = re.compile(r"^(-?)\\frac\{(-?[\d.]+)\}\{(-?[\d.]+)\}$")
_SQRT = re.compile(r"^(-?[\d.]*)\\sqrt\{?(\d+)\}?$")
_WS = re.compile(r"\s+")


def _boxed_content(text: str, start: int) -> str | None:
    """Brace-matched argument of a ``\\boxed`` occurrence, or None if malformed."""
    i = start + len("\\boxed")
    while i < len(text) and text[i].isspace():
        i += 1
    if i >= len(text) or text[i] != "{":
        return None
    depth, i = 1, i + 1
    out = []
    while i < len(text):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return "".join(out)
        out.append(ch)
        i += 1
    return None


def last_boxed(text: str) -> str | None:
    for match in reversed(list(_BOXED.finditer(text))):
        content = _boxed_content(text, match.start())
        if content is not None:
            return content.strip()
    return None


def _parse_plain_number(s: str) -> Fraction | None:
    s = s.replace(" ", "")
    if not s or not re.fullmatch(r"-?(\d+(\.\d+)?([eE][+-]?\d+)?|\d+/\d+|\.\d+)", s):
        return None
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None


def _parse_numeric(s: str) -> Fraction | None:
    """Exact rational value of ints, decimals, a/b ratios, LaTeX fractions,
    and simple radicals; None when the string is not a plain numeric form.

    Irrational radicals enter as the exact rational of their float value;
    the 1e-6 comparison tolerance absorbs the representation gap.
    """
    s = _WS.sub("", s)
    m = _FRAC.match(s)
    if m:
        sign, num, den = m.groups()
        p, q = _parse_plain_number(num), _parse_plain_number(den)
        if p is None or q is None or q == 0:
            return None
        val = p / q
        return -val if sign == "-" else val
    m = _SQRT.match(s)
    if m:
        coef_s, radicand_s = m.groups()
        coef = Fraction(1) if coef_s in ("", "-") else _parse_plain_number(coef_s)
        if coef is None:
            return None
        if coef_s == "-":
            coef = -coef
        radicand = int(radicand_s)
        root = int(radicand**0.5)
        if root * root == radicand:
            return coef * root
        return coef * Fraction(float(radicand) ** 0.5)
    return _parse_plain_number(s)


def normalize(raw: str) -> CanonicalAnswer:
    """Total function mapping a raw answer string to its canonical form."""
    s = (raw or "").strip()
    s = s.strip("$").strip()
    s = _DEGREE.sub("", s)
    s = s.rstrip(".").strip()
    s = _VAR_BINDING.sub("", s)
    s = _THOUSANDS.sub("", s)
    s = s.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac")
    s = s.replace("\\left", "").replace("\\right", "")
    s = re.sub(r"\\[,!;:]", "", s)
    s = s.strip()
    if not s:
        return CanonicalAnswer(kind="text", value="")
    m = re.fullmatch(r"\(?([A-E])\)?\.?", s)
    if m:
        return CanonicalAnswer(kind="mcq_letter", value=m.group(1))
    num = _parse_numeric(s)
    if num is not None:
        return CanonicalAnswer(kind="numeric", value=str(num), numeric_value=num)
    expr = _WS.sub("", s).replace("\\pi", "pi")
    return CanonicalAnswer(kind="expression", value=expr)


def extract_final(text: str, answer_format: str) -> CanonicalAnswer:
    """Pull the final answer out of a solution text.

    boxed: content of the last well-formed ``\\boxed{}``; integer: the number
    after the last "answer is"; multiple_choice: the last standalone option
    letter (accepts ``(B)``, ``B)``, ``B.`` forms).
    """
    if answer_format == "boxed":
        content = last_boxed(text)
        if content is None:
            raise ExtractionFailure("no \\boxed{} answer found", raw=text)
        return normalize(content)
    if answer_format == "integer":
        matches = _ANSWER_IS_NUM.findall(text)
        if not matches:
            raise ExtractionFailure('no "answer is <n>" pattern found', raw=text)
        return normalize(matches[-1])
    if answer_format == "multiple_choice":
        matches = _MCQ_LETTER.findall(text)
        if not matches:
            raise ExtractionFailure("no option letter found", raw=text)
        return CanonicalAnswer(kind="mcq_letter", value=matches[-1])
    raise ValueError(f"unknown answer format {answer_format!r}")


def equivalent(a: CanonicalAnswer, b: CanonicalAnswer) -> bool:
    """Answer equality for grading: exact rational equality with a 1e-6
    absolute-tolerance fallback for numerics, normalized string equality
    otherwise. Symmetric and reflexive by construction."""
    if a.kind == "numeric" and b.kind == "numeric":
        assert a.numeric_value is not None and b.numeric_value is not None
        return a.numeric_value == b.numeric_value or abs(a.numeric_value - b.numeric_value) <= NUMERIC_TOLERANCE
    if a.kind == "mcq_letter" or b.kind == "mcq_letter":
        return a.kind == b.kind and a.value == b.value
    if a.kind == "numeric" or b.kind == "numeric":
        # Mixed numeric/expression: retry a numeric parse of the expression
        # side, then fall back to comparing the canonical strings.
        numeric, other = (a, b) if a.kind == "numeric" else (b, a)
        reparsed = _parse_numeric(other.value)
        if reparsed is not None:
            assert numeric.numeric_value is not None
            return (
                numeric.numeric_value == reparsed
                or abs(numeric.numeric_value - reparsed) <= NUMERIC_TOLERANCE
            )
        return numeric.value == other.value
    return a.value == b.value


def canonical_from(kind: str, value: str) -> CanonicalAnswer:
    """Rebuild a canonical answer from its serialized (kind, value) pair."""
    if kind == "numeric":
        return CanonicalAnswer(kind=kind, value=value, numeric_value=Fraction(value))
    return CanonicalAnswer(kind=kind, value=value)


class UnknownQuestionId(Exception):
    pass


@dataclass
class AccuracyReport:
    correct: int = 0
    total: int = 0
    by_subject: dict[str, float] = field(default_factory=dict)
    by_level: dict[int, float] = field(default_factory=dict)
    counts_by_subject: dict[str, tuple[int, int]] = field(default_factory=dict)
    counts_by_level: dict[int, tuple[int, int]] = field(default_factory=dict)
    error_breakdown: dict[str, int] = field(default_factory=dict)

    @property
    def overall(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def empty(self) -> bool:
        return self.total == 0


def _last_number(text: str) -> str | None:
    matches = re.findall(r"-?\d[\d,]*(?:\.\d+)?", text)
    return matches[-1] if matches else None


def _infer_error_label(record: "RunRecord", gold: CanonicalAnswer) -> str | None:
    """Post-hoc taxonomy for incorrect records with a program trace: decide
    whether the executed code was already wrong or the solution step spoiled
    a correct program result."""
    for entry in record.trace:
        if entry.module != "PG" or not entry.artifacts:
            continue
        stdout = entry.artifacts.get("stdout")
        if not stdout:
            continue
        last = _last_number(stdout)
        if last is None:
            return PG_REASONING_ERR
        return SG_ERR if equivalent(normalize(last), gold) else PG_REASONING_ERR
    return None


def score_run(records: Iterable["RunRecord"], gold: Iterable["Question"] | Mapping[str, "Question"]) -> AccuracyReport:
    """Grade records against gold questions and aggregate per-subject and
    per-level accuracy. Unanswered and non-convergent records grade incorrect."""
    if isinstance(gold, Mapping):
        by_id = dict(gold)
    else:
        by_id = {q.id: q for q in gold}

    report = AccuracyReport()
    subj_counts: dict[str, list[int]] = {}
    level_counts: dict[int, list[int]] = {}

    for record in records:
        question = by_id.get(record.question_id)
        if question is None:
            raise UnknownQuestionId(record.question_id)
        gold_answer = normalize(question.gold)
        correct = record.final is not None and equivalent(record.final.extracted, gold_answer)
        if record.error_label in (UNANSWERED, NON_CONVERGENT):
            correct = False

        report.total += 1
        report.correct += int(correct)
        if question.subject:
            cell = subj_counts.setdefault(question.subject, [0, 0])
            cell[0] += int(correct)
            cell[1] += 1
        if question.level is not None:
            cell = level_counts.setdefault(question.level, [0, 0])
            cell[0] += int(correct)
            cell[1] += 1
        if not correct:
            label = record.error_label or _infer_error_label(record, gold_answer)
            if label:
                report.error_breakdown[label] = report.error_breakdown.get(label, 0) + 1

    for subject, (c, t) in sorted(subj_counts.items()):
        report.counts_by_subject[subject] = (c, t)
        report.by_subject[subject] = c / t
    for level, (c, t) in sorted(level_counts.items()):
        report.counts_by_level[level] = (c, t)
        report.by_level[level] = c / t
    return report
