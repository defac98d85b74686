"""Loaders for the four evaluation datasets, all normalized to Question
records: per-problem JSON trees (boxed golds), grade-school word problems in
JSON lines ("#### n" golds), and two multiple-choice sets.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from . import answers
from .pipeline import Question

DATASET_KINDS = ("math", "gsm8k", "aqua", "mmlu_math")

MATH_SUBJECTS = (
    "Algebra",
    "Precalculus",
    "Prealgebra",
    "Geometry",
    "Counting and Probability",
    "Number Theory",
    "Intermediate Algebra",
)

_LEVEL = re.compile(r"Level\s+(\d)")
_GSM_GOLD = re.compile(r"####\s*(-?[\d,\.]+)\s*$")


class SchemaError(Exception):
    def __init__(self, record_id: str, reason: str):
        super().__init__(f"{record_id}: {reason}")
        self.record_id = record_id
        self.reason = reason


class CountMismatch(Exception):
    pass


@dataclass(frozen=True)
class DatasetDescriptor:
    kind: str
    path: Path
    split: str = "test"
    expected_count: int | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")


def _math_root(d: DatasetDescriptor) -> Path:
    split_dir = d.path / d.split
    return split_dir if split_dir.is_dir() else d.path


def _load_math(d: DatasetDescriptor) -> list[Question]:
    root = _math_root(d)
    questions = []
    for path in sorted(root.rglob("*.json")):
        qid = path.relative_to(root).with_suffix("").as_posix()
        record = json.loads(path.read_text(encoding="utf-8"))
        if "problem" not in record:
            raise SchemaError(qid, "missing problem field")
        subject = record.get("type", "")
        if subject not in MATH_SUBJECTS:
            raise SchemaError(qid, f"unknown subject {subject!r}")
        m = _LEVEL.search(record.get("level", ""))
        level = int(m.group(1)) if m else None  # "Level ?" records carry no level
        if level is not None and not 1 <= level <= 5:
            raise SchemaError(qid, f"level {level} outside [1, 5]")
        gold = answers.last_boxed(record.get("solution", ""))
        if gold is None:
            raise SchemaError(qid, "solution has no boxed answer")
        questions.append(
            Question(
                id=qid,
                text=record["problem"],
                gold=gold,
                answer_format="boxed",
                subject=subject,
                level=level,
            )
        )
    return questions


def _jsonl_records(path: Path) -> list[dict]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        return json.loads(text)
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _resolve_file(d: DatasetDescriptor, suffixes: tuple[str, ...]) -> Path:
    if d.path.is_file():
        return d.path
    for suffix in suffixes:
        candidate = d.path / f"{d.split}{suffix}"
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"no {d.kind} file under {d.path} for split {d.split!r}")


def _load_gsm8k(d: DatasetDescriptor) -> list[Question]:
    path = _resolve_file(d, (".jsonl", ".json"))
    questions = []
    for i, record in enumerate(_jsonl_records(path)):
        qid = str(record.get("id", f"gsm8k/{i:04d}"))
        if "question" not in record:
            raise SchemaError(qid, "missing question field")
        answer = record.get("answer", "")
        m = _GSM_GOLD.search(answer.strip())
        if not m:
            raise SchemaError(qid, 'gold answer lacks a "#### <n>" suffix')
        gold = m.group(1).replace(",", "").rstrip(".")
        questions.append(Question(id=qid, text=record["question"], gold=gold, answer_format="integer"))
    return questions


def _load_mcq(d: DatasetDescriptor, require_five: bool) -> list[Question]:
    path = _resolve_file(d, (".json", ".jsonl"))
    questions = []
    for i, record in enumerate(_jsonl_records(path)):
        qid = str(record.get("id", f"{d.kind}/{i:04d}"))
        if "question" not in record:
            raise SchemaError(qid, "missing question field")
        options = record.get("options") or []
        if require_five and len(options) != 5:
            raise SchemaError(qid, f"expected five options, got {len(options)}")
        if not 2 <= len(options) <= 5:
            raise SchemaError(qid, f"expected 2-5 options, got {len(options)}")
        correct = str(record.get("correct", "")).strip().upper()
        if correct not in "ABCDE"[: len(options)] or not correct:
            raise SchemaError(qid, f"correct option {correct!r} out of range")
        questions.append(
            Question(
                id=qid,
                text=record["question"],
                gold=correct,
                answer_format="multiple_choice",
                subject=record.get("subject"),
                options=tuple(options),
            )
        )
    return questions


def load_dataset(d: DatasetDescriptor) -> list[Question]:
    """Deterministic, order-preserving load; raises SchemaError on malformed
    records and CountMismatch when expected_count is set and differs."""
    if d.kind == "math":
        questions = _load_math(d)
    elif d.kind == "gsm8k":
        questions = _load_gsm8k(d)
    elif d.kind == "aqua":
        questions = _load_mcq(d, require_five=True)
    else:
        questions = _load_mcq(d, require_five=False)
    if d.expected_count is not None and len(questions) != d.expected_count:
        raise CountMismatch(f"expected {d.expected_count} records, loaded {len(questions)}")
    return questions


def sample_questions(questions: list[Question], n: int | None, seed: int = 0) -> list[Question]:
    """Seeded uniform sample without replacement; n of None or >= len keeps all."""
    if n is None or n >= len(questions):
        return list(questions)
    return random.Random(seed).sample(questions, n)


def subject_level_histogram(questions: list[Question]) -> tuple[Counter, Counter]:
    subjects = Counter(q.subject for q in questions if q.subject)
    levels = Counter(q.level for q in questions if q.level is not None)
    return subjects, levels
