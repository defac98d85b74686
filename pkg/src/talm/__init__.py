"""Tool-augmented LLM pipeline and evaluation harness for mathematical reasoning."""

from .answers import AccuracyReport, CanonicalAnswer, equivalent, extract_final, normalize, score_run
from .pipeline import (
    Context,
    ModuleId,
    ModuleOutput,
    ModuleSpec,
    Question,
    RunRecord,
    ValidatedPipeline,
    assemble_prompt,
    extend_context,
    run_pipeline,
    validate_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "CanonicalAnswer",
    "Context",
    "ModuleId",
    "ModuleOutput",
    "ModuleSpec",
    "Question",
    "RunRecord",
    "ValidatedPipeline",
    "assemble_prompt",
    "equivalent",
    "extend_context",
    "extract_final",
    "normalize",
    "run_pipeline",
    "score_run",
    "validate_sequence",
    "__version__",
]
