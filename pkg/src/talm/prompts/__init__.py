"""Versioned prompt assets: one file per (module, dataset) pair.

Each ``.txt`` asset holds an instruction block, then zero or more few-shot
exemplars, separated by lines of five-or-more ``=`` characters.
"""

from __future__ import annotations

import re
from importlib.resources import files

from ..pipeline import ModuleId, ModuleSpec

_SEPARATOR = re.compile(r"^={5,}\s*$", re.MULTILINE)

_ASSET_PREFIX = {
    ModuleId.KR: "kr",
    ModuleId.BS: "bs_query",
    ModuleId.PG: "pg",
}

_SG_BY_FORMAT = {
    "boxed": "sg_math",
    "integer": "sg_gsm8k",
    "multiple_choice": "sg_mcq",
}


def load_sections(asset_name: str) -> tuple[str, tuple[str, ...]]:
    text = files(__package__).joinpath(f"{asset_name}.txt").read_text(encoding="utf-8")
    blocks = [b.strip() for b in _SEPARATOR.split(text)]
    blocks = [b for b in blocks if b]
    if not blocks:
        raise ValueError(f"prompt asset {asset_name} is empty")
    return blocks[0], tuple(blocks[1:])


def _resolve(prefix: str, dataset: str) -> str:
    candidate = f"{prefix}_{dataset}"
    if files(__package__).joinpath(f"{candidate}.txt").is_file():
        return candidate
    return f"{prefix}_math"


def spec_for(module: ModuleId, dataset: str = "math") -> ModuleSpec:
    """Instruction + exemplars for KR, BS (query generator), or PG."""
    prefix = _ASSET_PREFIX[module]
    instruction, few_shot = load_sections(_resolve(prefix, dataset))
    return ModuleSpec(id=module, instruction=instruction, few_shot=few_shot)


def sg_spec(answer_format: str) -> ModuleSpec:
    instruction, few_shot = load_sections(_SG_BY_FORMAT[answer_format])
    return ModuleSpec(id=ModuleId.SG, instruction=instruction, few_shot=few_shot)


def wa_thought_spec(dataset: str = "math") -> ModuleSpec:
    instruction, few_shot = load_sections(_resolve("wa_thought", dataset))
    return ModuleSpec(id=ModuleId.WA, instruction=instruction, few_shot=few_shot)


def wa_query_spec(dataset: str = "math") -> ModuleSpec:
    instruction, few_shot = load_sections(_resolve("wa_query", dataset))
    return ModuleSpec(id=ModuleId.WA, instruction=instruction, few_shot=few_shot)


def wa_extract_instruction() -> str:
    instruction, _ = load_sections("wa_extract")
    return instruction


def cr_system_prompt() -> str:
    instruction, _ = load_sections("cr_system")
    return instruction


def pas_spec() -> ModuleSpec:
    instruction, few_shot = load_sections("pas_planner")
    return ModuleSpec(id=ModuleId.SG, instruction=instruction, few_shot=few_shot)


def react_instruction() -> str:
    instruction, _ = load_sections("react_math")
    return instruction
