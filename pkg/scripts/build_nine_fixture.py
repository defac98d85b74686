#!/usr/bin/env python3
"""Regenerate the replay cache for the worked NINE example.

Runs the four settings (SG, PG+SG, BS+SG, WA+SG) over the one-question
dataset in tests/fixtures/nine_math with scripted completions and canned
search/engine responses, recording everything into tests/fixtures/nine_cache.
Rerun after changing prompt assets; the replay acceptance test will miss
otherwise.
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from talm import prompts  # noqa: E402
from talm.cache import CacheStore  # noqa: E402
from talm.gateway import MockProvider  # noqa: E402
from talm.harness import ExperimentConfig, run_experiment  # noqa: E402
from talm.pipeline import ModuleId  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"
CACHE_DIR = FIXTURES / "nine_cache"
STUB_RUNNER = REPO / "tests" / "stub_runner.py"

NINE_QUESTION = "Determine the number of ways to arrange the letters of the word NINE."
ARRANGEMENTS = "{EINN, ENIN, ENNI, IENN, INEN, INNE, NEIN, NENI, NIEN, NINE, NNEI, NNIE}"

SG_BARE = (
    "There are 4 distinct letters in the word NINE. The number of ways to arrange 4 distinct "
    "letters is 4! = 24. Therefore, the answer is $\\boxed{24}$."
)
PG_CODE = (
    "```python\n"
    "from sympy import *\n"
    "word = 'NINE'\n"
    "numperm = factorial(len(word))\n"
    "print(numperm)\n"
    "```"
)
SG_AFTER_PG = (
    "The word NINE has 4 letters. From the Python output, the number of ways to arrange 4 "
    "distinct letters is 4! = 24. Therefore, the answer is $\\boxed{24}$."
)
BS_QUERY = (
    "Thought: The question asks for arrangements of letters with repeats, so let us search for "
    "the permutation formula with repeated letters.\n"
    "Query: How to count arrangements of the letters of a word with repeated letters?"
)
SG_AFTER_BS = (
    "From the web search results, a similar question arranges the letters of BANANA by dividing "
    "by the factorials of the repeated letter counts, using the formula nPr = n!/(n1! n2! ... nr!). "
    "The word NINE has 4 letters with N repeated twice. Therefore, the answer is "
    "4!/(2! 1! 1!) = $\\boxed{12}$."
)
WA_THOUGHT = (
    "Thought: We can call the Permutations function on the word NINE to find all possible "
    "arrangements of the letters. Do you know the command to do this?"
)
WA_QUERY = "Answer: Yes, the command is: Permutations[NINE]\nFinal Query: Permutations[NINE]"
WA_EXTRACTED = f"Yes, the answer is {ARRANGEMENTS}. There are 12 distinct arrangements."
SG_AFTER_WA = (
    "We call the Permutations function on the word NINE to find all possible arrangements of "
    f"the letters. The answer from WolframAlpha is {ARRANGEMENTS}, which contains 12 "
    "arrangements. Therefore, the answer is $\\boxed{12}$."
)

SEARCH_SIMILAR = {
    "webPages": {
        "value": [
            {
                "name": "Permutations of the word BANANA",
                "snippet": 'In the word "BANANA", there are 6 letters but only 3 distinct letters, '
                "so we divide 6! by the factorials of the counts of the repeated letters.",
                "url": "https://example.org/banana-permutations",
            },
            {
                "name": "Arrangements with repeated letters",
                "snippet": "Worked examples of counting distinct arrangements when some letters repeat.",
                "url": "https://example.org/arrangements",
            },
        ]
    }
}
SEARCH_CONCEPTS = {
    "webPages": {
        "value": [
            {
                "name": "Permutations with repetition formula",
                "snippet": "Formula: nPr = n!/(n1! n2! ... nr!) where each ni counts one repeated element.",
                "url": "https://example.org/npr-formula",
            }
        ]
    }
}
WA_DOCUMENT = {
    "queryresult": {
        "success": True,
        "pods": [
            {"title": "Input interpretation", "subpods": [{"plaintext": "permutations | NINE"}]},
            {"title": "Result", "subpods": [{"plaintext": ARRANGEMENTS}]},
        ],
    }
}


def make_responder():
    pg_instr = prompts.spec_for(ModuleId.PG).instruction
    bs_instr = prompts.spec_for(ModuleId.BS).instruction
    wa_thought_instr = prompts.wa_thought_spec().instruction
    wa_query_instr = prompts.wa_query_spec().instruction
    wa_extract_instr = prompts.wa_extract_instruction()
    sg_instr = prompts.sg_spec("boxed").instruction

    def respond(req):
        prompt = req.messages[-1][1]
        if prompt.startswith(pg_instr):
            return PG_CODE
        if prompt.startswith(bs_instr):
            return BS_QUERY
        if prompt.startswith(wa_thought_instr):
            return WA_THOUGHT
        if prompt.startswith(wa_query_instr):
            return WA_QUERY
        if prompt.startswith(wa_extract_instr):
            return WA_EXTRACTED
        if prompt.startswith(sg_instr):
            if "WolframAlpha response:" in prompt:
                return SG_AFTER_WA
            if "Web search results:" in prompt:
                return SG_AFTER_BS
            if "Python code and output:" in prompt:
                return SG_AFTER_PG
            return SG_BARE
        return None

    return respond


def main() -> int:
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    for stale in CACHE_DIR.glob("*.jsonl"):
        stale.unlink()

    # Canned tool responses, keyed exactly like the live clients key them.
    store = CacheStore(CACHE_DIR, "record")
    store.get_or_call("search", {"q": NINE_QUESTION, "count": 3}, lambda: SEARCH_SIMILAR)
    store.get_or_call(
        "search",
        {"q": "How to count arrangements of the letters of a word with repeated letters?", "count": 3},
        lambda: SEARCH_CONCEPTS,
    )
    store.get_or_call("wolfram", {"input": "Permutations[NINE]"}, lambda: WA_DOCUMENT)

    responder = make_responder()
    overall = {}
    with tempfile.TemporaryDirectory() as tmp:
        for setting in ("sg", "pg+sg", "bs+sg", "wa+sg"):
            cfg = ExperimentConfig(
                dataset="math",
                data_path=str(FIXTURES / "nine_math"),
                out_dir=f"{tmp}/{setting.replace('+', '_')}",
                setting=setting,
                cache_mode="record",
                cache_dir=str(CACHE_DIR),
                runner=str(STUB_RUNNER),
                concurrency=1,
            )
            artifacts = run_experiment(cfg, provider=MockProvider(responder=responder))
            overall[setting] = artifacts.report.overall

    expected = {"sg": 0.0, "pg+sg": 0.0, "bs+sg": 1.0, "wa+sg": 1.0}
    print("recorded accuracies:", overall)
    if overall != expected:
        print(f"FIXTURE MISMATCH: expected {expected}")
        return 1
    print(f"fixture written to {CACHE_DIR}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
