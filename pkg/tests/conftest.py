from __future__ import annotations

from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES_DIR = TESTS_DIR / "fixtures"


@pytest.fixture
def stub_runner() -> Path:
    return TESTS_DIR / "stub_runner.py"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR
