"""Protocol tests for the guard runner, driven standalone over its CLI."""

from __future__ import annotations

import json
import os
import re
import subprocess
import sys
import time
from pathlib import Path

import pytest

RUNNER = Path(__file__).parent / "runner.py"


def invoke(program: Path | str, timeout: float = 10.0) -> tuple[dict, subprocess.CompletedProcess]:
    proc = subprocess.run(
        [sys.executable, str(RUNNER), str(program), "--timeout", str(timeout)],
        capture_output=True,
        text=True,
        timeout=timeout + 15,
    )
    assert proc.returncode == 0, proc.stderr
    # Exactly one JSON object and nothing else on stdout.
    report = json.loads(proc.stdout)
    assert set(report) == {"status", "stdout", "stderr", "duration"}
    return report, proc


def write_program(tmp_path: Path, source: str) -> Path:
    path = tmp_path / "main.py"
    path.write_text(source)
    return path


def test_ok_program(tmp_path):
    report, _ = invoke(write_program(tmp_path, "print(1+1)\n"))
    assert report["status"] == "ok"
    assert report["stdout"] == "2\n"
    assert report["stderr"] == ""


def test_syntax_error_program(tmp_path):
    report, _ = invoke(write_program(tmp_path, "def broken(:\n"))
    assert report["status"] == "runtime_error"
    assert "SyntaxError" in report["stderr"]


def test_infinite_loop_times_out(tmp_path):
    start = time.monotonic()
    report, _ = invoke(write_program(tmp_path, "while True: pass\n"), timeout=1.0)
    assert report["status"] == "timeout"
    assert report["duration"] == pytest.approx(1.0, abs=0.8)
    assert time.monotonic() - start < 10


def test_missing_program_is_launch_failure(tmp_path):
    report, _ = invoke(tmp_path / "ghost.py")
    assert report["status"] == "launch_failure"
    assert "ghost.py" in report["stderr"]


def test_partial_output_preserved_on_timeout(tmp_path):
    program = "print('before the hang', flush=True)\nwhile True: pass\n"
    report, _ = invoke(write_program(tmp_path, program), timeout=1.0)
    assert report["status"] == "timeout"
    assert "before the hang" in report["stdout"]


def test_program_stdout_never_corrupts_report(tmp_path):
    # A program that itself prints JSON-ish garbage must not break the report.
    report, proc = invoke(write_program(tmp_path, 'print(\'{"status": "fake"\')\n'))
    assert report["status"] == "ok"
    assert proc.stdout.count('"duration"') == 1


def _pid_is_dead(pid: int, wait: float = 3.0) -> bool:
    """True once the pid is gone or reduced to a zombie awaiting reaping."""
    deadline = time.monotonic() + wait
    while time.monotonic() < deadline:
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        try:
            with open(f"/proc/{pid}/stat") as fh:
                if fh.read().split(")")[-1].split()[0] == "Z":
                    return True
        except OSError:
            return True
        time.sleep(0.05)
    return False


def test_timeout_kills_whole_process_tree(tmp_path):
    program = (
        "import subprocess, sys, time\n"
        "child = subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(60)'])\n"
        "print(child.pid, flush=True)\n"
        "time.sleep(60)\n"
    )
    report, _ = invoke(write_program(tmp_path, program), timeout=1.0)
    assert report["status"] == "timeout"
    match = re.search(r"\d+", report["stdout"])
    assert match, "spawned child pid was not captured"
    assert _pid_is_dead(int(match.group())), "grandchild survived the group kill"


def test_guard_run_importable(tmp_path):
    sys.path.insert(0, str(RUNNER.parent))
    try:
        from runner import guard_run

        report = guard_run(str(write_program(tmp_path, "print('hi')\n")), 5.0)
        assert report.status == "ok" and report.stdout == "hi\n"
    finally:
        sys.path.remove(str(RUNNER.parent))


def test_supervisor_integration(tmp_path):
    talm_sandbox = pytest.importorskip("talm.sandbox")
    sandbox = talm_sandbox.Sandbox(runner=RUNNER)
    result = sandbox.execute("print(6 * 7)\n", talm_sandbox.ExecutionLimits(wall_timeout=10))
    assert result.ok and "42" in result.stdout
