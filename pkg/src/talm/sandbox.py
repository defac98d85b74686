"""Supervised execution of generated programs in an isolated child process.

The supervisor writes the program to ``main.py`` in a private working
directory and delegates to a runner script speaking a one-JSON-object
protocol on stdout. Secrets are scrubbed from the child environment and the
runner is killed at the wall timeout plus a supervision grace.
"""

from __future__ import annotations

import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

TRUNCATION_MARKER = "[truncated]"
STATUSES = ("ok", "runtime_error", "timeout", "launch_failure")

# Child processes only see benign variables; anything resembling a credential
# (TALM_*, *_API_KEY, tokens) never crosses the boundary.
_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "PYTHONHASHSEED", "VIRTUAL_ENV")


@dataclass(frozen=True)
class ExecutionLimits:
    wall_timeout: float = 10.0
    max_output_bytes: int = 16384
    working_dir: Path | None = None

    def __post_init__(self):
        if self.wall_timeout <= 0:
            raise ValueError("wall_timeout must be positive")
        if self.max_output_bytes <= 0:
            raise ValueError("max_output_bytes must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    stdout: str
    stderr: str
    duration: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _truncate(text: str, cap: int) -> str:
    raw = text.encode("utf-8", errors="replace")
    if len(raw) <= cap:
        return text
    clipped = raw[:cap].decode("utf-8", errors="ignore")
    return clipped + "\n" + TRUNCATION_MARKER


def _scrubbed_env() -> dict[str, str]:
    env = {k: v for k, v in os.environ.items() if k in _ENV_ALLOWLIST}
    # Best-effort network cutoff for the common HTTP stacks.
    env["http_proxy"] = env["https_proxy"] = "http://127.0.0.1:9"
    env["no_proxy"] = ""
    return env


class Sandbox:
    """One supervisor instance may serve concurrent calls; every execution
    owns a private temp directory and child process."""

    def __init__(self, runner: str | Path, python: str | None = None, grace: float = 1.0):
        self.runner = Path(runner)
        self.python = python or sys.executable
        self.grace = grace

    def execute(self, code, limits: ExecutionLimits | None = None) -> ExecutionResult:
        limits = limits or ExecutionLimits()
        source = getattr(code, "source", code)
        created_dir = limits.working_dir is None
        workdir = Path(limits.working_dir) if limits.working_dir else Path(tempfile.mkdtemp(prefix="talm-sbx-"))
        workdir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()
        try:
            (workdir / "main.py").write_text(source, encoding="utf-8")
            cmd = [self.python, str(self.runner), "main.py", "--timeout", str(limits.wall_timeout)]
            try:
                proc = subprocess.Popen(
                    cmd,
                    cwd=workdir,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    env=_scrubbed_env(),
                    start_new_session=True,
                )
            except OSError as exc:
                return ExecutionResult("launch_failure", "", f"failed to launch runner: {exc}", 0.0)

            try:
                out, err = proc.communicate(timeout=limits.wall_timeout + self.grace)
            except subprocess.TimeoutExpired:
                # Runner missed its own deadline; kill the whole group.
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except (ProcessLookupError, PermissionError):
                    proc.kill()
                proc.wait()
                return ExecutionResult(
                    "timeout", "", "runner exceeded wall timeout", time.monotonic() - started
                )

            report = self._parse_report(out)
            if report is None:
                detail = err.decode("utf-8", errors="replace")
                return ExecutionResult(
                    "launch_failure",
                    "",
                    f"runner produced no JSON report: {detail[:500]}",
                    time.monotonic() - started,
                )
            status = report.get("status")
            if status not in STATUSES:
                status = "launch_failure"
            return ExecutionResult(
                status=status,
                stdout=_truncate(str(report.get("stdout", "")), limits.max_output_bytes),
                stderr=_truncate(str(report.get("stderr", "")), limits.max_output_bytes),
                duration=float(report.get("duration", time.monotonic() - started)),
            )
        finally:
            if created_dir:
                shutil.rmtree(workdir, ignore_errors=True)

    @staticmethod
    def _parse_report(raw: bytes) -> dict | None:
        text = raw.decode("utf-8", errors="replace").strip()
        if not text:
            return None
        try:
            report = json.loads(text)
        except json.JSONDecodeError:
            return None
        return report if isinstance(report, dict) else None
