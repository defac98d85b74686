#!/usr/bin/env python3
"""In-sandbox guard script: run a target program with a hard wall timeout and
emit exactly one JSON report on stdout.

Usage: runner.py <program> --timeout <seconds>

The target runs in its own session, so a timeout kills the whole process tree
(generated code may spawn subprocesses). The report always reaches stdout,
even on internal failure, and the exit code is 0 whenever a report was
emitted. Report fields: status (ok | runtime_error | timeout | launch_failure),
stdout, stderr, duration.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import subprocess
import sys
import time
from dataclasses import asdict, dataclass


@dataclass
class RunnerReport:
    status: str
    stdout: str
    stderr: str
    duration: float

    def as_json(self) -> str:
        return json.dumps(asdict(self))


def _kill_tree(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        try:
            proc.kill()
        except ProcessLookupError:
            pass


def guard_run(program_path: str, timeout_seconds: float) -> RunnerReport:
    start = time.monotonic()
    if not os.path.isfile(program_path):
        return RunnerReport("launch_failure", "", f"no such program: {program_path}", 0.0)
    try:
        proc = subprocess.Popen(
            [sys.executable, program_path],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            start_new_session=True,  # own process group, so the whole tree dies together
        )
    except OSError as exc:
        return RunnerReport("launch_failure", "", f"failed to launch: {exc}", time.monotonic() - start)

    try:
        out, err = proc.communicate(timeout=timeout_seconds)
        status = "ok" if proc.returncode == 0 else "runtime_error"
    except subprocess.TimeoutExpired:
        _kill_tree(proc)
        out, err = proc.communicate()
        status = "timeout"
    return RunnerReport(
        status=status,
        stdout=(out or b"").decode("utf-8", errors="replace"),
        stderr=(err or b"").decode("utf-8", errors="replace"),
        duration=time.monotonic() - start,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("program")
    parser.add_argument("--timeout", type=float, default=10.0)
    try:
        args = parser.parse_args(argv)
        report = guard_run(args.program, args.timeout)
    except SystemExit:
        raise
    except BaseException as exc:  # the report must reach stdout no matter what
        report = RunnerReport("launch_failure", "", f"runner internal error: {exc!r}", 0.0)
    sys.stdout.write(report.as_json() + "\n")
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
