"""Minimal protocol-compliant runner used by the primary test suite.

Speaks the supervisor's contract (one JSON report on stdout) without the
production runner's process-group handling.
"""

import argparse
import json
import os
import subprocess
import sys
import time


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("program")
    parser.add_argument("--timeout", type=float, default=10.0)
    args = parser.parse_args()

    start = time.monotonic()
    if not os.path.isfile(args.program):
        report = {"status": "launch_failure", "stdout": "", "stderr": f"no such program: {args.program}", "duration": 0.0}
    else:
        try:
            proc = subprocess.run(
                [sys.executable, args.program], capture_output=True, text=True, timeout=args.timeout
            )
            report = {
                "status": "ok" if proc.returncode == 0 else "runtime_error",
                "stdout": proc.stdout,
                "stderr": proc.stderr,
                "duration": time.monotonic() - start,
            }
        except subprocess.TimeoutExpired as exc:
            report = {
                "status": "timeout",
                "stdout": exc.stdout or "",
                "stderr": exc.stderr or "",
                "duration": time.monotonic() - start,
            }
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
