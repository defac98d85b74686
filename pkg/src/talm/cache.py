"""Content-addressed record/replay store for every external call.

One append-only JSON-lines file per service (llm, search, wolfram), each line
length-prefixed so a crash mid-write leaves a detectable, discardable tail.
Keys are digests of the canonicalized request, stable across platforms.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Any, Callable

MODES = ("record", "replay", "live")


class ReplayMiss(Exception):
    pass


class StoreCorrupt(Exception):
    pass


def _canonical(value: Any) -> Any:
    """Copy of ``value`` with whitespace runs in strings collapsed, for keying
    only; stored bodies stay verbatim."""
    if isinstance(value, str):
        return " ".join(value.split())
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def request_key(service: str, request: Any) -> str:
    payload = json.dumps({"service": service, "request": _canonical(request)}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class CacheStore:
    """Thread-safe store; concurrent readers, one serialized writer."""

    def __init__(self, directory: str | Path, mode: str = "record"):
        if mode not in MODES:
            raise ValueError(f"cache mode must be one of {MODES}, got {mode!r}")
        self.directory = Path(directory)
        self.mode = mode
        self.live_calls = 0
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        self.directory.mkdir(parents=True, exist_ok=True)
        for path in sorted(self.directory.glob("*.jsonl")):
            self._load_file(path)

    def _load_file(self, path: Path):
        lines = path.read_bytes().split(b"\n")
        last_content = max((i for i, line in enumerate(lines) if line.strip()), default=-1)
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                prefix, payload = line.split(b"\t", 1)
                if int(prefix) != len(payload):
                    raise ValueError("length mismatch")
                entry = json.loads(payload.decode("utf-8"))
                key = entry["key"]
            except (ValueError, KeyError) as exc:
                if i == last_content:
                    continue  # partially written final record from a crashed run
                raise StoreCorrupt(f"{path}:{i + 1}: {exc}") from exc
            # First write is authoritative.
            self._entries.setdefault(key, entry)

    def _append(self, service: str, entry: dict):
        payload = json.dumps(entry, sort_keys=True).encode("utf-8")
        line = str(len(payload)).encode() + b"\t" + payload + b"\n"
        path = self.directory / f"{service}.jsonl"
        with path.open("ab") as fh:
            fh.write(line)
            fh.flush()

    def lookup(self, service: str, request: Any) -> Any | None:
        key = request_key(service, request)
        with self._lock:
            entry = self._entries.get(key)
        return entry["response"] if entry else None

    def get_or_call(self, service: str, request: Any, live_call: Callable[[], Any]) -> Any:
        """record: persist misses before returning; replay: never call out;
        live: always call, never persist."""
        if self.mode == "live":
            with self._lock:
                self.live_calls += 1
            return live_call()

        key = request_key(service, request)
        with self._lock:
            entry = self._entries.get(key)
        if entry is not None:
            return entry["response"]
        if self.mode == "replay":
            raise ReplayMiss(f"no recorded {service} response for key {key[:12]}…")

        with self._lock:
            self.live_calls += 1
        response = live_call()
        entry = {
            "key": key,
            "service": service,
            "request": request,
            "response": response,
            "created_at": time.time(),
        }
        with self._lock:
            if key not in self._entries:  # first write wins
                self._entries[key] = entry
                self._append(service, entry)
        return response

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
