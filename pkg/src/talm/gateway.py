"""Provider-agnostic chat-completion access.

Three providers: an OpenAI-compatible HTTP backend, a scripted mock for
tests, and replay-from-cache. All completions can be routed through the
record/replay cache; live request/response pairs are persisted before being
returned so a crashed run resumes from cache.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .cache import CacheStore, request_key
from .pipeline import ToolApiError

BASE_URL_ENV = "TALM_LLM_BASE_URL"
API_KEY_ENV = "TALM_LLM_API_KEY"
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 1024


class AuthError(ToolApiError):
    pass


class RateLimited(ToolApiError):
    pass


class ProviderUnavailable(ToolApiError):
    pass


class MockExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    total_tokens: int = 0

    def __post_init__(self):
        if min(self.prompt_tokens, self.completion_tokens, self.total_tokens) < 0:
            raise ValueError("token counts must be nonnegative")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop: tuple[str, ...] | None = None
    seed_tag: str | None = None  # opt-in cache key for temperature > 0 runs

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    provider: str  # live | mock | replay


def chat_request(
    model: str,
    prompt: str,
    system: str | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    seed_tag: str | None = None,
) -> ChatRequest:
    """Standard framing: the assembled prompt as one user message after an
    optional system message."""
    messages: tuple[tuple[str, str], ...] = (("user", prompt),)
    if system:
        messages = (("system", system),) + messages
    return ChatRequest(
        model=model, messages=messages, temperature=temperature, max_tokens=max_tokens, seed_tag=seed_tag
    )


def request_body(req: ChatRequest) -> dict:
    body = {
        "model": req.model,
        "messages": [[role, text] for role, text in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    if req.stop:
        body["stop"] = list(req.stop)
    if req.seed_tag:
        body["seed_tag"] = req.seed_tag
    return body


def prompt_key(req: ChatRequest) -> str:
    return request_key("llm", request_body(req))


class Provider(Protocol):  # pragma: no cover - structural type only
    name: str

    def complete(self, req: ChatRequest) -> ChatResponse: ...


class LiveProvider:
    """OpenAI-compatible chat-completions endpoint with retry/backoff."""

    name = "live"

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
    ):
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV, "")).rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.calls = 0

    def complete(self, req: ChatRequest) -> ChatResponse:
        if not self.base_url:
            raise ProviderUnavailable(f"{BASE_URL_ENV} is not set")
        if not self.api_key:
            raise AuthError(f"{API_KEY_ENV} is not set")
        url = f"{self.base_url}/chat/completions"
        payload = {
            "model": req.model,
            "messages": [{"role": role, "content": text} for role, text in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.stop:
            payload["stop"] = list(req.stop)

        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self.calls += 1
            try:
                resp = requests.post(
                    url,
                    json=payload,
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = ProviderUnavailable(str(exc))
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"provider rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429:
                last_error = RateLimited("rate limited (HTTP 429)")
                continue
            if resp.status_code >= 500:
                last_error = ProviderUnavailable(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            data = resp.json()
            usage = data.get("usage") or {}
            return ChatResponse(
                text=data["choices"][0]["message"]["content"] or "",
                usage=TokenUsage(
                    prompt_tokens=int(usage.get("prompt_tokens", 0)),
                    completion_tokens=int(usage.get("completion_tokens", 0)),
                    total_tokens=int(usage.get("total_tokens", 0)),
                ),
                provider="live",
            )
        raise last_error if last_error else ProviderUnavailable("no attempts made")


class MockProvider:
    """Deterministic scripted provider for tests and fixture building.

    Resolution order: ``responder`` callable, exact-key table, FIFO script,
    ``default``. Raises MockExhausted when nothing matches.
    """

    name = "mock"

    def __init__(
        self,
        script: Sequence[str] | None = None,
        by_key: Mapping[str, str] | None = None,
        default: str | None = None,
        responder: Callable[[ChatRequest], str | None] | None = None,
    ):
        self._script = list(script or [])
        self._by_key = dict(by_key or {})
        self._default = default
        self._responder = responder
        self.calls = 0
        self.requests: list[ChatRequest] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.calls += 1
        self.requests.append(req)
        text: str | None = None
        if self._responder is not None:
            text = self._responder(req)
        if text is None:
            text = self._by_key.get(prompt_key(req))
        if text is None and self._script:
            text = self._script.pop(0)
        if text is None:
            text = self._default
        if text is None:
            raise MockExhausted(f"no scripted response for request key {prompt_key(req)[:12]}…")
        prompt_len = sum(len(t) for _, t in req.messages)
        usage = TokenUsage(prompt_len // 4, len(text) // 4, (prompt_len + len(text)) // 4)
        return ChatResponse(text=text, usage=usage, provider="mock")


class Gateway:
    """Single entry point for completions; optional cache routing and a
    semaphore bounding in-flight provider calls. Safe for concurrent use."""

    def __init__(self, provider: Provider | None, cache: CacheStore | None = None, max_in_flight: int = 4):
        self.provider = provider
        self.cache = cache
        self.calls = 0
        self.provider_calls = 0
        self._sem = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()

    def _provider_complete(self, req: ChatRequest) -> ChatResponse:
        if self.provider is None:
            raise ProviderUnavailable("no provider configured (replay-only gateway)")
        with self._sem:
            response = self.provider.complete(req)
        with self._lock:
            self.provider_calls += 1
        return response

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        # Sampling runs bypass the cache unless tagged with a run-scoped seed.
        cacheable = req.temperature == 0 or req.seed_tag is not None
        if self.cache is None or (not cacheable and self.cache.mode != "replay"):
            return self._provider_complete(req)

        before = self.provider_calls

        def live_call() -> dict:
            resp = self._provider_complete(req)
            return {
                "text": resp.text,
                "usage": {
                    "prompt_tokens": resp.usage.prompt_tokens,
                    "completion_tokens": resp.usage.completion_tokens,
                    "total_tokens": resp.usage.total_tokens,
                },
            }

        body = self.cache.get_or_call("llm", request_body(req), live_call)
        served_from_cache = self.provider_calls == before
        usage = body.get("usage") or {}
        return ChatResponse(
            text=body["text"],
            usage=TokenUsage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                total_tokens=int(usage.get("total_tokens", 0)),
            ),
            provider="replay" if served_from_cache else (self.provider.name if self.provider else "replay"),
        )


def replay_gateway(cache: CacheStore) -> Gateway:
    if cache.mode != "replay":
        raise ValueError("replay_gateway requires a cache opened in replay mode")
    return Gateway(provider=None, cache=cache)
