from __future__ import annotations

import pytest

import talm.gateway as gw
from talm.cache import CacheStore, ReplayMiss
from talm.gateway import (
    AuthError,
    ChatRequest,
    Gateway,
    LiveProvider,
    MockExhausted,
    MockProvider,
    ProviderUnavailable,
    RateLimited,
    chat_request,
    prompt_key,
    replay_gateway,
)


def req(prompt="2+2?", **kwargs):
    return chat_request("gpt-3.5-turbo", prompt, **kwargs)


class TestChatRequest:
    def test_requires_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", messages=())

    def test_first_role(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", messages=(("assistant", "hi"),))

    def test_bounds(self):
        with pytest.raises(ValueError):
            ChatRequest(model="m", messages=(("user", "x"),), temperature=-1)
        with pytest.raises(ValueError):
            ChatRequest(model="m", messages=(("user", "x"),), max_tokens=0)

    def test_system_framing(self):
        r = req(system="be brief")
        assert r.messages[0] == ("system", "be brief") and r.messages[1][0] == "user"


class TestMockProvider:
    def test_keyed_response(self):
        r = req("what is the meaning?")
        provider = MockProvider(by_key={prompt_key(r): "42"})
        assert provider.complete(r).text == "42"

    def test_script_order_and_counts(self):
        provider = MockProvider(script=["a", "b"])
        assert provider.complete(req()).text == "a"
        assert provider.complete(req()).text == "b"
        assert provider.calls == 2
        with pytest.raises(MockExhausted):
            provider.complete(req())

    def test_usage_nonnegative(self):
        usage = MockProvider(default="x").complete(req()).usage
        assert usage.total_tokens >= 0


class TestGatewayCaching:
    def test_record_mode_single_provider_call(self, tmp_path):
        provider = MockProvider(default="42")
        gateway = Gateway(provider, CacheStore(tmp_path, "record"))
        first = gateway.complete(req())
        second = gateway.complete(req())
        assert provider.calls == 1
        assert first.text == second.text == "42"
        assert first.provider == "mock" and second.provider == "replay"

    def test_replay_round_trip(self, tmp_path):
        recording = Gateway(MockProvider(default="recorded"), CacheStore(tmp_path, "record"))
        recording.complete(req("solve"))
        gateway = replay_gateway(CacheStore(tmp_path, "replay"))
        resp = gateway.complete(req("solve"))
        assert resp.text == "recorded" and resp.provider == "replay"
        assert gateway.provider_calls == 0

    def test_replay_miss_surfaces(self, tmp_path):
        gateway = replay_gateway(CacheStore(tmp_path, "replay"))
        with pytest.raises(ReplayMiss):
            gateway.complete(req("never recorded"))

    def test_sampling_requests_bypass_cache(self, tmp_path):
        provider = MockProvider(script=["a", "b"])
        gateway = Gateway(provider, CacheStore(tmp_path, "record"))
        hot = req("sample", temperature=0.7)
        assert gateway.complete(hot).text == "a"
        assert gateway.complete(hot).text == "b"
        assert provider.calls == 2
        assert len(CacheStore(tmp_path, "replay")) == 0

    def test_seed_tag_restores_caching(self, tmp_path):
        provider = MockProvider(script=["a", "b"])
        gateway = Gateway(provider, CacheStore(tmp_path, "record"))
        tagged = req("sample", temperature=0.7, seed_tag="run-1")
        assert gateway.complete(tagged).text == "a"
        assert gateway.complete(tagged).text == "a"
        assert provider.calls == 1


class _FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = text

    def json(self):
        return self._payload


def _completion_payload(text):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 5, "completion_tokens": 2, "total_tokens": 7},
    }


@pytest.fixture
def live(monkeypatch):
    provider = LiveProvider(base_url="http://llm.test/v1", api_key="k", retries=2, backoff=0)
    state = {"responses": [], "calls": 0}

    def fake_post(url, json=None, headers=None, timeout=None):
        state["calls"] += 1
        item = state["responses"].pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    monkeypatch.setattr(gw.requests, "post", fake_post)
    return provider, state


class TestLiveProvider:
    def test_retries_then_succeeds(self, live):
        provider, state = live
        state["responses"] = [_FakeResponse(500), _FakeResponse(503), _FakeResponse(200, _completion_payload("ok"))]
        resp = provider.complete(req())
        assert resp.text == "ok" and resp.provider == "live"
        assert state["calls"] == 3

    def test_rate_limited_after_retries(self, live):
        provider, state = live
        state["responses"] = [_FakeResponse(429)] * 3
        with pytest.raises(RateLimited):
            provider.complete(req())
        assert state["calls"] == 3

    def test_auth_error_fails_fast(self, live):
        provider, state = live
        state["responses"] = [_FakeResponse(401)]
        with pytest.raises(AuthError):
            provider.complete(req())
        assert state["calls"] == 1

    def test_network_errors_become_unavailable(self, live):
        provider, state = live
        state["responses"] = [gw.requests.ConnectionError("boom")] * 3
        with pytest.raises(ProviderUnavailable):
            provider.complete(req())

    def test_missing_credentials(self, monkeypatch):
        monkeypatch.delenv(gw.BASE_URL_ENV, raising=False)
        monkeypatch.delenv(gw.API_KEY_ENV, raising=False)
        with pytest.raises(ProviderUnavailable):
            LiveProvider().complete(req())
        with pytest.raises(AuthError):
            LiveProvider(base_url="http://llm.test").complete(req())
