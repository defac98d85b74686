"""WolframAlpha full-results API client returning JSON pod documents."""

from __future__ import annotations

import os

import requests

from .cache import CacheStore
from .pipeline import ToolApiError

APP_ID_ENV = "TALM_WA_APPID"
BASE_URL_ENV = "TALM_WA_BASE_URL"
DEFAULT_BASE_URL = "https://api.wolframalpha.com/v2/query"


class WolframApiError(ToolApiError):
    pass


class WolframClient:
    def __init__(
        self,
        cache: CacheStore | None = None,
        app_id: str | None = None,
        base_url: str | None = None,
        timeout: float = 30.0,
    ):
        self.cache = cache
        self.app_id = app_id if app_id is not None else os.environ.get(APP_ID_ENV, "")
        self.base_url = base_url or os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL)
        self.timeout = timeout
        self.calls = 0

    def _live(self, final_query: str) -> dict:
        if not self.app_id:
            raise WolframApiError(f"{APP_ID_ENV} is not set")
        self.calls += 1
        try:
            resp = requests.get(
                self.base_url,
                params={"appid": self.app_id, "input": final_query, "output": "json", "format": "plaintext"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise WolframApiError(str(exc)) from exc
        if resp.status_code != 200:
            raise WolframApiError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def query(self, final_query: str) -> dict:
        """Raw JSON document for a Wolfram-language query."""
        if not final_query.strip():
            raise WolframApiError("empty query")
        request = {"input": final_query}
        if self.cache is not None:
            return self.cache.get_or_call("wolfram", request, lambda: self._live(final_query))
        return self._live(final_query)


def pods_text(document: dict) -> str:
    """Plaintext of every pod/subpod, titled, concatenated in order."""
    result = (document or {}).get("queryresult") or {}
    blocks = []
    for pod in result.get("pods") or []:
        title = pod.get("title") or "Pod"
        texts = [sp.get("plaintext", "") for sp in pod.get("subpods") or [] if sp.get("plaintext")]
        if texts:
            blocks.append(f"{title}: " + "\n".join(texts))
    return "\n".join(blocks)
