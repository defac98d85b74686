"""Web search client (Bing Web Search API v7-compatible endpoint)."""

from __future__ import annotations

import os

import requests

from .cache import CacheStore
from .pipeline import ToolApiError

API_KEY_ENV = "TALM_SEARCH_API_KEY"
BASE_URL_ENV = "TALM_SEARCH_BASE_URL"
DEFAULT_BASE_URL = "https://api.bing.microsoft.com/v7.0/search"


class SearchApiError(ToolApiError):
    pass


class SearchClient:
    def __init__(
        self,
        cache: CacheStore | None = None,
        api_key: str | None = None,
        base_url: str | None = None,
        timeout: float = 30.0,
    ):
        self.cache = cache
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.base_url = base_url or os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL)
        self.timeout = timeout
        self.calls = 0

    def _live(self, query: str, count: int) -> dict:
        if not self.api_key:
            raise SearchApiError(f"{API_KEY_ENV} is not set")
        self.calls += 1
        try:
            resp = requests.get(
                self.base_url,
                params={"q": query, "count": count, "textFormat": "Raw"},
                headers={"Ocp-Apim-Subscription-Key": self.api_key},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise SearchApiError(str(exc)) from exc
        if resp.status_code != 200:
            raise SearchApiError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def search(self, query: str, count: int) -> list[tuple[str, str, str]]:
        """Top ``count`` results as (title, snippet, url) triples."""
        if count <= 0:
            return []
        request = {"q": query, "count": count}
        if self.cache is not None:
            body = self.cache.get_or_call("search", request, lambda: self._live(query, count))
        else:
            body = self._live(query, count)
        results = []
        for item in (body.get("webPages") or {}).get("value", [])[:count]:
            results.append((item.get("name", ""), item.get("snippet", ""), item.get("url", "")))
        return results
