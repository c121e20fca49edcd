"""HTTP clients for pluggable stage backends.

All stage backends share one wire shape: a JSON POST carrying the context
pairs and the current query, answered by candidate texts with scores. A
separate endpoint shape serves per-step token distributions for the
decoders. Failures and timeouts are reported to the caller, which falls
back to the deterministic baseline and flags the trace.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import httpx

__all__ = ["BackendError", "HttpLmBackend", "HttpStageBackend"]


class BackendError(RuntimeError):
    """The backend call failed or returned an unusable payload."""


@dataclass
class HttpStageBackend:
    """Client for rewrite/generate/paraphrase backends.

    Request:  ``{"context": [[user, response], ...], "query": str}``
    Response: ``{"candidates": [{"text": str, "score": float}, ...]}``
    """

    url: str
    timeout: float = 5.0
    _client: httpx.Client | None = None

    def _http(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout)
        return self._client

    def call(self, context: list[tuple[str, str]], query: str) -> list[tuple[str, float]]:
        try:
            resp = self._http().post(
                self.url,
                json={"context": [list(pair) for pair in context], "query": query},
            )
            resp.raise_for_status()
            payload = resp.json()
            candidates = [
                (str(c["text"]), float(c.get("score", 0.0)))
                for c in payload["candidates"]
            ]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"backend call to {self.url} failed: {exc}") from exc
        if not candidates or not candidates[0][0].strip():
            raise BackendError(f"backend at {self.url} returned no usable text")
        return candidates


@dataclass
class HttpLmBackend:
    """Remote next-token distribution source for the decoders.

    Request:  ``{"prefix": [token, ...]}``
    Response: ``{"vocabulary": [...], "probabilities": [...]}`` — the
    vocabulary must be stable across calls and include the end-of-sequence
    token advertised at construction.
    """

    url: str
    eos_token: str = "</s>"
    timeout: float = 5.0
    _client: httpx.Client | None = None
    vocabulary: Sequence[str] = ()

    def _http(self) -> httpx.Client:
        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout)
        return self._client

    def next_distribution(self, prefix: Sequence[str]) -> list[float]:
        try:
            resp = self._http().post(self.url, json={"prefix": list(prefix)})
            resp.raise_for_status()
            payload = resp.json()
            vocab = list(payload["vocabulary"])
            probs = [float(p) for p in payload["probabilities"]]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"backend call to {self.url} failed: {exc}") from exc
        if len(vocab) != len(probs):
            raise BackendError("vocabulary and probabilities lengths differ")
        if not self.vocabulary:
            self.vocabulary = vocab
        return probs
