"""OpenAI-compatible HTTP clients for generation and log-prob scoring."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable

import httpx

from .base import (
    AuthError,
    BackendError,
    BackendTimeout,
    GenerationRequest,
    QuotaError,
    ScoreRequest,
    ScoreResult,
    TransientBackendError,
    with_retries,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key: str = ""
    timeout: float = 120.0
    max_inflight: int = 8

    @classmethod
    def from_env(cls, slot: str, **overrides) -> "EndpointConfig":
        """Read REPOFORGE_<SLOT>_URL / _MODEL / _API_KEY; explicit overrides win."""
        prefix = f"REPOFORGE_{slot.upper()}_"
        values = {
            "base_url": os.environ.get(prefix + "URL", ""),
            "model": os.environ.get(prefix + "MODEL", ""),
            "api_key": os.environ.get(prefix + "API_KEY", ""),
        }
        values.update({k: v for k, v in overrides.items() if v not in (None, "")})
        if not values["base_url"] or not values["model"]:
            raise AuthError(f"backend slot {slot!r} needs {prefix}URL and {prefix}MODEL")
        return cls(**values)


def _redact(headers: dict) -> dict:
    return {k: ("***" if k.lower() == "authorization" else v) for k, v in headers.items()}


class _HttpClient:
    def __init__(self, cfg: EndpointConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep, seed: int = 0):
        self.cfg = cfg
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._slots = threading.BoundedSemaphore(cfg.max_inflight)
        self._sleep = sleep
        self._seed = seed

    def _post_once(self, route: str, payload: dict) -> dict:
        url = self.cfg.base_url.rstrip("/") + route
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        log.debug("POST %s headers=%s body=%s", url, _redact(headers), payload)
        with self._slots:
            try:
                resp = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                raise BackendTimeout(str(exc)) from exc
            except httpx.TransportError as exc:
                raise TransientBackendError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"{resp.status_code}: {resp.text[:200]}")
        if resp.status_code == 429:
            body = resp.text.lower()
            if "quota" in body or "insufficient" in body:
                raise QuotaError(resp.text[:200])
            raise TransientBackendError("rate limited")
        if resp.status_code >= 500:
            raise TransientBackendError(f"{resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise BackendError(f"{resp.status_code}: {resp.text[:200]}")
        data = resp.json()
        log.debug("response %s", data)
        return data

    def post(self, route: str, payload: dict, seed: int = 0) -> dict:
        return with_retries(lambda: self._post_once(route, payload), seed=self._seed ^ seed, sleep=self._sleep)


class OpenAIChatGenerator(_HttpClient):
    """`/chat/completions`; messages go through unchanged."""

    def generate(self, req: GenerationRequest) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": r, "content": t} for r, t in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "seed": req.seed,
        }
        data = self.post("/chat/completions", payload, req.seed)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {data!r:.200}") from exc


class OpenAICompletionScorer(_HttpClient):
    """`/completions` with echo + logprobs; sums log-probs of the target tokens.

    Target tokens are those whose text offset lies at or after the end of
    the context. A token straddling the boundary counts as target.
    """

    def score(self, req: ScoreRequest) -> ScoreResult:
        payload = {
            "model": self.cfg.model,
            "prompt": req.context + req.target,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
            "temperature": 0,
        }
        data = self.post("/completions", payload)
        try:
            lp = data["choices"][0]["logprobs"]
            offsets, values, tokens = lp["text_offset"], lp["token_logprobs"], lp["tokens"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completions response: {data!r:.200}") from exc
        boundary = len(req.context)
        total, count = 0.0, 0
        for off, tok, val in zip(offsets, tokens, values):
            if off + len(tok) <= boundary or val is None:
                continue
            total += val
            count += 1
        if count == 0:
            raise BackendError("scorer returned no target tokens")
        return ScoreResult(min(total, 0.0), count)
