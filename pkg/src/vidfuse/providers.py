"""HTTP clients for embedding, chat-completion, and judge services.

Speaks the common chat-completions / embeddings JSON convention
(`POST {base}/v1/embeddings`, `POST {base}/v1/chat/completions`) so both
hosted APIs and local open-source servers work unchanged. API keys come
only from named environment variables, never from config values or logs.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    AuthMissing,
    EmptyResponse,
    MalformedResponse,
    ProviderUnavailable,
    UnparseableVerdict,
    ZeroVector,
)
from .vectors import normalize

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

JUDGE_DIMENSIONS = (
    "aspect_coverage",
    "coherence",
    "faithfulness",
    "fluency",
    "relevance",
    "sentiment_consistency",
    "specificity",
)


@dataclass
class ProviderConfig:
    base_url: str
    model_name: str
    api_key_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    max_concurrent: int = 4
    backoff_base: float = 0.5
    backoff_cap: float = 8.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.max_concurrent < 1:
            raise ValueError(f"max_concurrent must be >= 1, got {self.max_concurrent}")


class _HttpClient:
    """Shared POST-with-retries plumbing; safe to use from many threads."""

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self._slots = threading.Semaphore(cfg.max_concurrent)
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env)
            if not key:
                raise AuthMissing(
                    f"environment variable {self.cfg.api_key_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def post(self, endpoint: str, payload: dict) -> dict:
        """POST with exponential backoff + jitter on transient failures."""
        url = self.cfg.base_url.rstrip("/") + endpoint
        headers = self._headers()
        last_error = "no attempt made"
        for attempt in range(self.cfg.max_retries + 1):
            if attempt > 0:
                delay = min(
                    self.cfg.backoff_cap,
                    self.cfg.backoff_base * (2 ** (attempt - 1)),
                )
                delay *= 0.5 + random.random() / 2  # jitter in [0.5, 1.0)x
                logger.warning(
                    "event=retry endpoint=%s attempt=%d delay=%.3fs reason=%s",
                    endpoint, attempt, delay, last_error,
                )
                time.sleep(delay)
            try:
                with self._slots:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.cfg.timeout
                    )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(
                    f"{url} answered HTTP {resp.status_code}: {resp.text[:200]}"
                )
            try:
                body = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"{url} returned non-JSON body") from exc
            logger.info("event=request_ok endpoint=%s attempts=%d", endpoint, attempt + 1)
            return body
        raise ProviderUnavailable(
            f"{url} still failing after {self.cfg.max_retries + 1} attempts ({last_error})"
        )


class EmbeddingClient(_HttpClient):
    """Client for `POST {base}/v1/embeddings`."""

    def embed_texts(self, texts: list[str]) -> list[np.ndarray]:
        """One unit-normalized embedding per input text, order preserved."""
        if not texts:
            raise ValueError("texts must be non-empty")
        body = self.post(
            "/v1/embeddings", {"model": self.cfg.model_name, "input": list(texts)}
        )
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(texts):
            got = len(data) if isinstance(data, list) else type(data).__name__
            raise MalformedResponse(
                f"embeddings response has {got} items for {len(texts)} inputs"
            )
        out: list[np.ndarray | None] = [None] * len(texts)
        for pos, item in enumerate(data):
            if not isinstance(item, dict) or "embedding" not in item:
                raise MalformedResponse(f"embeddings item {pos} missing 'embedding'")
            idx = item.get("index", pos)
            if not isinstance(idx, int) or not (0 <= idx < len(texts)) or out[idx] is not None:
                raise MalformedResponse(f"embeddings item {pos} has bad index {idx!r}")
            try:
                out[idx] = normalize(np.asarray(item["embedding"], dtype=np.float32))
            except (ZeroVector, ValueError, TypeError) as exc:
                raise MalformedResponse(f"embedding at index {idx} unusable: {exc}") from exc
        return out  # type: ignore[return-value]


class ChatClient(_HttpClient):
    """Client for `POST {base}/v1/chat/completions`."""

    def complete(self, prompt: str) -> str:
        """Assistant text for a single user message, temperature 0."""
        body = self.post(
            "/v1/chat/completions",
            {
                "model": self.cfg.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            },
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse("chat response missing choices[0].message.content") from exc
        if not isinstance(content, str) or not content.strip():
            raise EmptyResponse("assistant message is empty")
        return content


def embed_texts(texts: list[str], cfg: ProviderConfig) -> list[np.ndarray]:
    return EmbeddingClient(cfg).embed_texts(texts)


def chat_complete(prompt: str, cfg: ProviderConfig) -> str:
    return ChatClient(cfg).complete(prompt)


_JUDGE_PROMPT = """Rate the candidate summary against the reference summary on each \
dimension below, scoring 1 (poor) to 5 (excellent).

Respond with a single JSON object whose keys are exactly:
{keys}
and whose values are numbers from 1 to 5. No other text.

Reference summary:
{reference}

Candidate summary:
{candidate}
"""

_JUDGE_REASK_SUFFIX = (
    "\n\nYour previous reply could not be parsed. Reply with ONLY the JSON object, "
    "all seven keys present, every value a number from 1 to 5."
)


def _extract_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    for start in range(len(text)):
        if text[start] != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _parse_verdict(text: str) -> dict[str, float] | None:
    obj = _extract_json_object(text)
    if obj is None:
        return None
    scores: dict[str, float] = {}
    for key, value in obj.items():
        norm_key = str(key).strip().lower().replace(" ", "_").replace("-", "_")
        if norm_key not in JUDGE_DIMENSIONS:
            continue
        if not isinstance(value, (int, float)) or not (1 <= float(value) <= 5):
            return None
        scores[norm_key] = float(value)
    if set(scores) != set(JUDGE_DIMENSIONS):
        return None
    return scores


def judge_summary(candidate: str, reference: str, cfg: ProviderConfig) -> dict[str, float]:
    """Score a candidate on the seven quality dimensions via a judge LLM.

    One corrective re-ask is attempted when the first reply does not parse;
    after that, UnparseableVerdict.
    """
    client = ChatClient(cfg)
    prompt = _JUDGE_PROMPT.format(
        keys=", ".join(JUDGE_DIMENSIONS), reference=reference, candidate=candidate
    )
    reply = client.complete(prompt)
    verdict = _parse_verdict(reply)
    if verdict is not None:
        return verdict
    logger.warning("event=judge_reask reason=unparseable_first_reply")
    reply = client.complete(prompt + _JUDGE_REASK_SUFFIX)
    verdict = _parse_verdict(reply)
    if verdict is None:
        raise UnparseableVerdict(f"judge reply not a valid verdict: {reply[:200]}")
    return verdict
