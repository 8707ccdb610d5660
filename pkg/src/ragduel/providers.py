"""Embedding and chat backends: OpenAI-compatible HTTP clients plus
fully deterministic mocks for offline runs and tests.
"""

from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import httpx
import numpy as np

from . import judge as judge_mod
from .prompting import load_template
from .textutil import fnv1a64, tokenize

MOCK_DIMENSION = 256

DIRECT_SENTINEL = "NO-CONTEXT-ANSWER"

_RETRYABLE_STATUS = (429, 500, 502, 503, 504)
_BACKOFF_BASE_S = 0.5
_BACKOFF_CAP_S = 8.0


class ProviderError(Exception):
    """Base class for provider failures."""


class ProviderAuthError(ProviderError):
    """Missing API key or an authentication failure from the endpoint."""


class ProviderRequestError(ProviderError):
    """Request failed after exhausting all retry attempts."""


class ProviderRefusalError(ProviderError):
    """The model declined to answer (content filter or empty completion)."""


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1024
    model_name: str = "gpt-3.5-turbo"

    def __post_init__(self) -> None:
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")


@dataclass(frozen=True)
class ProviderConfig:
    """Endpoint coordinates; the API key itself stays in the environment."""

    base_url: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")


class EmbeddingProvider(Protocol):
    name: str

    def embed(self, texts: list[str]) -> list[np.ndarray]: ...


class ChatProvider(Protocol):
    name: str

    def generate(self, prompt: str, params: GenerationParams) -> str: ...


def _unit_normalize(vector: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ValueError(f"cannot normalize zero-magnitude embedding for {what}")
    return vector / norm


class MockEmbedder:
    """Deterministic hashed bag-of-words embedder.

    Each lowercase alphanumeric token is hashed with 64-bit FNV-1a; the
    hash modulo 256 picks a bucket and the top hash bit picks the sign.
    Signed token counts are accumulated and L2-normalized, so identical
    texts (and token permutations of a text) embed identically.
    """

    name = f"mock-bow-{MOCK_DIMENSION}"
    dimension = MOCK_DIMENSION

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        vectors = []
        for text in texts:
            if not text.strip():
                raise ValueError("cannot embed empty text")
            tokens = tokenize(text)
            if not tokens:
                raise ValueError(f"text has no alphanumeric tokens to embed: {text!r}")
            vector = np.zeros(MOCK_DIMENSION, dtype=np.float64)
            for token in tokens:
                digest = fnv1a64(token)
                sign = -1.0 if (digest >> 63) & 1 else 1.0
                vector[digest % MOCK_DIMENSION] += sign
            vectors.append(_unit_normalize(vector, f"text {text[:40]!r}"))
        return vectors


_SENTENCE_RE = re.compile(r"[^.!?\n]+[.!?]*")

_JUDGE_SECTIONS_RE = re.compile(
    r"\[User Question\]\n(?P<question>.*)\n\n"
    r"\[Ground Truth\]\n(?P<ground_truth>.*)\n\n"
    r"\[Assistant A\]\n(?P<answer_a>.*)\n\n"
    r"\[Assistant B\]\n(?P<answer_b>.*)\Z",
    re.DOTALL,
)


def _split_sentences(text: str) -> list[str]:
    return [m.group(0).strip() for m in _SENTENCE_RE.finditer(text) if m.group(0).strip()]


class MockChatProvider:
    """Deterministic chat stand-in keyed off the prompt shape.

    RAG prompts are answered by echoing, verbatim, the context sentences
    with maximal word overlap with the question line; direct prompts get a
    fixed sentinel; judge prompts get a well-formed report whose scores are
    token-overlap F1 against the embedded ground truth, scaled to 0-100.
    """

    name = "mock-chat"

    def __init__(self) -> None:
        rag_body = load_template("rag").body
        self._rag_head = rag_body.split("\n", 1)[0]
        self._rag_tail = "\n\nPlease do not use any external information."
        self._judge_head = load_template("judge").body.split("\n", 1)[0]

    def generate(self, prompt: str, params: GenerationParams) -> str:
        if not prompt.strip():
            raise ValueError("empty prompt")
        if prompt.startswith(self._judge_head):
            return self._judge_reply(prompt)
        if prompt.startswith(self._rag_head) and self._rag_tail in prompt:
            return self._echo_context(prompt)
        return DIRECT_SENTINEL

    def _echo_context(self, prompt: str) -> str:
        context = prompt[len(self._rag_head) : prompt.index(self._rag_tail)].strip("\n")
        question_marker = prompt.rfind("\nQuestion: ")
        question = prompt[question_marker + len("\nQuestion: ") :] if question_marker >= 0 else ""
        question_tokens = set(tokenize(question))
        sentences = _split_sentences(context)
        if not sentences:
            return DIRECT_SENTINEL
        overlaps = [len(question_tokens & set(tokenize(s))) for s in sentences]
        best = max(overlaps)
        return " ".join(s for s, o in zip(sentences, overlaps) if o == best)

    def _judge_reply(self, prompt: str) -> str:
        sections = _JUDGE_SECTIONS_RE.search(prompt)
        if sections is None:
            raise ValueError("judge prompt missing labeled sections")
        truth = sections.group("ground_truth")
        score_a = round(100 * judge_mod.token_f1(sections.group("answer_a"), truth))
        score_b = round(100 * judge_mod.token_f1(sections.group("answer_b"), truth))
        evaluation = f"Token overlap with the ground truth scores A {score_a} and B {score_b}."
        criteria = tuple(
            judge_mod.CriterionScore(name, evaluation, score_a, score_b)
            for name in judge_mod.CRITERIA
        )
        delta = score_a - score_b
        preference = "A" if delta > 0.5 else "B" if delta < -0.5 else "Tie"
        report = judge_mod.JudgeReport(
            criteria=criteria,
            verdict_evaluation="Scores are token-overlap F1 against the ground truth, scaled to 100.",
            verdict_score_a=float(score_a),
            verdict_score_b=float(score_b),
            preference=preference,
            raw_text="",
        )
        return judge_mod.render_judge_report(report)


def _resolve_api_key(config: ProviderConfig) -> str:
    key = os.environ.get(config.api_key_env, "")
    if not key:
        raise ProviderAuthError(f"environment variable {config.api_key_env} is not set")
    return key


def _post_with_retries(
    client: httpx.Client,
    path: str,
    payload: dict,
    config: ProviderConfig,
    sleep: Callable[[float], None],
) -> dict:
    """POST with bearer auth and bounded exponential backoff.

    Total attempts are ``max_retries + 1``; only transport errors, 429 and
    5xx are retried.  Error messages never include the API key.
    """
    api_key = _resolve_api_key(config)
    attempts = config.max_retries + 1
    last_error = "no attempt made"
    for attempt in range(attempts):
        try:
            response = client.post(
                path, json=payload, headers={"Authorization": f"Bearer {api_key}"}
            )
        except httpx.HTTPError as exc:
            last_error = f"transport error: {type(exc).__name__}"
        else:
            if response.status_code == 200:
                return response.json()
            if response.status_code in (401, 403):
                raise ProviderAuthError(
                    f"authentication failed with HTTP {response.status_code} "
                    f"(key read from ${config.api_key_env})"
                )
            if response.status_code not in _RETRYABLE_STATUS:
                raise ProviderRequestError(
                    f"HTTP {response.status_code}: {response.text[:200]}"
                )
            last_error = f"HTTP {response.status_code}"
        if attempt < attempts - 1:
            sleep(min(_BACKOFF_BASE_S * 2**attempt, _BACKOFF_CAP_S))
    raise ProviderRequestError(f"request failed after {attempts} attempts ({last_error})")


class OpenAIEmbeddingClient:
    """Embeddings over the OpenAI-compatible ``POST /embeddings`` endpoint."""

    def __init__(
        self,
        config: ProviderConfig,
        model: str = "text-embedding-ada-002",
        *,
        max_concurrency: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self._config = config
        self._model = model
        self.name = f"openai:{model}"
        self._limiter = threading.Semaphore(max_concurrency)
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"), timeout=config.timeout_s, transport=transport
        )

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        for text in texts:
            if not text.strip():
                raise ValueError("cannot embed empty text")
        with self._limiter:
            data = _post_with_retries(
                self._client,
                "/embeddings",
                {"model": self._model, "input": list(texts)},
                self._config,
                self._sleep,
            )
        rows = sorted(data["data"], key=lambda row: row["index"])
        if len(rows) != len(texts):
            raise ProviderRequestError(
                f"expected {len(texts)} embeddings, got {len(rows)}"
            )
        return [
            _unit_normalize(np.asarray(row["embedding"], dtype=np.float64), f"input {row['index']}")
            for row in rows
        ]


class OpenAIChatClient:
    """Chat completions over the OpenAI-compatible ``POST /chat/completions`` endpoint."""

    def __init__(
        self,
        config: ProviderConfig,
        *,
        max_concurrency: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self._config = config
        self.name = f"openai-chat:{config.base_url}"
        self._limiter = threading.Semaphore(max_concurrency)
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"), timeout=config.timeout_s, transport=transport
        )

    def generate(self, prompt: str, params: GenerationParams) -> str:
        if not prompt.strip():
            raise ValueError("empty prompt")
        with self._limiter:
            data = _post_with_retries(
                self._client,
                "/chat/completions",
                {
                    "model": params.model_name,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": params.temperature,
                    "max_tokens": params.max_tokens,
                },
                self._config,
                self._sleep,
            )
        try:
            choice = data["choices"][0]
        except (KeyError, IndexError) as exc:
            raise ProviderRequestError(f"malformed completion response: {data}") from exc
        message = choice.get("message", {})
        if choice.get("finish_reason") == "content_filter" or message.get("refusal"):
            raise ProviderRefusalError(
                f"model refused the request: {message.get('refusal') or 'content filter'}"
            )
        content = message.get("content")
        if not content:
            raise ProviderRefusalError("model returned an empty completion")
        return content
