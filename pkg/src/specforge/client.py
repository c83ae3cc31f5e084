"""Client for OpenAI-compatible chat-completions endpoints.

Works against anything speaking the chat-completions JSON shape (llama.cpp
server, vLLM, cloud APIs). Batch dispatch bounds in-flight requests and
returns results positionally; retries use exponential backoff with bounded
jitter so successive delays never decrease.
"""

from __future__ import annotations

import json
import logging
import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
REASONING_EFFORTS = ("low", "medium", "high", "none")

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class ClientError(Exception):
    pass


class RequestRejected(ClientError):
    """Non-retryable HTTP 4xx."""

    def __init__(self, status: int, body: str):
        super().__init__(f"request rejected with HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class EndpointUnavailable(ClientError):
    """Retries exhausted or transport-level failure."""


class ProtocolError(ClientError):
    """Response body does not match the chat-completions schema."""


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    model_name: str
    api_key: str | None = None
    timeout_s: float = 60.0
    max_retries: int = 3

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def completions_url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    temperature: float = 0.0
    max_output_tokens: int = 1024
    reasoning_effort: str = "none"
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(dict(m) for m in self.messages))
        if not self.messages:
            raise ValueError("messages must be non-empty")
        for m in self.messages:
            if m.get("role") not in ROLES:
                raise ValueError(f"invalid message role {m.get('role')!r}")
            if not isinstance(m.get("content"), str):
                raise ValueError("message content must be a string")
        if self.messages[-1]["role"] != "user":
            raise ValueError("last message must have role=user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.reasoning_effort not in REASONING_EFFORTS:
            raise ValueError(f"reasoning_effort must be one of {REASONING_EFFORTS}")

    def to_wire(self, model_name: str) -> dict:
        payload = {
            "model": model_name,
            "messages": [dict(m) for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        }
        if self.seed is not None:
            payload["seed"] = self.seed
        if self.reasoning_effort != "none":
            payload["reasoning_effort"] = self.reasoning_effort
        return payload


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_s: float
    raw_finish_reason: str
    estimated: bool = False  # token counts came from the fallback heuristic
    retries: int = 0


@dataclass
class BackoffPolicy:
    """Exponential backoff; jitter multiplies by U[0.5, 1] and a running
    clamp keeps successive delays non-decreasing."""

    initial_s: float = 1.0
    multiplier: float = 2.0
    cap_s: float = 30.0
    jitter: bool = True
    rng: random.Random = field(default_factory=random.Random)
    sleep: Callable[[float], None] = time.sleep

    def delays(self):
        prev = 0.0
        attempt = 0
        while True:
            raw = min(self.cap_s, self.initial_s * self.multiplier**attempt)
            if self.jitter:
                raw *= self.rng.uniform(0.5, 1.0)
            prev = max(prev, raw)
            attempt += 1
            yield prev


def estimate_tokens(text: str) -> int:
    """Heuristic fallback when an endpoint omits usage: ceil(bytes/4)."""
    return math.ceil(len(text.encode("utf-8")) / 4)


_client_lock = threading.Lock()
_shared_client: httpx.Client | None = None


def _http_client() -> httpx.Client:
    global _shared_client
    with _client_lock:
        if _shared_client is None:
            _shared_client = httpx.Client()
        return _shared_client


def _headers(endpoint: ModelEndpoint) -> dict:
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    return headers


def _parse_body(body: dict, request: ChatRequest, latency_s: float, retries: int) -> ChatResponse:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"]
        if not isinstance(text, str):
            raise TypeError("content is not a string")
        finish = str(choice.get("finish_reason") or "")
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed chat-completions body: {exc}") from exc
    usage = body.get("usage") or {}
    if "prompt_tokens" in usage and "completion_tokens" in usage:
        prompt_tokens = int(usage["prompt_tokens"])
        completion_tokens = int(usage["completion_tokens"])
        estimated = False
    else:
        prompt_tokens = sum(estimate_tokens(m["content"]) for m in request.messages)
        completion_tokens = estimate_tokens(text)
        estimated = True
    return ChatResponse(
        text=text,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        latency_s=latency_s,
        raw_finish_reason=finish,
        estimated=estimated,
        retries=retries,
    )


def complete(
    endpoint: ModelEndpoint,
    request: ChatRequest,
    backoff: BackoffPolicy | None = None,
) -> ChatResponse:
    """Single chat completion with retries on 429/5xx/timeouts.

    Raises RequestRejected on other 4xx, EndpointUnavailable once retries
    are exhausted, ProtocolError on an unparseable 200 body.
    """
    backoff = backoff or BackoffPolicy()
    payload = request.to_wire(endpoint.model_name)
    headers = _headers(endpoint)
    max_attempts = endpoint.max_retries + 1
    delays = backoff.delays()
    attempt = 0
    retries = 0
    reasoning_stripped = False
    while True:
        failure: str
        started = time.perf_counter()
        try:
            resp = _http_client().post(
                endpoint.completions_url, json=payload, headers=headers, timeout=endpoint.timeout_s
            )
        except httpx.HTTPError as exc:
            failure = f"transport error: {exc}"
        else:
            latency = time.perf_counter() - started
            if resp.status_code == 200:
                try:
                    body = resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"response body is not JSON: {exc}") from exc
                return _parse_body(body, request, latency, retries)
            if 400 <= resp.status_code < 500 and resp.status_code not in RETRYABLE_STATUSES:
                body_text = resp.text
                if (
                    not reasoning_stripped
                    and "reasoning_effort" in payload
                    and "reasoning_effort" in body_text
                ):
                    # server rejects the knob; resend once without it
                    log.warning(
                        "endpoint %s rejected reasoning_effort; stripping it",
                        endpoint.base_url,
                    )
                    payload.pop("reasoning_effort")
                    reasoning_stripped = True
                    continue
                raise RequestRejected(resp.status_code, body_text)
            failure = f"HTTP {resp.status_code}"
        attempt += 1
        if attempt >= max_attempts:
            raise EndpointUnavailable(
                f"{endpoint.completions_url} unavailable after {attempt} attempts ({failure})"
            )
        backoff.sleep(next(delays))
        retries += 1


@dataclass
class BatchItem:
    index: int
    response: ChatResponse | None = None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_batch(
    endpoint: ModelEndpoint,
    requests: Sequence[ChatRequest],
    concurrency_limit: int,
    backoff: BackoffPolicy | None = None,
) -> list[BatchItem]:
    """Dispatch requests with at most ``concurrency_limit`` in flight.

    Results align positionally with the input; per-request failures are
    carried in the item rather than aborting the batch.
    """
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    if not requests:
        return []
    results: list[BatchItem | None] = [None] * len(requests)
    with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
        futures = {
            pool.submit(complete, endpoint, req, backoff): i for i, req in enumerate(requests)
        }
        for fut in as_completed(futures):
            i = futures[fut]
            try:
                results[i] = BatchItem(index=i, response=fut.result())
            except Exception as exc:  # per-item isolation
                results[i] = BatchItem(index=i, error=exc)
    return [item for item in results if item is not None]


@dataclass
class StreamResult:
    """One streamed completion with arrival timestamps per content delta."""

    text: str
    events: list[tuple[float, str]]  # (perf_counter arrival, delta text)
    t_request: float
    prompt_tokens: int
    completion_tokens: int
    estimated: bool
    raw_finish_reason: str

    @property
    def t_first(self) -> float | None:
        return self.events[0][0] if self.events else None

    @property
    def t_last(self) -> float | None:
        return self.events[-1][0] if self.events else None


def stream_complete(endpoint: ModelEndpoint, request: ChatRequest) -> StreamResult:
    """Streamed completion (single attempt, no retries) with delta timings."""
    payload = request.to_wire(endpoint.model_name)
    payload["stream"] = True
    events: list[tuple[float, str]] = []
    usage: dict = {}
    finish = ""
    t_request = time.perf_counter()
    try:
        with _http_client().stream(
            "POST",
            endpoint.completions_url,
            json=payload,
            headers=_headers(endpoint),
            timeout=endpoint.timeout_s,
        ) as resp:
            if resp.status_code != 200:
                body = resp.read().decode("utf-8", errors="replace")
                if 400 <= resp.status_code < 500 and resp.status_code not in RETRYABLE_STATUSES:
                    raise RequestRejected(resp.status_code, body)
                raise EndpointUnavailable(f"streaming request failed with HTTP {resp.status_code}")
            for line in resp.iter_lines():
                if not line.startswith("data:"):
                    continue
                data = line[len("data:") :].strip()
                if data == "[DONE]":
                    break
                try:
                    obj = json.loads(data)
                except ValueError as exc:
                    raise ProtocolError(f"bad stream chunk: {exc}") from exc
                if obj.get("usage"):
                    usage = obj["usage"]
                for choice in obj.get("choices", []):
                    delta = choice.get("delta", {}).get("content")
                    if delta:
                        events.append((time.perf_counter(), delta))
                    if choice.get("finish_reason"):
                        finish = choice["finish_reason"]
    except httpx.HTTPError as exc:
        raise EndpointUnavailable(f"streaming transport error: {exc}") from exc
    text = "".join(delta for _, delta in events)
    if "prompt_tokens" in usage and "completion_tokens" in usage:
        prompt_tokens = int(usage["prompt_tokens"])
        completion_tokens = int(usage["completion_tokens"])
        estimated = False
    else:
        prompt_tokens = sum(estimate_tokens(m["content"]) for m in request.messages)
        completion_tokens = len(events)
        estimated = True
    return StreamResult(
        text=text,
        events=events,
        t_request=t_request,
        prompt_tokens=prompt_tokens,
        completion_tokens=completion_tokens,
        estimated=estimated,
        raw_finish_reason=finish,
    )
