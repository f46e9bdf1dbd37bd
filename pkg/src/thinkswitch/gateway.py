"""Chat-completions client that speaks each model family's native mode fields.

Wire dialect (one dialect, documented in docs/wire_format.md):

* request: ``POST {base_url}/chat/completions`` with ``model``, ``messages``,
  ``max_tokens``, ``temperature``, optional ``logprobs``/``top_logprobs`` and
  the family's mode fields (top level or nested under the profile's
  ``extension_root``).
* response: ``choices[0].message`` with ``content`` and optional
  ``reasoning_content``; ``choices[0].logprobs.content`` per-token entries;
  ``usage.completion_tokens`` plus optional
  ``usage.completion_tokens_details.reasoning_tokens``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable

import httpx

from thinkswitch.core import ModeKind, ResponseTrace, ThinkingMode, TokenLogprobs, validate_mode
from thinkswitch.profiles import MAX_OUTPUT_TOKENS, Family, ModelProfile

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "THINKSWITCH_API_KEY"
JUDGE_MAX_TOKENS = 256


class GatewayError(Exception):
    """Base class for every failure surfaced by the client."""


class ModeMismatchError(GatewayError, ValueError):
    def __init__(self, mode: ThinkingMode, profile: ModelProfile, detail: str = "") -> None:
        self.mode_kind = mode.kind.value
        self.family = profile.family.value
        msg = f"mode kind {self.mode_kind!r} ({mode.label()}) is not supported by family {self.family!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


class TransportError(GatewayError):
    """Endpoint unreachable or kept failing after all retries."""


class DecodeError(GatewayError):
    """Endpoint answered with a body that does not fit the dialect."""


class ContextLengthError(GatewayError):
    """Endpoint rejected the request as too long for the model context."""


class RequestRejectedError(GatewayError):
    """Non-retryable 4xx other than a context-length rejection."""


class CapabilityError(GatewayError):
    """Strategy needs something the endpoint or profile does not provide."""


def map_mode(profile: ModelProfile, mode: ThinkingMode) -> dict[str, Any]:
    """Translate ``mode`` into the family's native request fields.

    For the budget family the binary modes are accepted as aliases
    (``no_think`` is budget 0, ``think`` is the full budget).
    """
    if profile.family is Family.BUDGET and mode.kind is ModeKind.BINARY:
        mode = profile.no_think_mode if mode.value == "no_think" else profile.full_think_mode
    if not validate_mode(mode, profile):
        detail = ""
        if mode.kind is ModeKind.BUDGET and profile.accepts_budget_modes:
            detail = f"budget outside [0, {profile.max_output_tokens}]"
        raise ModeMismatchError(mode, profile, detail)

    if profile.family is Family.EFFORT:
        return {profile.effort_field: mode.value}
    if profile.family is Family.BUDGET:
        return {profile.budget_field: mode.budget_tokens}
    if mode.kind is ModeKind.BINARY:
        return {profile.thinking_flag_field: mode.value == "think"}
    if mode.budget_tokens == 0:
        return {profile.thinking_flag_field: False}
    return {profile.thinking_flag_field: True, profile.budget_field: mode.budget_tokens}


@dataclass(frozen=True)
class CompletionRequest:
    user_message: str
    mode: ThinkingMode
    system_prompt: str | None = None
    max_output_tokens: int = MAX_OUTPUT_TOKENS
    temperature: float = 0.0
    want_logprobs: bool = False
    logprob_k: int = 20
    query_id: str | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.max_output_tokens <= MAX_OUTPUT_TOKENS:
            raise ValueError(f"max_output_tokens must be in [1, {MAX_OUTPUT_TOKENS}]")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 600.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    send_query_id: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EndpointConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown endpoint config keys: {sorted(unknown)}")
        return cls(**data)


def build_body(request: CompletionRequest, profile: ModelProfile, model: str) -> dict[str, Any]:
    messages = []
    if request.system_prompt is not None:
        messages.append({"role": "system", "content": request.system_prompt})
    messages.append({"role": "user", "content": request.user_message})
    body: dict[str, Any] = {
        "model": model,
        "messages": messages,
        "max_tokens": request.max_output_tokens,
        "temperature": request.temperature,
    }
    params = map_mode(profile, request.mode)
    if profile.extension_root:
        body[profile.extension_root] = params
    else:
        body.update(params)
    if request.want_logprobs:
        body[profile.logprobs_flag_field] = True
        body[profile.logprobs_count_field] = min(request.logprob_k, profile.logprob_k)
    return body


def _split_thinking(content: str, profile: ModelProfile) -> tuple[str, str]:
    open_, close = profile.think_open, profile.think_close
    end = content.find(close)
    if end < 0:
        return "", content
    start = content.find(open_)
    head = content[start + len(open_) : end] if 0 <= start < end else content[:end]
    return head.strip("\n"), content[end + len(close) :].lstrip("\n")


def _as_int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise DecodeError(f"{what} must be a non-negative integer, got {value!r}")
    return value


def _as_logprob(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DecodeError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if math.isnan(value) or value > 0:
        raise DecodeError(f"{what} must be a log-probability, got {value!r}")
    return value


def _parse_logprobs(raw: Any, k: int) -> tuple[TokenLogprobs, ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise DecodeError("logprobs must be an object")
    content = raw.get("content")
    if content is None:
        return None
    if not isinstance(content, list):
        raise DecodeError("logprobs.content must be a list")
    out = []
    for i, entry in enumerate(content):
        if not isinstance(entry, dict) or not isinstance(entry.get("token"), str):
            raise DecodeError(f"logprobs.content[{i}] malformed")
        chosen = _as_logprob(entry.get("logprob"), f"logprobs.content[{i}].logprob")
        tops = entry.get("top_logprobs") or []
        if not isinstance(tops, list):
            raise DecodeError(f"logprobs.content[{i}].top_logprobs must be a list")
        cands = []
        for cand in tops:
            if not isinstance(cand, dict) or not isinstance(cand.get("token"), str):
                raise DecodeError(f"logprobs.content[{i}] has a malformed candidate")
            lp = _as_logprob(cand.get("logprob"), f"logprobs.content[{i}] candidate")
            if math.isfinite(lp):
                cands.append((cand["token"], lp))
        if not cands and math.isfinite(chosen):
            cands = [(entry["token"], chosen)]
        out.append(TokenLogprobs(entry["token"], chosen, tuple(cands[:k])))
    return tuple(out)


def parse_response(payload: bytes, profile: ModelProfile, logprob_k: int = 20) -> ResponseTrace:
    """Normalize a raw response body. Raises only :class:`DecodeError`."""
    try:
        data = json.loads(payload)
    except (ValueError, UnicodeDecodeError, RecursionError) as exc:
        raise DecodeError(f"response is not JSON: {exc}") from None
    try:
        return _parse_response_obj(data, profile, logprob_k)
    except DecodeError:
        raise
    except (KeyError, IndexError, TypeError, AttributeError, ValueError, RecursionError) as exc:
        raise DecodeError(f"malformed response: {exc!r}") from None


def _parse_response_obj(data: Any, profile: ModelProfile, logprob_k: int) -> ResponseTrace:
    if not isinstance(data, dict):
        raise DecodeError("response body must be an object")
    choices = data.get("choices")
    if not isinstance(choices, list) or not choices or not isinstance(choices[0], dict):
        raise DecodeError("response has no choices")
    choice = choices[0]
    message = choice.get("message")
    if not isinstance(message, dict):
        raise DecodeError("choice has no message")
    content = message.get("content")
    if content is None:
        content = ""
    if not isinstance(content, str):
        raise DecodeError("message.content must be a string")
    reasoning = message.get("reasoning_content", message.get("reasoning"))
    if reasoning is not None and not isinstance(reasoning, str):
        raise DecodeError("message.reasoning_content must be a string")
    if reasoning:
        thinking, answer = reasoning, content
    else:
        thinking, answer = _split_thinking(content, profile)

    usage = data.get("usage")
    if not isinstance(usage, dict):
        raise DecodeError("response has no usage block")
    total = _as_int(usage.get("completion_tokens"), "usage.completion_tokens")
    details = usage.get("completion_tokens_details")
    reported = None
    if isinstance(details, dict) and details.get("reasoning_tokens") is not None:
        reported = _as_int(details["reasoning_tokens"], "usage.completion_tokens_details.reasoning_tokens")
    if reported is not None:
        if reported > total:
            raise DecodeError(f"reasoning_tokens {reported} exceeds completion_tokens {total}")
        thinking_tokens, split_reported = reported, True
    else:
        # approximate: ~4 characters per token
        thinking_tokens, split_reported = min(total, math.ceil(len(thinking) / 4)), False

    finish = choice.get("finish_reason")
    return ResponseTrace(
        thinking_text=thinking,
        answer_text=answer,
        thinking_tokens=thinking_tokens,
        answer_tokens=total - thinking_tokens,
        total_tokens=total,
        split_reported=split_reported,
        per_token_logprobs=_parse_logprobs(choice.get("logprobs"), logprob_k),
        finish_reason=finish if isinstance(finish, str) else None,
    )


def _error_message(resp: httpx.Response) -> str:
    try:
        err = resp.json().get("error", {})
        if isinstance(err, dict):
            return f"{err.get('code') or ''} {err.get('message') or ''}".strip()
        return str(err)
    except Exception:
        return resp.text[:200]


def _is_context_length(resp: httpx.Response) -> bool:
    text = _error_message(resp).lower()
    return "context_length" in text or "context length" in text or "maximum context" in text


class GatewayClient:
    """Thread-safe client bound to one endpoint and one model profile."""

    def __init__(
        self,
        endpoint: EndpointConfig,
        profile: ModelProfile,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.profile = profile
        self._sleep = sleep
        self._rng = random.Random(endpoint.seed)
        self._rng_lock = threading.Lock()
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(endpoint.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(
            base_url=endpoint.base_url.rstrip("/"),
            timeout=endpoint.timeout,
            headers=headers,
            transport=transport,
        )

    @property
    def model(self) -> str:
        return self.endpoint.model or self.profile.model_name

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> GatewayClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _backoff(self, attempt: int) -> float:
        with self._rng_lock:
            jitter = 0.5 + 0.5 * self._rng.random()
        return min(self.endpoint.backoff_cap, self.endpoint.backoff_base * 2**attempt) * jitter

    def _send(self, method: str, url: str, body: dict[str, Any] | None = None) -> httpx.Response:
        last = ""
        for attempt in range(self.endpoint.max_attempts):
            if attempt:
                self._sleep(self._backoff(attempt - 1))
            try:
                resp = self._http.request(method, url, json=body)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                logger.warning("attempt %d/%d to %s failed: %s", attempt + 1, self.endpoint.max_attempts, url, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}: {_error_message(resp)}"
                logger.warning("attempt %d/%d to %s failed: %s", attempt + 1, self.endpoint.max_attempts, url, last)
                continue
            return resp
        raise TransportError(f"{url} failed after {self.endpoint.max_attempts} attempts ({last})")

    def complete(self, request: CompletionRequest) -> ResponseTrace:
        body = build_body(request, self.profile, self.model)
        if self.endpoint.send_query_id and request.query_id is not None:
            body["metadata"] = {"query_id": request.query_id}
        resp = self._send("POST", "/chat/completions", body)
        if resp.status_code >= 400:
            if _is_context_length(resp):
                raise ContextLengthError(_error_message(resp))
            raise RequestRejectedError(f"HTTP {resp.status_code}: {_error_message(resp)}")
        return parse_response(resp.content, self.profile, request.logprob_k)

    def probe(self) -> None:
        """Raise :class:`TransportError` when the endpoint cannot be reached at all."""
        self._send("GET", "/models")
