"""Scripted replies for the mock endpoint, loaded from line-delimited fixtures.

Each fixture line is one entry; the first entry whose ``match`` accepts a
request answers it. A line with ``"default": true`` sets the reply for
unmatched requests. See docs/mock_fixtures.md for the full schema.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

_PIECE = re.compile(r"\s*\S+|\s+")


def tokenize(text: str) -> list[str]:
    """Whitespace-attached word pieces; joining them gives back ``text``."""
    return _PIECE.findall(text)


class FixtureError(ValueError):
    def __init__(self, path: str | Path | None, line: int | None, message: str) -> None:
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(where + message)
        self.line = line


MODE_KEYS = ("enable_thinking", "thinking_budget", "reasoning_effort")


def request_params(body: Mapping[str, Any]) -> dict[str, Any]:
    """Top-level request fields merged with any nested extension object (e.g. chat_template_kwargs)."""
    flat = {k: v for k, v in body.items() if k != "messages"}
    for v in body.values():
        if isinstance(v, dict):
            flat.update(v)
    return flat


def thinking_requested(params: Mapping[str, Any]) -> bool:
    if "enable_thinking" in params:
        return bool(params["enable_thinking"])
    if "reasoning_effort" in params:
        return params["reasoning_effort"] != "low"
    if "thinking_budget" in params:
        return bool(params["thinking_budget"])
    return True


@dataclass(frozen=True)
class Match:
    problem: str | None = None  # substring of the last user message
    system: str | None = None  # substring of the system message
    id: str | None = None  # metadata.query_id
    mode: Mapping[str, Any] | None = None  # subset of the mode fields
    think: bool | None = None  # family-agnostic "thinking on?"
    logprobs: bool | None = None

    def accepts(self, body: Mapping[str, Any]) -> bool:
        messages = body.get("messages") or []
        user = next((m.get("content", "") for m in reversed(messages) if m.get("role") == "user"), "")
        system = next((m.get("content", "") for m in messages if m.get("role") == "system"), None)
        params = request_params(body)
        if self.problem is not None and self.problem not in user:
            return False
        if self.system is not None and (system is None or self.system not in system):
            return False
        if self.id is not None and (body.get("metadata") or {}).get("query_id") != self.id:
            return False
        if self.mode is not None and any(params.get(k, _MISSING) != v for k, v in self.mode.items()):
            return False
        if self.think is not None and thinking_requested(params) != self.think:
            return False
        if self.logprobs is not None and bool(body.get("logprobs")) != self.logprobs:
            return False
        return True


_MISSING = object()


@dataclass(frozen=True)
class LogprobSpec:
    """How to fabricate per-token logprobs.

    Tokens are confident (one dominant candidate) unless listed in
    ``uncertain_at`` (indices over thinking+answer tokens) or containing one of
    ``uncertain_tokens``; uncertain tokens get ``k`` equally likely candidates.
    ``table`` gives explicit entries instead.
    """

    k: int = 20
    confident_logprob: float = -1e-4
    alternative_logprob: float = -20.0
    uncertain_at: tuple[int, ...] = ()
    uncertain_tokens: tuple[str, ...] = ()
    table: tuple[tuple[str, float, tuple[tuple[str, float], ...]], ...] | None = None

    def entries(self, pieces: list[str], request_k: int) -> list[dict[str, Any]]:
        if self.table is not None:
            return [
                {"token": t, "logprob": lp, "top_logprobs": [{"token": a, "logprob": b} for a, b in top[:request_k]]}
                for t, lp, top in self.table
            ]
        k = max(1, min(self.k, request_k))
        n = len(pieces)
        marked = {i % n for i in self.uncertain_at if -n <= i < n} if n else set()
        out = []
        for i, tok in enumerate(pieces):
            uncertain = i in marked or any(u in tok for u in self.uncertain_tokens)
            if uncertain:
                lp = -math.log(k)
                top = [{"token": tok, "logprob": lp}] + [{"token": f"<alt{j}>", "logprob": lp} for j in range(1, k)]
            else:
                lp = self.confident_logprob
                top = [{"token": tok, "logprob": lp}] + [
                    {"token": f"<alt{j}>", "logprob": self.alternative_logprob} for j in range(1, k)
                ]
            out.append({"token": tok, "logprob": lp, "top_logprobs": top})
        return out


@dataclass(frozen=True)
class Reply:
    thinking: str = ""
    answer: str = ""
    thinking_tokens: int | None = None
    answer_tokens: int | None = None
    report_split: bool = True
    think_open: str = "<think>"
    think_close: str = "</think>"
    logprobs: LogprobSpec = field(default_factory=LogprobSpec)

    def counts(self) -> tuple[int, int]:
        th = len(tokenize(self.thinking)) if self.thinking_tokens is None else self.thinking_tokens
        an = len(tokenize(self.answer)) if self.answer_tokens is None else self.answer_tokens
        return th, an


@dataclass(frozen=True)
class ErrorReply:
    status: int = 500
    message: str = "scripted failure"


@dataclass(frozen=True)
class ScriptEntry:
    match: Match
    replies: tuple[Reply, ...]
    latency_ms: int = 0
    fail_first: int = 0  # this many matching requests get HTTP 503 before replies start
    error: ErrorReply | None = None
    raw_body: str | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if not self.replies and self.error is None and self.raw_body is None:
            raise ValueError("entry needs a reply, replies, error or raw_body")


DEFAULT_REPLY = Reply(thinking="", answer="No scripted reply for this request.")


@dataclass(frozen=True)
class Script:
    entries: tuple[ScriptEntry, ...] = ()
    default: ScriptEntry = ScriptEntry(Match(), (DEFAULT_REPLY,), name="default")

    def find(self, body: Mapping[str, Any]) -> tuple[int | None, ScriptEntry]:
        for i, e in enumerate(self.entries):
            if e.match.accepts(body):
                return i, e
        return None, self.default


_MATCH_KEYS = {"problem", "system", "id", "mode", "think", "logprobs"}
_REPLY_KEYS = {"thinking", "answer", "usage", "report_split", "think_open", "think_close", "logprobs"}
_ENTRY_KEYS = {"match", "reply", "replies", "latency_ms", "fail_first", "error", "raw_body", "name", "default"}


def _nonneg_int(v: Any, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ValueError(f"{what} must be a non-negative integer")
    return v


def _logprob(v: Any, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v > 0:
        raise ValueError(f"{what} must be a finite log-probability")
    return float(v)


def _parse_logprobs(raw: Any) -> LogprobSpec:
    if raw is None:
        return LogprobSpec()
    if isinstance(raw, list):
        table = []
        for i, e in enumerate(raw):
            top = tuple((str(t), _logprob(lp, f"logprobs[{i}] candidate")) for t, lp in e.get("top", []))
            table.append((str(e["token"]), _logprob(e["logprob"], f"logprobs[{i}].logprob"), top))
        return LogprobSpec(table=tuple(table))
    if not isinstance(raw, dict):
        raise ValueError("logprobs must be an object or a list of entries")
    unknown = set(raw) - {"k", "confident_logprob", "alternative_logprob", "uncertain_at", "uncertain_tokens"}
    if unknown:
        raise ValueError(f"unknown logprobs key(s) {sorted(unknown)}")
    k = _nonneg_int(raw.get("k", 20), "logprobs.k")
    if k < 1:
        raise ValueError("logprobs.k must be >= 1")
    return LogprobSpec(
        k=k,
        confident_logprob=_logprob(raw.get("confident_logprob", -1e-4), "confident_logprob"),
        alternative_logprob=_logprob(raw.get("alternative_logprob", -20.0), "alternative_logprob"),
        uncertain_at=tuple(int(i) for i in raw.get("uncertain_at", ())),
        uncertain_tokens=tuple(str(t) for t in raw.get("uncertain_tokens", ())),
    )


def _parse_reply(raw: Any) -> Reply:
    if isinstance(raw, str):
        return Reply(answer=raw)
    if not isinstance(raw, dict):
        raise ValueError("reply must be an object or a string")
    unknown = set(raw) - _REPLY_KEYS
    if unknown:
        raise ValueError(f"unknown reply key(s) {sorted(unknown)}")
    usage = raw.get("usage") or {}
    th = usage.get("thinking_tokens")
    an = usage.get("answer_tokens")
    return Reply(
        thinking=str(raw.get("thinking", "")),
        answer=str(raw.get("answer", "")),
        thinking_tokens=None if th is None else _nonneg_int(th, "usage.thinking_tokens"),
        answer_tokens=None if an is None else _nonneg_int(an, "usage.answer_tokens"),
        report_split=bool(raw.get("report_split", True)),
        think_open=str(raw.get("think_open", "<think>")),
        think_close=str(raw.get("think_close", "</think>")),
        logprobs=_parse_logprobs(raw.get("logprobs")),
    )


def parse_entry(raw: Any) -> tuple[bool, ScriptEntry]:
    """Returns (is_default, entry)."""
    if not isinstance(raw, dict):
        raise ValueError("entry must be a JSON object")
    unknown = set(raw) - _ENTRY_KEYS
    if unknown:
        raise ValueError(f"unknown entry key(s) {sorted(unknown)}")
    m = raw.get("match") or {}
    if not isinstance(m, dict) or set(m) - _MATCH_KEYS:
        raise ValueError(f"match must be an object with keys from {sorted(_MATCH_KEYS)}")
    if m.get("mode") is not None and not isinstance(m["mode"], dict):
        raise ValueError("match.mode must be an object of mode fields")
    match = Match(
        problem=m.get("problem"),
        system=m.get("system"),
        id=None if m.get("id") is None else str(m["id"]),
        mode=m.get("mode"),
        think=m.get("think"),
        logprobs=m.get("logprobs"),
    )
    if "reply" in raw and "replies" in raw:
        raise ValueError("use either reply or replies, not both")
    replies = raw.get("replies", [raw["reply"]] if "reply" in raw else [])
    if not isinstance(replies, list):
        raise ValueError("replies must be a list")
    error = None
    if raw.get("error") is not None:
        e = raw["error"]
        error = ErrorReply(int(e.get("status", 500)), str(e.get("message", "scripted failure")))
    entry = ScriptEntry(
        match=match,
        replies=tuple(_parse_reply(r) for r in replies),
        latency_ms=_nonneg_int(raw.get("latency_ms", 0), "latency_ms"),
        fail_first=_nonneg_int(raw.get("fail_first", 0), "fail_first"),
        error=error,
        raw_body=raw.get("raw_body"),
        name=str(raw.get("name", "")),
    )
    return bool(raw.get("default", False)), entry


def _build(numbered: list[tuple[int, Any]], path: str | Path | None) -> Script:
    entries: list[ScriptEntry] = []
    default: ScriptEntry | None = None
    for lineno, raw in numbered:
        try:
            is_default, entry = parse_entry(raw)
        except (ValueError, KeyError, TypeError) as exc:
            raise FixtureError(path, lineno, str(exc)) from None
        if is_default:
            default = entry
        else:
            entries.append(entry)
    return Script(tuple(entries), default) if default is not None else Script(tuple(entries))


def script_from_dicts(items: list[Any]) -> Script:
    return _build(list(enumerate(items, 1)), "<entries>")


def script_from_fixture(path: str | Path) -> Script:
    """Parse and validate a fixture file; errors carry the offending line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FixtureError(None, None, f"cannot read fixture {path}: {exc.strerror or exc}") from exc
    numbered = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("//"):
            continue
        try:
            numbered.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise FixtureError(path, lineno, f"invalid JSON ({exc.msg})") from None
    return _build(numbered, path)


FIXTURE_DIR = Path(__file__).parent / "fixtures"


def shipped_fixture(name: str) -> Path:
    path = FIXTURE_DIR / f"{name}.jsonl"
    if not path.exists():
        raise FixtureError(None, None, f"no shipped fixture {name!r}")
    return path
