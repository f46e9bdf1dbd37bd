"""Parsing of judge-model replies (routing decisions and correctness verdicts)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from thinkswitch.core import ThinkingMode
from thinkswitch.profiles import Family, ModelProfile

BINARY_JUDGE_BUDGETS = frozenset({1024, 2048, 4096})
BUDGET_JUDGE_BUDGETS = frozenset({512, 1024, 2048, 4096})
EFFORT_LEVELS = ("high", "medium", "low")
MAX_SCAN_CHARS = 100_000


def _balanced_end(text: str, start: int) -> int | None:
    depth = 0
    in_string = escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
    return None


def extract_json_block(text: str) -> str | None:
    """Return the first brace-balanced ``{...}`` span in ``text``, or None."""
    text = text[:MAX_SCAN_CHARS]
    start = text.find("{")
    while start >= 0:
        end = _balanced_end(text, start)
        if end is not None:
            return text[start : end + 1]
        start = text.find("{", start + 1)
    return None


def extract_json_object(text: str) -> dict[str, Any] | None:
    block = extract_json_block(text)
    if block is None:
        return None
    try:
        obj = json.loads(block)
    except (ValueError, RecursionError):
        return None
    return obj if isinstance(obj, dict) else None


@dataclass(frozen=True)
class RoutingDecision:
    mode: ThinkingMode
    source: str  # "parsed" or "fallback"
    raw_judge_text: str
    reason: str = ""

    def to_event(self) -> dict[str, Any]:
        return {
            "event": "routing",
            "mode": self.mode.to_dict(),
            "source": self.source,
            "reason": self.reason,
            "raw_judge_text": self.raw_judge_text,
        }


class _Invalid(Exception):
    pass


def _mode_number(value: Any) -> int:
    if isinstance(value, bool):
        raise _Invalid("mode must be 1, 2 or 3")
    if isinstance(value, int) and value in (1, 2, 3):
        return value
    if isinstance(value, str) and value.strip() in ("1", "2", "3"):
        return int(value.strip())
    raise _Invalid(f"mode {value!r} not in 1/2/3")


def _budget_value(value: Any) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool):
        raise _Invalid("budget must be null or an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value.strip().isdigit():
        return int(value.strip())
    raise _Invalid(f"budget {value!r} is not an integer")


def _decide(obj: dict[str, Any], profile: ModelProfile) -> ThinkingMode:
    if profile.family is Family.EFFORT:
        level = obj.get("level")
        if not isinstance(level, str) or level.strip().lower() not in EFFORT_LEVELS:
            raise _Invalid(f"level {level!r} not in {EFFORT_LEVELS}")
        return ThinkingMode.effort(level.strip().lower())

    if "mode" not in obj:
        raise _Invalid("missing 'mode'")
    mode = _mode_number(obj["mode"])
    budget = _budget_value(obj.get("budget"))
    if mode in (1, 2):
        if budget is not None:
            raise _Invalid(f"mode {mode} takes budget null")
        if mode == 1:
            return profile.full_think_mode
        return profile.no_think_mode
    allowed = BUDGET_JUDGE_BUDGETS if profile.family is Family.BUDGET else BINARY_JUDGE_BUDGETS
    if budget not in allowed:
        raise _Invalid(f"mode 3 needs budget in {sorted(allowed)}, got {budget!r}")
    if not profile.accepts_budget_modes:
        return profile.full_think_mode
    return ThinkingMode.budget(budget)


def parse_judge_decision(text: str, profile: ModelProfile) -> RoutingDecision:
    """Turn a judge reply into a mode. Never raises: anything off-schema routes to full think."""
    if not isinstance(text, str):
        text = str(text)
    obj = extract_json_object(text)
    if obj is None:
        return RoutingDecision(profile.full_think_mode, "fallback", text, "no JSON object found")
    try:
        return RoutingDecision(_decide(obj, profile), "parsed", text)
    except _Invalid as exc:
        return RoutingDecision(profile.full_think_mode, "fallback", text, str(exc))


def parse_correct_verdict(text: str) -> bool | None:
    """``{"correct": true|false}`` somewhere in ``text``; None when absent or off-schema."""
    obj = extract_json_object(text)
    if obj is None:
        return None
    value = obj.get("correct")
    return value if isinstance(value, bool) else None
