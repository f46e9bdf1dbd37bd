"""Domain types shared across the package.

Everything here is immutable once built so outcomes can be handed between
worker threads without copying.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from thinkswitch.profiles import ModelProfile

DOMAINS = ("math", "science", "code")


class ModeKind(str, enum.Enum):
    BINARY = "binary"
    EFFORT = "effort"
    BUDGET = "budget"


BINARY_VALUES = ("think", "no_think")
EFFORT_VALUES = ("low", "medium", "high")


@dataclass(frozen=True)
class ThinkingMode:
    """Reasoning-depth control: a think switch, an effort tier or a token budget.

    Use the ``think``/``no_think``/``effort``/``budget`` constructors rather than
    the raw initializer.
    """

    kind: ModeKind
    value: str | None = None
    budget_tokens: int | None = None

    def __post_init__(self) -> None:
        kind = ModeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ModeKind.BUDGET:
            if self.value is not None:
                raise ValueError("budget mode carries no value")
            if not isinstance(self.budget_tokens, int) or isinstance(self.budget_tokens, bool):
                raise ValueError("budget mode needs an integer budget")
            if self.budget_tokens < 0:
                raise ValueError(f"budget must be non-negative, got {self.budget_tokens}")
            return
        if self.budget_tokens is not None:
            raise ValueError(f"{kind.value} mode carries no budget")
        allowed = BINARY_VALUES if kind is ModeKind.BINARY else EFFORT_VALUES
        if self.value not in allowed:
            raise ValueError(f"{kind.value} mode value must be one of {allowed}, got {self.value!r}")

    @classmethod
    def think(cls) -> ThinkingMode:
        return cls(ModeKind.BINARY, "think")

    @classmethod
    def no_think(cls) -> ThinkingMode:
        return cls(ModeKind.BINARY, "no_think")

    @classmethod
    def effort(cls, level: str) -> ThinkingMode:
        return cls(ModeKind.EFFORT, level)

    @classmethod
    def budget(cls, tokens: int) -> ThinkingMode:
        return cls(ModeKind.BUDGET, None, tokens)

    def label(self) -> str:
        if self.kind is ModeKind.BUDGET:
            return f"budget:{self.budget_tokens}"
        return f"{self.kind.value}:{self.value}"

    def to_dict(self) -> dict[str, Any]:
        if self.kind is ModeKind.BUDGET:
            return {"kind": "budget", "budget": self.budget_tokens}
        return {"kind": self.kind.value, "value": self.value}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ThinkingMode:
        kind = ModeKind(data["kind"])
        if kind is ModeKind.BUDGET:
            return cls.budget(data["budget"])
        return cls(kind, data["value"])

    @classmethod
    def parse(cls, text: str) -> ThinkingMode:
        """Parse the short form used on the command line: ``think``, ``high``, ``budget:512``."""
        text = text.strip().lower()
        if text in BINARY_VALUES or text == "nothink":
            return cls(ModeKind.BINARY, "no_think" if text == "nothink" else text)
        if text in EFFORT_VALUES:
            return cls.effort(text)
        if text.startswith("budget:"):
            return cls.budget(int(text.split(":", 1)[1]))
        if ":" in text:
            kind, value = text.split(":", 1)
            return cls(ModeKind(kind), value)
        raise ValueError(f"cannot parse thinking mode {text!r}")


def validate_mode(mode: ThinkingMode, profile: ModelProfile) -> bool:
    """True iff ``profile`` can express ``mode`` natively."""
    if mode.kind is ModeKind.BUDGET:
        if not profile.accepts_budget_modes:
            return False
        return 0 <= mode.budget_tokens <= profile.max_output_tokens
    return mode.kind is profile.mode_kind


@dataclass(frozen=True)
class Query:
    id: str
    domain: str
    problem: str
    reference: str
    grader_payload: Any = None

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}; expected one of {DOMAINS}")


@dataclass(frozen=True)
class TokenLogprobs:
    """One generated token with its top-k alternatives (token, logprob)."""

    token: str
    logprob: float
    top: tuple[tuple[str, float], ...]

    def to_dict(self) -> dict[str, Any]:
        return {"token": self.token, "logprob": self.logprob, "top": [list(c) for c in self.top]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TokenLogprobs:
        return cls(data["token"], float(data["logprob"]), tuple((t, float(lp)) for t, lp in data["top"]))


@dataclass(frozen=True)
class ResponseTrace:
    """A normalized model response.

    ``split_reported`` is False when the endpoint gave only a total and the
    thinking/answer split was estimated locally.
    """

    thinking_text: str
    answer_text: str
    thinking_tokens: int
    answer_tokens: int
    total_tokens: int
    split_reported: bool = True
    per_token_logprobs: tuple[TokenLogprobs, ...] | None = None
    finish_reason: str | None = None

    def __post_init__(self) -> None:
        if min(self.thinking_tokens, self.answer_tokens, self.total_tokens) < 0:
            raise ValueError("token counts must be non-negative")
        if self.split_reported and self.thinking_tokens + self.answer_tokens != self.total_tokens:
            raise ValueError(
                f"reported split {self.thinking_tokens}+{self.answer_tokens} != total {self.total_tokens}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "thinking_text": self.thinking_text,
            "answer_text": self.answer_text,
            "thinking_tokens": self.thinking_tokens,
            "answer_tokens": self.answer_tokens,
            "total_tokens": self.total_tokens,
            "split_reported": self.split_reported,
            "per_token_logprobs": (
                None if self.per_token_logprobs is None else [t.to_dict() for t in self.per_token_logprobs]
            ),
            "finish_reason": self.finish_reason,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ResponseTrace:
        lps = data.get("per_token_logprobs")
        return cls(
            thinking_text=data["thinking_text"],
            answer_text=data["answer_text"],
            thinking_tokens=data["thinking_tokens"],
            answer_tokens=data["answer_tokens"],
            total_tokens=data["total_tokens"],
            split_reported=data.get("split_reported", True),
            per_token_logprobs=None if lps is None else tuple(TokenLogprobs.from_dict(t) for t in lps),
            finish_reason=data.get("finish_reason"),
        )


@dataclass(frozen=True)
class Pass:
    """One model call made by a strategy."""

    role: str
    mode: ThinkingMode
    trace: ResponseTrace

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "mode": self.mode.to_dict(), "trace": self.trace.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Pass:
        return cls(data["role"], ThinkingMode.from_dict(data["mode"]), ResponseTrace.from_dict(data["trace"]))


@dataclass(frozen=True)
class StrategyOutcome:
    query_id: str
    strategy_name: str
    passes: tuple[Pass, ...] = ()
    decision_log: tuple[dict[str, Any], ...] = ()
    failed: bool = False
    error: str | None = None
    error_type: str | None = None
    # set only by sampling strategies that pick a winner among their passes
    selected_pass: int | None = None

    def __post_init__(self) -> None:
        if self.selected_pass is not None and not 0 <= self.selected_pass < len(self.passes):
            raise ValueError(f"selected_pass {self.selected_pass} out of range")

    @property
    def total_tokens(self) -> int:
        return sum(p.trace.total_tokens for p in self.passes)

    @property
    def final_trace(self) -> ResponseTrace | None:
        if not self.passes:
            return None
        return self.passes[-1 if self.selected_pass is None else self.selected_pass].trace

    @property
    def final_answer(self) -> str:
        trace = self.final_trace
        return "" if trace is None else trace.answer_text

    def events(self, kind: str) -> list[dict[str, Any]]:
        return [e for e in self.decision_log if e.get("event") == kind]

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "strategy_name": self.strategy_name,
            "passes": [p.to_dict() for p in self.passes],
            "decision_log": list(self.decision_log),
            "final_answer": self.final_answer,
            "total_tokens": self.total_tokens,
            "failed": self.failed,
            "error": self.error,
            "error_type": self.error_type,
            "selected_pass": self.selected_pass,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StrategyOutcome:
        out = cls(
            query_id=data["query_id"],
            strategy_name=data["strategy_name"],
            passes=tuple(Pass.from_dict(p) for p in data["passes"]),
            decision_log=tuple(data.get("decision_log", ())),
            failed=data.get("failed", False),
            error=data.get("error"),
            error_type=data.get("error_type"),
            selected_pass=data.get("selected_pass"),
        )
        if "total_tokens" in data and data["total_tokens"] != out.total_tokens:
            raise ValueError(f"record for {out.query_id}: total_tokens does not equal the pass sum")
        return out


class ModeLabel(str, enum.Enum):
    THINK = "think"
    NOTHINK = "nothink"
    BRIEF_THINK = "brief_think"


# Post-hoc labelling thresholds: <10 is nothink, >100 is think, 10..100 is brief.
NOTHINK_BELOW = 10
THINK_ABOVE = 100


def classify_mode(thinking_tokens: int) -> ModeLabel:
    if thinking_tokens > THINK_ABOVE:
        return ModeLabel.THINK
    if thinking_tokens < NOTHINK_BELOW:
        return ModeLabel.NOTHINK
    return ModeLabel.BRIEF_THINK


@dataclass(frozen=True)
class EvalRecord:
    query_id: str
    dataset: str
    strategy_name: str
    correct: bool
    total_tokens: int
    failed: bool = False
    grade_source: str | None = None
    error: str | None = None
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.failed and self.correct:
            raise ValueError("a failed record cannot be correct")
        if self.total_tokens < 0:
            raise ValueError("total_tokens must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "dataset": self.dataset,
            "strategy_name": self.strategy_name,
            "correct": self.correct,
            "total_tokens": self.total_tokens,
            "failed": self.failed,
            "grade_source": self.grade_source,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> EvalRecord:
        return cls(
            query_id=str(data["query_id"]),
            dataset=data["dataset"],
            strategy_name=data["strategy_name"],
            correct=bool(data["correct"]),
            total_tokens=int(data["total_tokens"]),
            failed=bool(data.get("failed", False)),
            grade_source=data.get("grade_source"),
            error=data.get("error"),
        )
