"""Model-family profiles: native mode interface plus per-model constants."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any

from thinkswitch.core import ModeKind, ThinkingMode

MAX_OUTPUT_TOKENS = 32768


class Family(str, enum.Enum):
    BINARY = "binary-switch"
    EFFORT = "discrete-effort"
    BUDGET = "numeric-budget"


_FAMILY_KIND = {Family.BINARY: ModeKind.BINARY, Family.EFFORT: ModeKind.EFFORT, Family.BUDGET: ModeKind.BUDGET}


@dataclass(frozen=True)
class ModelProfile:
    name: str
    family: Family
    model_name: str
    entropy_threshold: float
    logprob_k: int = 20
    trigger_lexicon_id: str = "core"
    prompt_set_id: str = "default"
    max_output_tokens: int = MAX_OUTPUT_TOKENS
    # binary family only: endpoint also takes a numeric thinking budget
    accepts_budget: bool = False
    think_open: str = "<think>"
    think_close: str = "</think>"
    # nests mode fields under this request key (e.g. chat_template_kwargs); None = top level
    extension_root: str | None = None
    thinking_flag_field: str = "enable_thinking"
    budget_field: str = "thinking_budget"
    effort_field: str = "reasoning_effort"
    logprobs_flag_field: str = "logprobs"
    logprobs_count_field: str = "top_logprobs"
    pt_mode: ThinkingMode | None = None
    extra_keywords: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if not 0 < self.entropy_threshold < 1:
            raise ValueError(f"entropy threshold must lie in (0, 1), got {self.entropy_threshold}")
        if self.logprob_k < 1:
            raise ValueError("logprob_k must be >= 1")
        if self.accepts_budget and self.family is not Family.BINARY:
            raise ValueError("accepts_budget only applies to binary-switch profiles")

    @property
    def mode_kind(self) -> ModeKind:
        return _FAMILY_KIND[self.family]

    @property
    def accepts_budget_modes(self) -> bool:
        return self.family is Family.BUDGET or self.accepts_budget

    @property
    def full_think_mode(self) -> ThinkingMode:
        if self.family is Family.BINARY:
            return ThinkingMode.think()
        if self.family is Family.EFFORT:
            return ThinkingMode.effort("high")
        return ThinkingMode.budget(self.max_output_tokens)

    @property
    def no_think_mode(self) -> ThinkingMode:
        if self.family is Family.BINARY:
            return ThinkingMode.no_think()
        if self.family is Family.EFFORT:
            return ThinkingMode.effort("low")
        return ThinkingMode.budget(0)

    @property
    def prompt_tuning_mode(self) -> ThinkingMode:
        if self.pt_mode is not None:
            return self.pt_mode
        if self.family is Family.EFFORT:
            return ThinkingMode.effort("medium")
        return self.full_think_mode

    @property
    def native_modes(self) -> tuple[ThinkingMode, ...]:
        if self.family is Family.BINARY:
            return (ThinkingMode.think(), ThinkingMode.no_think())
        if self.family is Family.EFFORT:
            return tuple(ThinkingMode.effort(v) for v in ("low", "medium", "high"))
        return (ThinkingMode.budget(0), ThinkingMode.budget(self.max_output_tokens))

    def with_overrides(self, **changes: Any) -> ModelProfile:
        if "pt_mode" in changes and isinstance(changes["pt_mode"], str):
            changes["pt_mode"] = ThinkingMode.parse(changes["pt_mode"])
        if "extra_keywords" in changes:
            changes["extra_keywords"] = tuple(changes["extra_keywords"])
        return replace(self, **changes)


SHIPPED_PROFILES: dict[str, ModelProfile] = {
    "qwen3.5": ModelProfile(
        name="qwen3.5",
        family=Family.BINARY,
        model_name="qwen3.5-9b",
        entropy_threshold=0.10,
        accepts_budget=True,
        extension_root="chat_template_kwargs",
    ),
    "gpt-oss": ModelProfile(
        name="gpt-oss",
        family=Family.EFFORT,
        model_name="gpt-oss-20b",
        entropy_threshold=0.08,
    ),
    "seed-oss": ModelProfile(
        name="seed-oss",
        family=Family.BUDGET,
        model_name="seed-oss-36b-instruct",
        entropy_threshold=0.06,
        think_open="<seed:think>",
        think_close="</seed:think>",
        extension_root="chat_template_kwargs",
    ),
}


def get_profile(name: str, overrides: dict[str, Any] | None = None) -> ModelProfile:
    try:
        profile = SHIPPED_PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; shipped: {sorted(SHIPPED_PROFILES)}") from None
    return profile.with_overrides(**overrides) if overrides else profile


def profile_from_dict(data: dict[str, Any]) -> ModelProfile:
    """Build a user-defined profile, optionally extending a shipped one via ``base``."""
    data = dict(data)
    base = data.pop("base", None)
    if base is not None:
        return get_profile(base, data)
    if "pt_mode" in data and isinstance(data["pt_mode"], str):
        data["pt_mode"] = ThinkingMode.parse(data["pt_mode"])
    if "extra_keywords" in data:
        data["extra_keywords"] = tuple(data["extra_keywords"])
    return ModelProfile(**data)
