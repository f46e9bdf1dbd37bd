"""Mode-selection strategies: baselines, the switching strategies and external-method presets."""

from __future__ import annotations

from typing import Any, Mapping

from thinkswitch.profiles import ModelProfile
from thinkswitch.prompts import load_prompt_set
from thinkswitch.strategies.entropy import EscalationRule, should_escalate, token_entropy
from thinkswitch.strategies.judge import RoutingDecision, parse_correct_verdict, parse_judge_decision
from thinkswitch.strategies.presets import (
    SHIPPED_PRESETS,
    PresetConfig,
    UnknownPresetError,
    check_capability,
    get_preset,
    preset_runner,
)
from thinkswitch.strategies.runners import ALIASES, STRATEGIES, Completer, StrategyContext, StrategyFn
from thinkswitch.strategies.triggers import TriggerLexicon, load_lexicon, scan_triggers


class UnknownStrategyError(KeyError):
    def __init__(self, name: str, known: list[str]) -> None:
        super().__init__(name)
        self.name = name
        self.known = known

    def __str__(self) -> str:
        return f"unknown strategy {self.name!r}; known: {', '.join(self.known)}"


def strategy_names(user_presets: Mapping[str, Any] | None = None) -> list[str]:
    return sorted({*STRATEGIES, *SHIPPED_PRESETS, *(user_presets or {})})


def resolve_strategy(name: str, user_presets: Mapping[str, Mapping[str, Any]] | None = None) -> StrategyFn:
    """Map a strategy or preset name to a runner ``(query, ctx) -> StrategyOutcome``."""
    key = ALIASES.get(name, name)
    if key in STRATEGIES and key not in (user_presets or {}):
        return STRATEGIES[key]
    try:
        return preset_runner(get_preset(key, user_presets))
    except UnknownPresetError:
        raise UnknownStrategyError(name, strategy_names(user_presets)) from None


def validate_strategy_for_profile(
    name: str, profile: ModelProfile, user_presets: Mapping[str, Mapping[str, Any]] | None = None
) -> None:
    """Raise early when a preset cannot run on ``profile`` (e.g. S1 on an effort-tier model)."""
    runner = resolve_strategy(name, user_presets)
    preset = getattr(runner, "preset", None)
    if preset is not None:
        check_capability(preset, profile)


def build_context(
    client: Completer,
    *,
    prompt_set: str | None = None,
    lexicon_id: str | None = None,
    entropy_threshold: float | None = None,
    min_count: int = 3,
    min_fraction: float = 0.05,
    logprob_k: int | None = None,
    max_output_tokens: int | None = None,
    judge_max_tokens: int = 256,
    temperature: float = 0.0,
) -> StrategyContext:
    profile = client.profile
    rule = EscalationRule(
        threshold=profile.entropy_threshold if entropy_threshold is None else entropy_threshold,
        min_count=min_count,
        min_fraction=min_fraction,
        k=profile.logprob_k if logprob_k is None else logprob_k,
    )
    return StrategyContext(
        client=client,
        prompts=load_prompt_set(prompt_set or profile.prompt_set_id),
        lexicon=load_lexicon(lexicon_id or profile.trigger_lexicon_id),
        rule=rule,
        max_output_tokens=max_output_tokens or profile.max_output_tokens,
        judge_max_tokens=judge_max_tokens,
        temperature=temperature,
    )


__all__ = [
    "EscalationRule",
    "PresetConfig",
    "RoutingDecision",
    "SHIPPED_PRESETS",
    "STRATEGIES",
    "StrategyContext",
    "TriggerLexicon",
    "UnknownStrategyError",
    "build_context",
    "load_lexicon",
    "parse_correct_verdict",
    "parse_judge_decision",
    "resolve_strategy",
    "scan_triggers",
    "should_escalate",
    "strategy_names",
    "token_entropy",
    "validate_strategy_for_profile",
]
