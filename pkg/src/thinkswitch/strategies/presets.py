"""Parameterized presets for re-implemented external methods and fixed-tier baselines.

Each preset names a *base* executor and a parameter dict; shipped values
follow the published configurations and can be overridden from the run
config.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from thinkswitch.answers import answer_key
from thinkswitch.core import ModeKind, Query, StrategyOutcome, ThinkingMode, TokenLogprobs
from thinkswitch.gateway import CapabilityError
from thinkswitch.profiles import Family, ModelProfile
from thinkswitch.prompts import preset_prompt, render_user_message
from thinkswitch.strategies.runners import Run, StrategyContext, _entropy_two_pass, _fast_pass_entropies, strategy


class UnknownPresetError(KeyError):
    pass


@dataclass(frozen=True)
class PresetConfig:
    name: str
    base: str
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def with_parameters(self, **overrides: Any) -> PresetConfig:
        return PresetConfig(self.name, self.base, {**self.parameters, **overrides})


DEER_PATTERNS = (
    "Wait",
    "Alternatively",
    "Actually",
    "Let me reconsider",
    "On second thought",
    "Hmm",
    "No,",
    "But wait",
    "\n\n",
)

HDFLOW_CUES = (
    "prove",
    "show that",
    "find all",
    "how many",
    "maximum",
    "minimum",
    "largest",
    "smallest",
    "probability",
    "expected value",
    "integer",
    "sequence",
    "polynomial",
    "modulo",
    "remainder",
    "optimal",
    "complexity",
    "dynamic programming",
    "graph",
    "constraints",
)

SHIPPED_PRESETS: dict[str, PresetConfig] = {
    "s1_low": PresetConfig("s1_low", "budget", {"budget": 1024}),
    "s1_medium": PresetConfig("s1_medium", "budget", {"budget": 4096}),
    "s1_high": PresetConfig("s1_high", "budget", {"budget": 16384}),
    "tale": PresetConfig(
        "tale",
        "tale",
        {"budgets": {"simple": 100, "medium": 500, "hard": 1500}, "fallback": "hard", "estimate_max_tokens": 256},
    ),
    "budget_guidance_low": PresetConfig("budget_guidance_low", "budget_prompt", {"budget": 128}),
    "budget_guidance_medium": PresetConfig("budget_guidance_medium", "budget_prompt", {"budget": 512}),
    "budget_guidance_high": PresetConfig("budget_guidance_high", "budget_prompt", {"budget": 2048}),
    "sot": PresetConfig(
        "sot",
        "prompt_swap",
        {"prompts": {"math": "sot_math", "science": "sot_science", "code": "sot_code"}, "mode": "no_think"},
    ),
    "cod": PresetConfig(
        "cod",
        "prompt_swap",
        {
            "prompts": {"math": "cod_math", "science": "cod_science", "code": "cod_code"},
            "mode": "no_think",
            "max_words_per_step": 5,
        },
    ),
    "dynathink": PresetConfig("dynathink", "dynathink", {"confidence_threshold": 0.7, "logprob_k": 20}),
    "deer": PresetConfig(
        "deer",
        "deer",
        {
            "confidence_threshold": 0.85,
            "min_thinking_tokens": 50,
            "window": 16,
            "logprob_k": 10,
            "patterns": list(DEER_PATTERNS),
        },
    ),
    "rasc": PresetConfig(
        "rasc",
        "rasc",
        {
            "max_samples": 8,
            "min_samples": 3,
            "consistency_threshold": 0.6,
            "temperature": 0.7,
            "consistency_weight": 0.7,
            "brevity_weight": 0.3,
        },
    ),
    "hdflow": PresetConfig(
        "hdflow",
        "hdflow",
        {
            "threshold": 0.35,
            "weights": {"length": 0.4, "symbols": 0.3, "cues": 0.3},
            "length_scale": 120,
            "symbol_scale": 25,
            "cue_scale": 3,
            "cues": list(HDFLOW_CUES),
        },
    ),
    "mixreasoning": PresetConfig("mixreasoning", "spec_entropy", {"threshold": None}),
    "budget_aware_low": PresetConfig("budget_aware_low", "fixed_mode", {"mode": "low"}),
    "budget_aware_medium": PresetConfig("budget_aware_medium", "fixed_mode", {"mode": "medium"}),
    "budget_aware_high": PresetConfig("budget_aware_high", "fixed_mode", {"mode": "high"}),
}


def _budget_mode(profile: ModelProfile, budget: int) -> ThinkingMode:
    if not profile.accepts_budget_modes:
        raise CapabilityError(f"{profile.name} ({profile.family.value}) has no numeric thinking budget")
    return ThinkingMode.budget(min(budget, profile.max_output_tokens))


def check_capability(preset: PresetConfig, profile: ModelProfile) -> None:
    """Raise :class:`CapabilityError` when ``profile`` cannot run ``preset`` at all."""
    p = preset.parameters
    if preset.base == "budget":
        _budget_mode(profile, p["budget"])
    elif preset.base == "fixed_mode":
        mode = ThinkingMode.parse(p["mode"])
        if mode.kind is ModeKind.BUDGET:
            _budget_mode(profile, mode.budget_tokens)
        elif mode.kind is not profile.mode_kind:
            raise CapabilityError(f"{preset.name} needs a {mode.kind.value} mode; {profile.name} is {profile.family.value}")
    elif preset.base == "deer" and profile.logprob_k < p["logprob_k"]:
        raise CapabilityError(f"deer needs top-{p['logprob_k']} logprobs; {profile.name} provides {profile.logprob_k}")
    elif preset.base not in BASES:
        raise UnknownPresetError(f"preset {preset.name!r} has unknown base {preset.base!r}")


def _mode_param(profile: ModelProfile, text: str) -> ThinkingMode:
    if text == "no_think":
        return profile.no_think_mode
    if text == "think":
        return profile.full_think_mode
    return ThinkingMode.parse(text)


def _base_budget(r: Run, p: Mapping[str, Any]) -> None:
    r.call("solve", _budget_mode(r.ctx.profile, p["budget"]), render_user_message(r.q, r.ctx.prompts))


def _base_fixed_mode(r: Run, p: Mapping[str, Any]) -> None:
    r.call("solve", _mode_param(r.ctx.profile, p["mode"]), render_user_message(r.q, r.ctx.prompts))


def _base_budget_prompt(r: Run, p: Mapping[str, Any]) -> None:
    profile = r.ctx.profile
    budget = p["budget"]
    # binary endpoints that take a budget also get it as a soft constraint
    mode = ThinkingMode.budget(budget) if profile.accepts_budget else profile.full_think_mode
    system = preset_prompt("budget_guidance_system", r.ctx.prompts, budget=budget)
    r.call("solve", mode, render_user_message(r.q, r.ctx.prompts), system)


def _base_prompt_swap(r: Run, p: Mapping[str, Any]) -> None:
    system = preset_prompt(p["prompts"][r.q.domain], r.ctx.prompts)
    r.call("solve", _mode_param(r.ctx.profile, p.get("mode", "no_think")), render_user_message(r.q, r.ctx.prompts), system)


_TALE_LEVEL = re.compile(r"\b(simple|medium|hard)\b", re.IGNORECASE)


def _base_tale(r: Run, p: Mapping[str, Any]) -> None:
    ctx = r.ctx
    estimate = r.call(
        "estimate",
        ctx.profile.no_think_mode,
        preset_prompt("tale_estimate_user", ctx.prompts, problem=r.q.problem),
        max_tokens=p.get("estimate_max_tokens", 256),
    )
    m = _TALE_LEVEL.search(estimate.answer_text)
    level = m.group(1).lower() if m else p["fallback"]
    budget = p["budgets"][level]
    r.event("budget_estimate", level=level, budget=budget, parsed=m is not None)
    system = preset_prompt("tale_solve_system", ctx.prompts, budget=budget)
    r.call("solve", ctx.profile.full_think_mode, render_user_message(r.q, ctx.prompts), system)


def top1_probability(tok: TokenLogprobs) -> float:
    if tok.top:
        return math.exp(max(lp for _, lp in tok.top))
    return math.exp(tok.logprob)


def _base_dynathink(r: Run, p: Mapping[str, Any]) -> None:
    ctx = r.ctx
    user = render_user_message(r.q, ctx.prompts)
    fast = r.call("fast", ctx.profile.no_think_mode, user, logprob_k=p["logprob_k"])
    if fast.per_token_logprobs is None:
        raise CapabilityError("dynathink needs per-token logprobs")
    probs = [top1_probability(t) for t in fast.per_token_logprobs]
    confidence = math.fsum(probs) / len(probs) if probs else 0.0
    regenerate = confidence < p["confidence_threshold"]
    r.event("confidence_probe", confidence=confidence, threshold=p["confidence_threshold"], regenerate=regenerate)
    if regenerate:
        r.call("rethink", ctx.profile.full_think_mode, user)


def find_early_exit(
    tokens: Sequence[TokenLogprobs],
    patterns: Sequence[str],
    *,
    min_tokens: int,
    window: int,
    threshold: float,
) -> tuple[int, str, float] | None:
    """First (token index, pattern, window confidence) where reasoning may stop.

    A candidate is a token at which one of ``patterns`` begins, at or after
    ``min_tokens``, whose preceding ``window`` tokens have mean top-1
    probability of at least ``threshold``.
    """
    text = "".join(t.token for t in tokens)
    starts = []
    pos = 0
    for t in tokens:
        starts.append(pos)
        pos += len(t.token)
    char_to_token: dict[int, int] = {}
    for i, s in enumerate(starts):
        for c in range(s, s + max(1, len(tokens[i].token))):
            char_to_token.setdefault(c, i)
    hits: list[tuple[int, str]] = []
    for pat in patterns:
        for m in re.finditer(re.escape(pat), text):
            idx = char_to_token.get(m.start())
            if idx is not None:
                hits.append((idx, pat))
    for idx, pat in sorted(hits):
        if idx < max(min_tokens, 1):
            continue
        prev = tokens[max(0, idx - window) : idx]
        conf = math.fsum(top1_probability(t) for t in prev) / len(prev)
        if conf >= threshold:
            return idx, pat, conf
    return None


def _base_deer(r: Run, p: Mapping[str, Any]) -> None:
    ctx = r.ctx
    user = render_user_message(r.q, ctx.prompts)
    think = r.call("think", ctx.profile.full_think_mode, user, logprob_k=p["logprob_k"])
    if think.per_token_logprobs is None:
        raise CapabilityError("deer needs per-token logprobs")
    thinking = think.per_token_logprobs[: think.thinking_tokens]
    hit = find_early_exit(
        thinking,
        p["patterns"],
        min_tokens=p["min_thinking_tokens"],
        window=p["window"],
        threshold=p["confidence_threshold"],
    )
    if hit is None:
        r.event("early_exit", triggered=False)
        return
    idx, pattern, conf = hit
    # replace the full think pass by its prefix up to the exit point
    r.passes.pop()
    kept = thinking[:idx]
    reasoning = "".join(t.token for t in kept)
    truncated = type(think)(
        thinking_text=reasoning,
        answer_text="",
        thinking_tokens=idx,
        answer_tokens=0,
        total_tokens=idx,
        split_reported=True,
        per_token_logprobs=tuple(kept),
        finish_reason="early_exit",
    )
    r.record("think", ctx.profile.full_think_mode, truncated)
    r.event(
        "early_exit",
        triggered=True,
        token_index=idx,
        pattern=pattern,
        confidence=conf,
        generated_tokens=think.total_tokens,
    )
    answer_user = preset_prompt("deer_answer_user", ctx.prompts, user=user, reasoning=reasoning)
    r.call("answer", ctx.profile.no_think_mode, answer_user)


def rasc_scores(
    keys: Sequence[str],
    tokens: Sequence[int],
    consistency_weight: float = 0.7,
    brevity_weight: float = 0.3,
) -> list[float]:
    """Score each sample by answer agreement and relative brevity.

    consistency = share of samples with the same answer key;
    brevity = shortest sample length / this sample's length.
    """
    n = len(keys)
    counts = Counter(keys)
    shortest = min(tokens)
    scores = []
    for key, t in zip(keys, tokens):
        brevity = 1.0 if t == 0 else shortest / t
        scores.append(consistency_weight * counts[key] / n + brevity_weight * brevity)
    return scores


def rasc_select(keys: Sequence[str], tokens: Sequence[int], consistency_weight: float = 0.7, brevity_weight: float = 0.3) -> int:
    scores = rasc_scores(keys, tokens, consistency_weight, brevity_weight)
    best = max(scores)
    return scores.index(best)


def _base_rasc(r: Run, p: Mapping[str, Any]) -> None:
    ctx = r.ctx
    user = render_user_message(r.q, ctx.prompts)
    keys: list[str] = []
    for i in range(p["max_samples"]):
        trace = r.call(f"sample_{i}", ctx.profile.full_think_mode, user, temperature=p["temperature"])
        keys.append(answer_key(r.q.domain, trace.answer_text))
        n = len(keys)
        if n >= p["min_samples"]:
            agreement = Counter(keys).most_common(1)[0][1] / n
            if agreement >= p["consistency_threshold"]:
                r.event("rasc_stop", samples=n, agreement=agreement, early=n < p["max_samples"])
                break
    else:
        r.event("rasc_stop", samples=len(keys), agreement=Counter(keys).most_common(1)[0][1] / len(keys), early=False)
    tokens = [ps.trace.total_tokens for ps in r.passes]
    r.selected = rasc_select(keys, tokens, p["consistency_weight"], p["brevity_weight"])
    r.event("rasc_select", index=r.selected, keys=keys)


def hdflow_score(problem: str, p: Mapping[str, Any]) -> float:
    text = problem.lower()
    words = len(problem.split())
    symbols = len(re.findall(r"[=+\-*/^<>≤≥∑∫√]|\\[a-zA-Z]+", problem))
    cues = sum(1 for c in p["cues"] if c in text)
    w = p["weights"]
    return (
        w["length"] * min(words / p["length_scale"], 1.0)
        + w["symbols"] * min(symbols / p["symbol_scale"], 1.0)
        + w["cues"] * min(cues / p["cue_scale"], 1.0)
    )


def _base_hdflow(r: Run, p: Mapping[str, Any]) -> None:
    ctx = r.ctx
    score = hdflow_score(r.q.problem, p)
    mode = ctx.profile.full_think_mode if score >= p["threshold"] else ctx.profile.no_think_mode
    r.event("routing", mode=mode.to_dict(), source="rules", score=score, threshold=p["threshold"])
    r.call("solve", mode, render_user_message(r.q, ctx.prompts))


def _base_spec_entropy(r: Run, p: Mapping[str, Any]) -> None:
    threshold = p.get("threshold")
    if threshold is not None:
        r.ctx = r.ctx.with_rule(threshold=threshold)
    _entropy_two_pass(r)


BASES: dict[str, Callable[[Run, Mapping[str, Any]], None]] = {
    "budget": _base_budget,
    "fixed_mode": _base_fixed_mode,
    "budget_prompt": _base_budget_prompt,
    "prompt_swap": _base_prompt_swap,
    "tale": _base_tale,
    "dynathink": _base_dynathink,
    "deer": _base_deer,
    "rasc": _base_rasc,
    "hdflow": _base_hdflow,
    "spec_entropy": _base_spec_entropy,
}


def get_preset(name: str, overrides: Mapping[str, Mapping[str, Any]] | None = None) -> PresetConfig:
    """Look up a shipped or user-defined preset.

    ``overrides`` maps preset names to either parameter overrides for a shipped
    preset or a full definition ``{"base": ..., "parameters": {...}}``.
    """
    overrides = overrides or {}
    user = overrides.get(name)
    if user is not None and "base" in user:
        return PresetConfig(name, user["base"], dict(user.get("parameters", {})))
    if name not in SHIPPED_PRESETS:
        raise UnknownPresetError(f"unknown preset {name!r}; shipped: {sorted(SHIPPED_PRESETS)}")
    preset = SHIPPED_PRESETS[name]
    if user:
        preset = preset.with_parameters(**user.get("parameters", user))
    return preset


def run_preset(q: Query, ctx: StrategyContext, preset: PresetConfig) -> StrategyOutcome:
    check_capability(preset, ctx.profile)
    base = BASES[preset.base]

    @strategy(preset.name)
    def body(r: Run) -> None:
        base(r, preset.parameters)

    return body(q, ctx)


def preset_runner(preset: PresetConfig) -> Callable[[Query, StrategyContext], StrategyOutcome]:
    def run(q: Query, ctx: StrategyContext) -> StrategyOutcome:
        return run_preset(q, ctx, preset)

    run.strategy_name = preset.name  # type: ignore[attr-defined]
    run.preset = preset  # type: ignore[attr-defined]
    return run


__all__ = [
    "BASES",
    "DEER_PATTERNS",
    "Family",
    "PresetConfig",
    "SHIPPED_PRESETS",
    "UnknownPresetError",
    "check_capability",
    "find_early_exit",
    "get_preset",
    "hdflow_score",
    "preset_runner",
    "rasc_scores",
    "rasc_select",
    "run_preset",
    "top1_probability",
]
