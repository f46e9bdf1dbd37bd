"""Fixed baselines and the three training-free switching strategies."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, replace
from typing import Any, Callable, Protocol

from thinkswitch.core import Pass, Query, ResponseTrace, StrategyOutcome, ThinkingMode, classify_mode
from thinkswitch.gateway import JUDGE_MAX_TOKENS, CapabilityError, CompletionRequest, GatewayError
from thinkswitch.profiles import MAX_OUTPUT_TOKENS, ModelProfile
from thinkswitch.prompts import (
    PromptSet,
    pt_system_prompt,
    render_judge_messages,
    render_pt_user_message,
    render_user_message,
)
from thinkswitch.strategies.entropy import EscalationRule, entropy_summary, should_escalate, trace_entropies
from thinkswitch.strategies.judge import parse_judge_decision
from thinkswitch.strategies.triggers import TriggerLexicon, scan_triggers

logger = logging.getLogger(__name__)


class Completer(Protocol):
    profile: ModelProfile

    def complete(self, request: CompletionRequest) -> ResponseTrace: ...


@dataclass(frozen=True)
class StrategyContext:
    client: Completer
    prompts: PromptSet
    lexicon: TriggerLexicon
    rule: EscalationRule
    max_output_tokens: int = MAX_OUTPUT_TOKENS
    judge_max_tokens: int = JUDGE_MAX_TOKENS
    temperature: float = 0.0

    @property
    def profile(self) -> ModelProfile:
        return self.client.profile

    def with_rule(self, **changes: Any) -> StrategyContext:
        return replace(self, rule=replace(self.rule, **changes))


class Run:
    """Accumulates the passes and decision events of one strategy execution."""

    def __init__(self, ctx: StrategyContext, q: Query, name: str) -> None:
        self.ctx = ctx
        self.q = q
        self.name = name
        self.passes: list[Pass] = []
        self.log: list[dict[str, Any]] = []
        self.selected: int | None = None

    def call(
        self,
        role: str,
        mode: ThinkingMode,
        user: str,
        system: str | None = None,
        *,
        max_tokens: int | None = None,
        temperature: float | None = None,
        logprob_k: int | None = None,
    ) -> ResponseTrace:
        request = CompletionRequest(
            user_message=user,
            mode=mode,
            system_prompt=system,
            max_output_tokens=max_tokens or self.ctx.max_output_tokens,
            temperature=self.ctx.temperature if temperature is None else temperature,
            want_logprobs=logprob_k is not None,
            logprob_k=logprob_k or self.ctx.profile.logprob_k,
            query_id=self.q.id,
        )
        trace = self.ctx.client.complete(request)
        self.passes.append(Pass(role, mode, trace))
        return trace

    def record(self, role: str, mode: ThinkingMode, trace: ResponseTrace) -> None:
        self.passes.append(Pass(role, mode, trace))

    def event(self, kind: str, **data: Any) -> None:
        self.log.append({"event": kind, **data})

    def outcome(self, *, failed: bool = False, error: BaseException | None = None) -> StrategyOutcome:
        return StrategyOutcome(
            query_id=self.q.id,
            strategy_name=self.name,
            passes=tuple(self.passes),
            decision_log=tuple(self.log),
            failed=failed,
            error=None if error is None else str(error),
            error_type=None if error is None else type(error).__name__,
            selected_pass=self.selected,
        )


StrategyFn = Callable[[Query, StrategyContext], StrategyOutcome]


def strategy(name: str) -> Callable[[Callable[[Run], None]], StrategyFn]:
    """Wrap a body that drives a :class:`Run`; gateway failures become failed outcomes."""

    def wrap(body: Callable[[Run], None]) -> StrategyFn:
        @functools.wraps(body)
        def run(q: Query, ctx: StrategyContext) -> StrategyOutcome:
            r = Run(ctx, q, name)
            try:
                body(r)
            except GatewayError as exc:
                logger.warning("%s failed on %s: %s", name, q.id, exc)
                return r.outcome(failed=True, error=exc)
            return r.outcome()

        run.strategy_name = name  # type: ignore[attr-defined]
        return run

    return wrap


@strategy("full_think")
def run_full_think(r: Run) -> None:
    r.call("solve", r.ctx.profile.full_think_mode, render_user_message(r.q, r.ctx.prompts))


@strategy("no_think")
def run_no_think(r: Run) -> None:
    r.call("solve", r.ctx.profile.no_think_mode, render_user_message(r.q, r.ctx.prompts))


@strategy("prompt_tuning")
def run_prompt_tuning(r: Run) -> None:
    ctx = r.ctx
    trace = r.call(
        "solve",
        ctx.profile.prompt_tuning_mode,
        render_pt_user_message(r.q, ctx.prompts),
        pt_system_prompt(ctx.profile.family, ctx.prompts),
    )
    r.event(
        "mode_classification",
        label=classify_mode(trace.thinking_tokens).value,
        thinking_tokens=trace.thinking_tokens,
        approximate=not trace.split_reported,
    )


@strategy("routing")
def run_routing(r: Run) -> None:
    ctx = r.ctx
    system, user = render_judge_messages(r.q, ctx.profile.family, ctx.prompts)
    judge = r.call("judge", ctx.profile.no_think_mode, user, system, max_tokens=ctx.judge_max_tokens)
    text = judge.answer_text if "{" in judge.answer_text else judge.thinking_text + judge.answer_text
    decision = parse_judge_decision(text, ctx.profile)
    r.log.append(decision.to_event())
    r.call("solve", decision.mode, render_user_message(r.q, ctx.prompts), ctx.prompts.routing_solve_system)


@strategy("spec_trigger")
def run_spec_trigger(r: Run) -> None:
    ctx = r.ctx
    lexicon = ctx.lexicon.extended(ctx.profile.extra_keywords)
    user = render_user_message(r.q, ctx.prompts)
    first = r.call("fast", ctx.profile.no_think_mode, user)
    matches = scan_triggers(first.answer_text, lexicon)
    r.event("trigger_scan", matches=matches, escalate=bool(matches))
    if matches:
        r.call("rethink", ctx.profile.full_think_mode, user)


def _fast_pass_entropies(r: Run, user: str) -> list[float]:
    ctx = r.ctx
    rule = ctx.rule
    first = r.call("fast", ctx.profile.no_think_mode, user, logprob_k=rule.k)
    if first.per_token_logprobs is None:
        raise CapabilityError("endpoint returned no logprobs; entropy trigger needs top-k logprobs")
    return trace_entropies(first.per_token_logprobs, rule.k)


def _entropy_two_pass(r: Run) -> None:
    user = render_user_message(r.q, r.ctx.prompts)
    entropies = _fast_pass_entropies(r, user)
    summary = entropy_summary(entropies, r.ctx.rule)
    r.event("entropy", **summary)
    if should_escalate(entropies, r.ctx.rule):
        r.call("rethink", r.ctx.profile.full_think_mode, user)


run_spec_entropy = strategy("spec_entropy")(_entropy_two_pass)


STRATEGIES: dict[str, StrategyFn] = {
    "full_think": run_full_think,
    "no_think": run_no_think,
    "prompt_tuning": run_prompt_tuning,
    "routing": run_routing,
    "spec_trigger": run_spec_trigger,
    "spec_entropy": run_spec_entropy,
}

ALIASES = {"pt": "prompt_tuning", "rt": "routing", "pt_tf": "prompt_tuning", "rt_tf": "routing"}
