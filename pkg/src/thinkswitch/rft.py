"""Training-data factory for rejection fine-tuning.

Step 1 samples K responses per thinking mode, step 2 keeps the shortest
correct one as the SFT target, step 3 pairs it against longer or wrong
responses for DPO, and step 4 scores GRPO groups with a correctness-gated
brevity bonus. Nothing here trains a model.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Sequence

from thinkswitch.core import ModeKind, Query, ResponseTrace, StrategyOutcome, ThinkingMode, validate_mode
from thinkswitch.evaluation.grading import Grade, Grader
from thinkswitch.gateway import CompletionRequest, GatewayError
from thinkswitch.profiles import Family, ModelProfile
from thinkswitch.prompts import (
    render_judge_messages,
    render_pt_user_message,
    render_user_message,
    strategy_system_prompt,
)
from thinkswitch.strategies.runners import StrategyContext, StrategyFn

logger = logging.getLogger(__name__)

ALPHA = 1.0
BETA = 0.5
GROUP_SIZE = 8
ROLLOUT_TEMPERATURE = 1.0
RFT_STRATEGIES = ("pt", "rt", "baseline")


class RewardParamsError(ValueError):
    pass


class EmptyGroupError(ValueError):
    pass


class ReferenceUnavailableError(ValueError):
    """No successful full-think rollout to derive the reference token count from."""


@dataclass(frozen=True)
class Rollout:
    problem_id: str
    mode: ThinkingMode
    response: ResponseTrace | None
    correct: bool
    index: int = 0  # position in sampling order
    failed: bool = False
    error: str | None = None

    def __post_init__(self) -> None:
        if self.failed and self.correct:
            raise ValueError("a failed rollout cannot be correct")
        if self.response is None and not self.failed:
            raise ValueError("only failed rollouts may lack a response")

    @property
    def tokens(self) -> int:
        return 0 if self.response is None else self.response.total_tokens


@dataclass(frozen=True)
class RolloutSet:
    problem_id: str
    rollouts: tuple[Rollout, ...]
    K: int
    modes: tuple[ThinkingMode, ...] = ()

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.modes and len(self.rollouts) != self.K * len(self.modes):
            raise ValueError(f"expected {self.K} x {len(self.modes)} rollouts, got {len(self.rollouts)}")

    def by_mode(self, mode: ThinkingMode) -> list[Rollout]:
        return [r for r in self.rollouts if r.mode == mode]


@dataclass(frozen=True)
class RewardParams:
    t_ref: float
    alpha: float = ALPHA
    beta: float = BETA
    n: int = GROUP_SIZE

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise RewardParamsError("alpha and beta must be non-negative")
        if not self.t_ref > 0 or not math.isfinite(self.t_ref):
            raise RewardParamsError(f"t_ref must be a positive token count, got {self.t_ref}")
        if self.n < 1:
            raise RewardParamsError("group size must be >= 1")


def default_rft_modes(profile: ModelProfile) -> tuple[ThinkingMode, ...]:
    """The family's native modes, with full think guaranteed present (it anchors t_ref)."""
    modes = list(profile.native_modes)
    if profile.full_think_mode not in modes:
        modes.append(profile.full_think_mode)
    return tuple(modes)


def rft_messages(q: Query, strategy: str, profile: ModelProfile, ctx: StrategyContext) -> tuple[str, str]:
    """(system, user) shared by data construction and inference for ``strategy``."""
    if strategy not in RFT_STRATEGIES:
        raise ValueError(f"unknown RFT strategy {strategy!r}; expected one of {RFT_STRATEGIES}")
    system = strategy_system_prompt(strategy, profile.family, ctx.prompts)
    user = render_pt_user_message(q, ctx.prompts) if strategy == "pt" else render_user_message(q, ctx.prompts)
    return system, user


GraderFn = Callable[[Query, str], Grade]


def _sample(
    q: Query, mode: ThinkingMode, index: int, ctx: StrategyContext, grader: GraderFn,
    system: str, user: str, temperature: float,
) -> Rollout:
    request = CompletionRequest(
        user_message=user,
        mode=mode,
        system_prompt=system,
        max_output_tokens=ctx.max_output_tokens,
        temperature=temperature,
        query_id=q.id,
    )
    try:
        trace = ctx.client.complete(request)
    except GatewayError as exc:
        return Rollout(q.id, mode, None, False, index, failed=True, error=f"{type(exc).__name__}: {exc}")
    g = grader(q, trace.answer_text)
    return Rollout(q.id, mode, trace, g.correct and not g.failed, index, failed=g.failed, error=g.error)


def rollout_matrix(
    q: Query,
    modes: Sequence[ThinkingMode],
    K: int,
    ctx: StrategyContext,
    grader: GraderFn | None = None,
    *,
    strategy: str = "pt",
    temperature: float = ROLLOUT_TEMPERATURE,
) -> RolloutSet:
    """K graded rollouts per mode, mode-major, at training-time temperature."""
    if K < 1:
        raise ValueError("K must be >= 1")
    profile = ctx.profile
    bad = [m.label() for m in modes if not validate_mode(m, profile)]
    if bad:
        raise ValueError(f"modes {bad} are not valid for profile {profile.name}")
    grader = grader or Grader()
    system, user = rft_messages(q, strategy, profile, ctx)
    rollouts = []
    for mi, mode in enumerate(modes):
        for k in range(K):
            rollouts.append(_sample(q, mode, mi * K + k, ctx, grader, system, user, temperature))
    return RolloutSet(q.id, tuple(rollouts), K, tuple(modes))


def select_sft(rollout_set: RolloutSet) -> Rollout | None:
    """Shortest correct rollout; the earliest one wins ties; None if nothing is correct."""
    best: Rollout | None = None
    for r in rollout_set.rollouts:
        if r.correct and (best is None or r.tokens < best.tokens):
            best = r
    return best


@dataclass(frozen=True)
class DPOPair:
    chosen: Rollout
    rejected: Rollout


def build_dpo_pairs(rollout_set: RolloutSet) -> list[DPOPair]:
    """Pair the SFT choice with every strictly longer correct rollout and every incorrect one.

    Failed rollouts have no text to prefer against and are left out.
    """
    chosen = select_sft(rollout_set)
    if chosen is None:
        return []
    return [
        DPOPair(chosen, r)
        for r in rollout_set.rollouts
        if r is not chosen and not r.failed and (not r.correct or r.tokens > chosen.tokens)
    ]


def grpo_reward(correct: bool, t_r: int | float, params: RewardParams) -> float:
    """alpha * 1[correct] + beta * 1[correct] * max(0, 1 - t_r / t_ref)."""
    if t_r < 0:
        raise ValueError("token count must be non-negative")
    if not params.t_ref > 0:
        raise RewardParamsError("t_ref must be positive")
    if not correct:
        return 0.0
    return params.alpha + params.beta * max(0.0, 1.0 - t_r / params.t_ref)


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Rewards minus the group mean (no variance scaling)."""
    if len(rewards) == 0:
        raise EmptyGroupError("advantage needs at least one reward")
    mean = math.fsum(rewards) / len(rewards)
    return [r - mean for r in rewards]


def reference_tokens(rollout_set: RolloutSet, full_think: ThinkingMode) -> float:
    """Mean token count of the successful full-think rollouts for this problem."""
    counts = [r.tokens for r in rollout_set.by_mode(full_think) if not r.failed]
    if not counts or sum(counts) == 0:
        raise ReferenceUnavailableError(f"{rollout_set.problem_id}: no usable full-think rollout")
    return math.fsum(counts) / len(counts)


def routing_label(rollout_set: RolloutSet) -> ThinkingMode | None:
    """Mode whose correct rollouts have the lowest mean token cost; ties go to the earlier mode."""
    modes = rollout_set.modes or tuple(dict.fromkeys(r.mode for r in rollout_set.rollouts))
    best: tuple[float, ThinkingMode] | None = None
    for mode in modes:
        ok = [r.tokens for r in rollout_set.by_mode(mode) if r.correct]
        if not ok:
            continue
        cost = math.fsum(ok) / len(ok)
        if best is None or cost < best[0]:
            best = (cost, mode)
    return None if best is None else best[1]


def routing_label_text(mode: ThinkingMode, profile: ModelProfile) -> str:
    """The judge-schema JSON that encodes ``mode`` for ``profile``."""
    if profile.family is Family.EFFORT:
        return json.dumps({"level": mode.value})
    if mode == profile.full_think_mode or mode == ThinkingMode.think():
        return json.dumps({"mode": "1", "budget": None})
    if mode == profile.no_think_mode or mode == ThinkingMode.no_think():
        return json.dumps({"mode": "2", "budget": None})
    if mode.kind is ModeKind.BUDGET:
        return json.dumps({"mode": "3", "budget": mode.budget_tokens})
    raise ValueError(f"mode {mode.label()} has no routing label for {profile.name}")


# ---- training records -------------------------------------------------------


@dataclass(frozen=True)
class Completion:
    thinking: str
    answer: str
    mode: ThinkingMode
    tokens: int
    correct: bool

    @classmethod
    def of(cls, r: Rollout) -> Completion:
        trace = r.response
        return cls(
            "" if trace is None else trace.thinking_text,
            "" if trace is None else trace.answer_text,
            r.mode,
            r.tokens,
            r.correct,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "thinking": self.thinking,
            "answer": self.answer,
            "mode": self.mode.to_dict(),
            "tokens": self.tokens,
            "correct": self.correct,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Completion:
        return cls(d["thinking"], d["answer"], ThinkingMode.from_dict(d["mode"]), int(d["tokens"]), bool(d["correct"]))


Messages = tuple[tuple[str, str], ...]


def _messages(system: str, user: str) -> Messages:
    return (("system", system), ("user", user))


def _messages_json(m: Messages) -> list[dict[str, str]]:
    return [{"role": role, "content": content} for role, content in m]


def _messages_from(raw: list[dict[str, str]]) -> Messages:
    return tuple((m["role"], m["content"]) for m in raw)


@dataclass(frozen=True)
class SFTRecord:
    problem_id: str
    strategy: str
    messages: Messages
    completion: Completion
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_id": self.problem_id,
            "strategy": self.strategy,
            "messages": _messages_json(self.messages),
            "completion": self.completion.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SFTRecord:
        return cls(d["problem_id"], d["strategy"], _messages_from(d["messages"]),
                   Completion.from_dict(d["completion"]), d.get("metadata", {}))


@dataclass(frozen=True)
class DPORecord:
    problem_id: str
    strategy: str
    messages: Messages
    chosen: Completion
    rejected: Completion
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_id": self.problem_id,
            "strategy": self.strategy,
            "messages": _messages_json(self.messages),
            "chosen": self.chosen.to_dict(),
            "rejected": self.rejected.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DPORecord:
        return cls(d["problem_id"], d["strategy"], _messages_from(d["messages"]),
                   Completion.from_dict(d["chosen"]), Completion.from_dict(d["rejected"]), d.get("metadata", {}))


@dataclass(frozen=True)
class GRPORecord:
    group_id: str
    problem_id: str
    index: int
    strategy: str
    messages: Messages
    completion: Completion
    reward: float
    advantage: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "group_id": self.group_id,
            "problem_id": self.problem_id,
            "index": self.index,
            "strategy": self.strategy,
            "messages": _messages_json(self.messages),
            "completion": self.completion.to_dict(),
            "reward": self.reward,
            "advantage": self.advantage,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> GRPORecord:
        return cls(d["group_id"], d["problem_id"], int(d["index"]), d["strategy"], _messages_from(d["messages"]),
                   Completion.from_dict(d["completion"]), float(d["reward"]), float(d["advantage"]),
                   d.get("metadata", {}))


TrainingFormat = Literal["sft", "dpo", "grpo-log"]
_RECORD_TYPES: dict[str, type] = {"sft": SFTRecord, "dpo": DPORecord, "grpo-log": GRPORecord}


class EmptyExportError(ValueError):
    pass


def export_training_file(
    items: Sequence[SFTRecord | DPORecord | GRPORecord],
    fmt: TrainingFormat,
    path: str | Path,
    *,
    allow_empty: bool = False,
) -> Path:
    """Write one JSON record per line, in the order given."""
    if fmt not in _RECORD_TYPES:
        raise ValueError(f"unknown training format {fmt!r}; expected one of {sorted(_RECORD_TYPES)}")
    if not items and not allow_empty:
        raise EmptyExportError(f"nothing to export for {fmt}")
    kind = _RECORD_TYPES[fmt]
    wrong = [type(i).__name__ for i in items if not isinstance(i, kind)]
    if wrong:
        raise TypeError(f"{fmt} export expects {kind.__name__}, got {wrong[0]}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")
    return path


def load_training_file(path: str | Path, fmt: TrainingFormat) -> list[Any]:
    kind = _RECORD_TYPES[fmt]
    out = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(kind.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad {fmt} record ({exc})") from None
    return out


# ---- record builders ---------------------------------------------------------


def _meta(r: Rollout, temperature: float, **extra: Any) -> dict[str, Any]:
    return {"mode": r.mode.label(), "tokens": r.tokens, "sample_index": r.index, "temperature": temperature, **extra}


def sft_record(q: Query, chosen: Rollout, strategy: str, ctx: StrategyContext, temperature: float) -> SFTRecord:
    system, user = rft_messages(q, strategy, ctx.profile, ctx)
    return SFTRecord(q.id, strategy, _messages(system, user), Completion.of(chosen), _meta(chosen, temperature))


def dpo_records(q: Query, pairs: Sequence[DPOPair], strategy: str, ctx: StrategyContext, temperature: float) -> list[DPORecord]:
    system, user = rft_messages(q, strategy, ctx.profile, ctx)
    return [
        DPORecord(
            q.id, strategy, _messages(system, user), Completion.of(p.chosen), Completion.of(p.rejected),
            {"chosen_mode": p.chosen.mode.label(), "rejected_mode": p.rejected.mode.label(),
             "chosen_tokens": p.chosen.tokens, "rejected_tokens": p.rejected.tokens,
             "rejected_correct": p.rejected.correct, "temperature": temperature},
        )
        for p in pairs
    ]


def _mode_stats(rollout_set: RolloutSet, mode: ThinkingMode) -> tuple[bool, float]:
    rs = rollout_set.by_mode(mode)
    ok = [r.tokens for r in rs if r.correct]
    pool = ok or [r.tokens for r in rs]
    return bool(ok), (math.fsum(pool) / len(pool) if pool else 0.0)


def _label_completion(rollout_set: RolloutSet, mode: ThinkingMode, profile: ModelProfile) -> Completion:
    any_ok, mean_tok = _mode_stats(rollout_set, mode)
    return Completion("", routing_label_text(mode, profile), mode, int(round(mean_tok)), any_ok)


def routing_records(
    q: Query, rollout_set: RolloutSet, ctx: StrategyContext
) -> tuple[SFTRecord | None, list[DPORecord]]:
    """Router training data: target is the judge JSON for the winning mode."""
    best = routing_label(rollout_set)
    if best is None:
        return None, []
    system, user = render_judge_messages(q, ctx.profile.family, ctx.prompts)
    msgs = _messages(system, user)
    chosen = _label_completion(rollout_set, best, ctx.profile)
    sft = SFTRecord(q.id, "rt", msgs, chosen, {"label": best.label(), "mean_correct_tokens": _mode_stats(rollout_set, best)[1]})
    pairs = [
        DPORecord(q.id, "rt", msgs, chosen, _label_completion(rollout_set, m, ctx.profile),
                  {"chosen_mode": best.label(), "rejected_mode": m.label()})
        for m in rollout_set.modes
        if m != best
    ]
    return sft, pairs


def grpo_group_records(
    q: Query,
    samples: Sequence[tuple[ThinkingMode, ResponseTrace | None, bool, int]],
    params: RewardParams,
    strategy: str,
    messages: Messages,
    group_id: str,
    temperature: float,
) -> list[GRPORecord]:
    """Score one group. Each sample is (mode, final trace or None, correct, total tokens)."""
    rewards = [grpo_reward(c, t, params) for _, _, c, t in samples]
    advantages = group_advantages(rewards)
    out = []
    for i, ((mode, trace, correct, tokens), reward, adv) in enumerate(zip(samples, rewards, advantages)):
        comp = Completion(
            "" if trace is None else trace.thinking_text,
            "" if trace is None else trace.answer_text,
            mode, tokens, correct,
        )
        meta = {"t_ref": params.t_ref, "alpha": params.alpha, "beta": params.beta, "n": params.n,
                "mode": mode.label(), "tokens": tokens, "temperature": temperature}
        out.append(GRPORecord(group_id, q.id, i, strategy, messages, comp, reward, adv, meta))
    return out


def _outcome_sample(q: Query, o: StrategyOutcome, grader: GraderFn) -> tuple[ThinkingMode, ResponseTrace | None, bool, int]:
    trace = o.final_trace
    mode = o.passes[-1 if o.selected_pass is None else o.selected_pass].mode if o.passes else ThinkingMode.think()
    if o.failed or trace is None:
        return mode, trace, False, o.total_tokens
    g = grader(q, trace.answer_text)
    return mode, trace, g.correct and not g.failed, o.total_tokens


# ---- pipeline ---------------------------------------------------------------


@dataclass(frozen=True)
class RFTConfig:
    strategy: str = "pt"  # pt | rt | baseline
    K: int = 4
    modes: tuple[ThinkingMode, ...] | None = None
    temperature: float = ROLLOUT_TEMPERATURE
    alpha: float = ALPHA
    beta: float = BETA
    group_size: int = GROUP_SIZE
    grpo: bool = True
    grpo_source: str = "fresh"  # fresh | reuse
    concurrency: int = 8

    def __post_init__(self) -> None:
        if self.strategy not in RFT_STRATEGIES:
            raise ValueError(f"unknown RFT strategy {self.strategy!r}; expected one of {RFT_STRATEGIES}")
        if self.grpo_source not in ("fresh", "reuse"):
            raise ValueError("grpo_source must be 'fresh' or 'reuse'")
        if self.K < 1 or self.group_size < 1 or self.concurrency < 1:
            raise ValueError("K, group_size and concurrency must be >= 1")


@dataclass
class RFTResult:
    sets: list[RolloutSet] = field(default_factory=list)
    sft: list[SFTRecord] = field(default_factory=list)
    dpo: list[DPORecord] = field(default_factory=list)
    grpo: list[GRPORecord] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)  # problems with no correct rollout
    warnings: list[str] = field(default_factory=list)


def _problem(
    q: Query, ctx: StrategyContext, grader: GraderFn, cfg: RFTConfig, grpo_runner: StrategyFn | None
) -> tuple[RolloutSet, SFTRecord | None, list[DPORecord], list[GRPORecord], list[str]]:
    warnings: list[str] = []
    modes = cfg.modes or default_rft_modes(ctx.profile)
    full = ctx.profile.full_think_mode
    if full not in modes:
        modes = (*modes, full)
    rs = rollout_matrix(q, modes, cfg.K, ctx, grader, strategy=cfg.strategy, temperature=cfg.temperature)
    if cfg.strategy == "rt":
        sft, dpo = routing_records(q, rs, ctx)
    else:
        chosen = select_sft(rs)
        sft = None if chosen is None else sft_record(q, chosen, cfg.strategy, ctx, cfg.temperature)
        dpo = dpo_records(q, build_dpo_pairs(rs), cfg.strategy, ctx, cfg.temperature)

    grpo: list[GRPORecord] = []
    if cfg.grpo:
        try:
            params = RewardParams(reference_tokens(rs, full), cfg.alpha, cfg.beta, cfg.group_size)
        except ReferenceUnavailableError as exc:
            warnings.append(f"GRPO skipped: {exc}")
        else:
            system, user = rft_messages(q, cfg.strategy, ctx.profile, ctx)
            if cfg.grpo_source == "reuse":
                usable = [r for r in rs.rollouts][: cfg.group_size]
                samples = [(r.mode, r.response, r.correct, r.tokens) for r in usable]
            else:
                sample_ctx = replace(ctx, temperature=cfg.temperature)
                assert grpo_runner is not None
                samples = [_outcome_sample(q, grpo_runner(q, sample_ctx), grader) for _ in range(cfg.group_size)]
            grpo = grpo_group_records(q, samples, params, cfg.strategy, _messages(system, user),
                                      f"{q.id}/grpo", cfg.temperature)
    return rs, sft, dpo, grpo, warnings


GRPO_RUNNERS = {"pt": "prompt_tuning", "rt": "routing", "baseline": "full_think"}


def run_rft(
    queries: Sequence[Query],
    ctx: StrategyContext,
    grader: GraderFn | None = None,
    config: RFTConfig | None = None,
) -> RFTResult:
    """Steps 1 to 4 over ``queries``; outputs keep dataset order."""
    from thinkswitch.strategies.runners import STRATEGIES

    cfg = config or RFTConfig()
    grader = grader or Grader()
    runner = STRATEGIES[GRPO_RUNNERS[cfg.strategy]]

    def one(q: Query):
        return _problem(q, ctx, grader, cfg, runner)

    if cfg.concurrency == 1:
        parts = [one(q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=cfg.concurrency, thread_name_prefix="rft") as pool:
            parts = list(pool.map(one, queries))

    result = RFTResult()
    for q, (rs, sft, dpo, grpo, warnings) in zip(queries, parts):
        result.sets.append(rs)
        if sft is None:
            result.skipped.append(q.id)
        else:
            result.sft.append(sft)
        result.dpo.extend(dpo)
        result.grpo.extend(grpo)
        result.warnings.extend(f"{q.id}: {w}" for w in warnings)
    return result


def verify_group_file(records: Iterable[GRPORecord], tol: float = 1e-12) -> dict[str, float]:
    """Re-sum advantages per group; returns each group's absolute sum and raises if any exceeds ``tol``."""
    sums: dict[str, list[float]] = {}
    for r in records:
        sums.setdefault(r.group_id, []).append(r.advantage)
    out = {g: abs(math.fsum(a)) for g, a in sums.items()}
    bad = {g: s for g, s in out.items() if s > tol}
    if bad:
        raise ValueError(f"advantages do not sum to zero in groups {sorted(bad)}")
    return out
