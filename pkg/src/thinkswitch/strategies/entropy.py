"""Normalized top-k token entropy and the escalation rule built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from thinkswitch.core import TokenLogprobs


class EmptyCandidatesError(ValueError):
    pass


def token_entropy(candidates: Sequence[tuple[str, float]] | Sequence[float], k: int = 20) -> float:
    """Shannon entropy of the renormalized candidate distribution, scaled to [0, 1].

    The scale is ``log k'`` where ``k'`` is the number of candidates actually
    supplied (endpoints may return fewer than the ``k`` requested).
    """
    if not candidates:
        raise EmptyCandidatesError("token_entropy needs at least one candidate")
    logprobs = [c[1] if isinstance(c, tuple) else c for c in candidates]
    n = len(logprobs)
    if n > k:
        raise ValueError(f"{n} candidates exceeds k={k}")
    if not all(math.isfinite(lp) for lp in logprobs):
        raise ValueError("candidate logprobs must be finite")
    if n == 1:
        return 0.0
    top = max(logprobs)
    if top == min(logprobs):
        return 1.0
    # shift by the max before exponentiating so tiny logprobs don't underflow to a zero sum
    weights = [math.exp(lp - top) for lp in logprobs]
    z = math.fsum(weights)
    log_z = math.log(z)
    h = -math.fsum((w / z) * (lp - top - log_z) for w, lp in zip(weights, logprobs))
    return min(1.0, max(0.0, h / math.log(n)))


def trace_entropies(tokens: Iterable[TokenLogprobs], k: int = 20) -> list[float]:
    return [token_entropy(t.top[:k], k) for t in tokens]


@dataclass(frozen=True)
class EscalationRule:
    threshold: float
    min_count: int = 3
    min_fraction: float = 0.05
    k: int = 20

    def __post_init__(self) -> None:
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if not 0 < self.min_fraction < 1:
            raise ValueError("min_fraction must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")


def count_uncertain(entropies: Sequence[float], threshold: float) -> int:
    return sum(1 for e in entropies if e > threshold)


def should_escalate(entropies: Sequence[float], rule: EscalationRule) -> bool:
    """Fire when at least ``min_count`` tokens, or more than ``min_fraction`` of them, exceed the threshold."""
    n = len(entropies)
    if n == 0:
        return False
    over = count_uncertain(entropies, rule.threshold)
    return over >= rule.min_count or over / n > rule.min_fraction


def entropy_summary(entropies: Sequence[float], rule: EscalationRule) -> dict[str, float | int | bool]:
    n = len(entropies)
    over = count_uncertain(entropies, rule.threshold)
    return {
        "tokens": n,
        "threshold": rule.threshold,
        "count_over": over,
        "fraction_over": over / n if n else 0.0,
        "max_entropy": max(entropies) if n else 0.0,
        "mean_entropy": math.fsum(entropies) / n if n else 0.0,
        "escalate": should_escalate(entropies, rule),
    }
