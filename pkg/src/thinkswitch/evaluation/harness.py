"""Run a strategy over a dataset and grade every outcome."""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from thinkswitch.core import EvalRecord, Query, ResponseTrace, StrategyOutcome
from thinkswitch.evaluation.grading import Grade, Grader
from thinkswitch.gateway import CompletionRequest
from thinkswitch.profiles import ModelProfile
from thinkswitch.strategies.runners import Completer, StrategyContext, StrategyFn

logger = logging.getLogger(__name__)

DEFAULT_CONCURRENCY = 8


class LimitedCompleter:
    """Wraps a client so that all callers share one in-flight request budget."""

    def __init__(self, inner: Completer, limit: int | threading.Semaphore) -> None:
        if isinstance(limit, int):
            if limit < 1:
                raise ValueError("concurrency limit must be >= 1")
            limit = threading.BoundedSemaphore(limit)
        self.inner = inner
        self._slots = limit

    @property
    def profile(self) -> ModelProfile:
        return self.inner.profile

    def sharing(self, other: Completer) -> LimitedCompleter:
        """Wrap ``other`` under this wrapper's budget."""
        return LimitedCompleter(other, self._slots)

    def complete(self, request: CompletionRequest) -> ResponseTrace:
        with self._slots:
            return self.inner.complete(request)


@dataclass(frozen=True)
class EvalResult:
    outcome: StrategyOutcome
    record: EvalRecord


def grade_outcome(q: Query, outcome: StrategyOutcome, dataset: str, grader: Callable[[Query, str], Grade]) -> EvalRecord:
    if outcome.failed:
        return EvalRecord(
            q.id, dataset, outcome.strategy_name, False, outcome.total_tokens,
            failed=True, grade_source=None, error=outcome.error,
        )
    g = grader(q, outcome.final_answer)
    return EvalRecord(
        q.id, dataset, outcome.strategy_name, g.correct and not g.failed, outcome.total_tokens,
        failed=g.failed, grade_source=g.source, error=g.error,
    )


def evaluate(
    queries: Sequence[Query],
    dataset: str,
    runner: StrategyFn,
    ctx: StrategyContext,
    grader: Callable[[Query, str], Grade] | None = None,
    concurrency: int = DEFAULT_CONCURRENCY,
    progress: Callable[[int, int], None] | None = None,
) -> list[EvalResult]:
    """Results in dataset order regardless of completion order."""
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    grader = grader or Grader()
    done = 0
    lock = threading.Lock()

    def one(q: Query) -> EvalResult:
        nonlocal done
        outcome = runner(q, ctx)
        result = EvalResult(outcome, grade_outcome(q, outcome, dataset, grader))
        if progress is not None:
            with lock:
                done += 1
                progress(done, len(queries))
        return result

    if concurrency == 1:
        return [one(q) for q in queries]
    with ThreadPoolExecutor(max_workers=concurrency, thread_name_prefix="eval") as pool:
        return list(pool.map(one, queries))
