"""Acc / Tok / Red% aggregation and accuracy-cost Pareto analysis."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Sequence

from thinkswitch.core import EvalRecord

AVG = "AVG"


class MissingBaselineError(ValueError):
    def __init__(self, baseline: str, datasets: Sequence[str]) -> None:
        super().__init__(f"baseline strategy {baseline!r} has no records for dataset(s): {', '.join(datasets)}")
        self.baseline = baseline
        self.datasets = list(datasets)


@dataclass(frozen=True)
class MetricsRow:
    dataset: str
    strategy: str
    acc: float  # percent
    tok: float
    red_pct: float
    n: int = 0
    failed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def red_pct(tok: float, baseline_tok: float) -> float:
    """Token saving relative to the baseline, in percent (positive = fewer tokens)."""
    if baseline_tok <= 0:
        raise ValueError("baseline token mean must be positive")
    if tok == baseline_tok:
        return 0.0
    return 100.0 * (1.0 - tok / baseline_tok)


def _mean(xs: Iterable[float]) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def compute_metrics(records: Iterable[EvalRecord], baseline_strategy: str) -> list[MetricsRow]:
    """Per-(strategy, dataset) rows followed by one AVG row per strategy.

    Failed records count as incorrect. AVG columns are unweighted means over
    the datasets a strategy was run on.
    """
    groups: dict[tuple[str, str], list[EvalRecord]] = defaultdict(list)
    for r in records:
        groups[(r.strategy_name, r.dataset)].append(r)
    datasets = sorted({d for _, d in groups})
    missing = [d for d in datasets if (baseline_strategy, d) not in groups]
    if missing:
        raise MissingBaselineError(baseline_strategy, missing)

    cell: dict[tuple[str, str], tuple[float, float, int, int]] = {}
    for key, recs in groups.items():
        acc = 100.0 * sum(1 for r in recs if r.correct) / len(recs)
        tok = _mean(r.total_tokens for r in recs)
        cell[key] = (acc, tok, len(recs), sum(1 for r in recs if r.failed))

    base_avg_tok = _mean(cell[(baseline_strategy, d)][1] for d in datasets)
    rows: list[MetricsRow] = []
    for strategy in sorted({s for s, _ in groups}, key=lambda s: (s != baseline_strategy, s)):
        mine = [d for d in datasets if (strategy, d) in cell]
        for d in mine:
            acc, tok, n, failed = cell[(strategy, d)]
            rows.append(MetricsRow(d, strategy, acc, tok, red_pct(tok, cell[(baseline_strategy, d)][1]), n, failed))
        avg_acc = _mean(cell[(strategy, d)][0] for d in mine)
        avg_tok = _mean(cell[(strategy, d)][1] for d in mine)
        base_tok = base_avg_tok if len(mine) == len(datasets) else _mean(cell[(baseline_strategy, d)][1] for d in mine)
        rows.append(
            MetricsRow(
                AVG,
                strategy,
                avg_acc,
                avg_tok,
                red_pct(avg_tok, base_tok),
                sum(cell[(strategy, d)][2] for d in mine),
                sum(cell[(strategy, d)][3] for d in mine),
            )
        )
    return rows


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """``a`` is at least as accurate and as cheap as ``b`` and strictly better in one."""
    return a[0] >= b[0] and a[1] <= b[1] and (a[0] > b[0] or a[1] < b[1])


def pareto_frontier(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    """Non-dominated (acc, tok) points, deduplicated, sorted by ascending tokens."""
    unique = sorted({(float(p[0]), float(p[1])) for p in points}, key=lambda p: (p[1], -p[0]))
    frontier: list[tuple[float, float]] = []
    best_acc = -math.inf
    # sweep by cost: a point survives iff it beats every cheaper-or-equal point on accuracy
    for acc, tok in unique:
        if acc > best_acc:
            frontier.append((acc, tok))
            best_acc = acc
    return frontier


def frontier_rows(rows: Iterable[MetricsRow], dataset: str = AVG) -> list[MetricsRow]:
    """Rows of ``dataset`` lying on the accuracy/token frontier."""
    candidates = [r for r in rows if r.dataset == dataset]
    front = set(pareto_frontier((r.acc, r.tok) for r in candidates))
    seen: set[tuple[float, float]] = set()
    out = []
    for r in sorted(candidates, key=lambda r: (r.tok, -r.acc, r.strategy)):
        key = (r.acc, r.tok)
        if key in front and key not in seen:
            seen.add(key)
            out.append(r)
    return out
