"""Datasets, grading, metrics and reports."""

from thinkswitch.evaluation.datasets import DatasetError, DuplicateIdError, UnknownDomainError, load_dataset
from thinkswitch.evaluation.grading import Grade, Grader, grade_external, grade_llm_judge, grade_rule_based
from thinkswitch.evaluation.harness import EvalResult, LimitedCompleter, evaluate
from thinkswitch.evaluation.metrics import (
    AVG,
    MetricsRow,
    MissingBaselineError,
    compute_metrics,
    dominates,
    frontier_rows,
    pareto_frontier,
    red_pct,
)
from thinkswitch.evaluation.report import emit_report, load_metrics, load_outcomes, load_records

__all__ = [
    "AVG",
    "DatasetError",
    "DuplicateIdError",
    "EvalResult",
    "Grade",
    "Grader",
    "LimitedCompleter",
    "MetricsRow",
    "MissingBaselineError",
    "UnknownDomainError",
    "compute_metrics",
    "dominates",
    "emit_report",
    "evaluate",
    "frontier_rows",
    "grade_external",
    "grade_llm_judge",
    "grade_rule_based",
    "load_dataset",
    "load_metrics",
    "load_outcomes",
    "load_records",
    "pareto_frontier",
    "red_pct",
]
