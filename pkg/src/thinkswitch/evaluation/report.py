"""Deterministic report files: aligned table, CSV, and JSONL records."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter, defaultdict
from pathlib import Path
from typing import Any, Iterable, Sequence

from thinkswitch.core import EvalRecord, StrategyOutcome, ThinkingMode
from thinkswitch.evaluation.metrics import MetricsRow, frontier_rows

FORMATS = ("table", "csv", "records")
CSV_FIELDS = ("dataset", "strategy", "acc", "tok", "red_pct", "n", "failed")


def decision_aggregates(outcomes: Iterable[StrategyOutcome]) -> dict[str, dict[str, Any]]:
    """Per-strategy escalation rate, routing distribution, fallback rate and failure rate."""
    by_strategy: dict[str, list[StrategyOutcome]] = defaultdict(list)
    for o in outcomes:
        by_strategy[o.strategy_name].append(o)
    out: dict[str, dict[str, Any]] = {}
    for name in sorted(by_strategy):
        group = by_strategy[name]
        agg: dict[str, Any] = {
            "outcomes": len(group),
            "failed": sum(o.failed for o in group),
            "failure_rate": sum(o.failed for o in group) / len(group),
            "mean_passes": sum(len(o.passes) for o in group) / len(group),
        }
        checks = [e for o in group for e in o.decision_log if "escalate" in e]
        if checks:
            agg["escalation_rate"] = sum(bool(e["escalate"]) for e in checks) / len(checks)
        routes = [e for o in group for e in o.events("routing")]
        if routes:
            labels = Counter(ThinkingMode.from_dict(e["mode"]).label() for e in routes)
            agg["routing_distribution"] = dict(sorted(labels.items()))
            agg["fallback_rate"] = sum(e.get("source") == "fallback" for e in routes) / len(routes)
        classes = [e["label"] for o in group for e in o.events("mode_classification")]
        if classes:
            agg["mode_distribution"] = dict(sorted(Counter(classes).items()))
        kinds = Counter(e.get("event") for o in group for e in o.decision_log)
        if kinds:
            agg["events"] = dict(sorted((str(k), v) for k, v in kinds.items()))
        out[name] = agg
    return out


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow([r.dataset, r.strategy, _fmt(r.acc), _fmt(r.tok), _fmt(r.red_pct), r.n, r.failed])
    return buf.getvalue()


def rows_to_table(rows: Sequence[MetricsRow]) -> str:
    header = ["dataset", "strategy", "Acc%", "Tok", "Red%", "n", "failed"]
    body = [[r.dataset, r.strategy, _fmt(r.acc), f"{r.tok:.1f}", f"{r.red_pct:+.1f}", str(r.n), str(r.failed)] for r in rows]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths))).rstrip()
             for line in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _write_jsonl(path: Path, items: Iterable[dict[str, Any]]) -> None:
    with path.open("w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item, sort_keys=True, ensure_ascii=False) + "\n")


def emit_report(
    rows: Sequence[MetricsRow],
    outcomes: Sequence[StrategyOutcome],
    out_dir: str | Path,
    formats: Sequence[str] = FORMATS,
    records: Sequence[EvalRecord] = (),
) -> list[Path]:
    """Write the requested report files into ``out_dir`` and return their paths."""
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f"unknown report format(s) {unknown}; expected {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    decisions = decision_aggregates(outcomes)

    def put(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    if "table" in formats:
        put("metrics.txt", rows_to_table(rows))
    if "csv" in formats:
        put("metrics.csv", rows_to_csv(rows))
        put("frontier.csv", rows_to_csv(frontier_rows(rows)))
    if "records" in formats:
        for name, items in (
            ("metrics.jsonl", [r.to_dict() for r in rows]),
            ("records.jsonl", [r.to_dict() for r in records]),
            ("outcomes.jsonl", [o.to_dict() for o in outcomes]),
        ):
            _write_jsonl(out / name, items)
            written.append(out / name)
    put("decisions.json", json.dumps(decisions, indent=2, sort_keys=True) + "\n")
    return written


def _read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    items = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                try:
                    items.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return items


def load_metrics(path: str | Path) -> list[MetricsRow]:
    return [MetricsRow(**d) for d in _read_jsonl(path)]


def load_records(path: str | Path) -> list[EvalRecord]:
    return [EvalRecord.from_dict(d) for d in _read_jsonl(path)]


def load_outcomes(path: str | Path) -> list[StrategyOutcome]:
    return [StrategyOutcome.from_dict(d) for d in _read_jsonl(path)]
