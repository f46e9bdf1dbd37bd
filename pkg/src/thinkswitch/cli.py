"""Command-line entry point: ``thinkswitch {eval,rft,mock,report}``.

Exit codes:
  0  success (eval/rft also return 0 when some records failed; the failure rate is printed)
  2  configuration or usage error (unknown strategy/profile, bad config, bad fixture, missing baseline)
  3  endpoint unreachable after retries
  4  I/O error (unreadable input, unwritable output, port already in use, no records)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from thinkswitch.config import ConfigError, RunConfig, load_config, load_endpoint_arg, with_overrides
from thinkswitch.core import EvalRecord, Query, StrategyOutcome
from thinkswitch.evaluation.datasets import DatasetError, dataset_name, load_dataset
from thinkswitch.evaluation.grading import Grader
from thinkswitch.evaluation.harness import LimitedCompleter, evaluate
from thinkswitch.evaluation.metrics import MissingBaselineError, compute_metrics
from thinkswitch.evaluation.report import emit_report, load_outcomes, load_records
from thinkswitch.gateway import CapabilityError, EndpointConfig, GatewayClient, TransportError
from thinkswitch.mock.script import FixtureError, script_from_fixture, shipped_fixture
from thinkswitch.mock.server import MockServer
from thinkswitch.profiles import ModelProfile
from thinkswitch.rft import export_training_file, run_rft
from thinkswitch.strategies import UnknownStrategyError, build_context, resolve_strategy, validate_strategy_for_profile

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNREACHABLE = 3
EXIT_IO = 4

logger = logging.getLogger("thinkswitch")


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(f"thinkswitch: {msg}", file=sys.stderr)


# ---- shared wiring ------------------------------------------------------------


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.seed
    changes = {
        "profile": getattr(args, "profile", None),
        "baseline": getattr(args, "baseline", None),
        "out": getattr(args, "out", None),
        "concurrency": getattr(args, "concurrency", None),
        "seed": getattr(args, "seed", None),
        "external_grader": getattr(args, "grader_command", None),
    }
    if getattr(args, "strategy", None):
        changes["strategies"] = tuple(args.strategy)
    if getattr(args, "dataset", None):
        changes["datasets"] = tuple(args.dataset)
    if getattr(args, "endpoint", None):
        changes["endpoint"] = load_endpoint_arg(args.endpoint, seed)
    if getattr(args, "judge_endpoint", None):
        changes["judge_endpoint"] = load_endpoint_arg(args.judge_endpoint, seed)
    return with_overrides(cfg, **changes)


def _datasets(cfg: RunConfig) -> list[tuple[str, list[Query]]]:
    if not cfg.datasets:
        raise CliError(EXIT_CONFIG, "no dataset given (--dataset or 'dataset' in the config)")
    out = []
    for path in cfg.datasets:
        try:
            out.append((dataset_name(path), load_dataset(path)))
        except DatasetError as exc:
            code = EXIT_IO if exc.line is None else EXIT_CONFIG
            raise CliError(code, str(exc)) from None
    return out


def _client(endpoint: EndpointConfig | None, profile: ModelProfile, what: str = "endpoint") -> GatewayClient:
    if endpoint is None:
        raise CliError(EXIT_CONFIG, f"no {what} configured (--{what.replace('_', '-')} or '{what}' in the config)")
    client = GatewayClient(endpoint, profile)
    try:
        client.probe()
    except TransportError as exc:
        client.close()
        raise CliError(EXIT_UNREACHABLE, f"{what} {endpoint.base_url} unreachable: {exc}") from None
    return client


def _context(cfg: RunConfig, client: LimitedCompleter):
    esc = cfg.escalation
    try:
        return build_context(
            client,
            prompt_set=cfg.prompt_set,
            entropy_threshold=esc.threshold,
            min_count=esc.min_count,
            min_fraction=esc.min_fraction,
            logprob_k=esc.logprob_k,
            max_output_tokens=cfg.max_output_tokens,
            judge_max_tokens=cfg.judge_max_tokens,
            temperature=cfg.temperature,
        )
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad strategy settings: {exc}") from None


def _grader(cfg: RunConfig, slots: LimitedCompleter) -> tuple[Grader, list[GatewayClient]]:
    opened: list[GatewayClient] = []
    judge = None
    if cfg.judge_endpoint is not None:
        jclient = _client(cfg.judge_endpoint, cfg.resolve_profile(cfg.judge_profile), "judge_endpoint")
        opened.append(jclient)
        # the judge shares the run's request budget
        judge = slots.sharing(jclient)
    return Grader(judge=judge, external_command=cfg.external_grader, external_timeout=cfg.external_timeout), opened


def _write_jsonl(path: Path, items: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as f:
        for item in items:
            f.write(json.dumps(item, sort_keys=True, ensure_ascii=False) + "\n")


# ---- commands ----------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    profile = cfg.resolve_profile()
    names = list(dict.fromkeys((cfg.baseline, *cfg.strategies)))
    runners = {}
    for name in names:
        try:
            runners[name] = resolve_strategy(name, cfg.presets)
            validate_strategy_for_profile(name, profile, cfg.presets)
        except UnknownStrategyError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
        except CapabilityError as exc:
            raise CliError(EXIT_CONFIG, f"strategy {name!r} cannot run on profile {profile.name}: {exc}") from None
    datasets = _datasets(cfg)
    out = Path(cfg.out)

    client = _client(cfg.endpoint, profile)
    slots = LimitedCompleter(client, cfg.concurrency)
    grader, extra_clients = _grader(cfg, slots)
    ctx = _context(cfg, slots)
    records: list[EvalRecord] = []
    outcomes: list[StrategyOutcome] = []
    try:
        for ds_name, queries in datasets:
            for name in names:
                logger.info("running %s on %s (%d problems)", name, ds_name, len(queries))
                results = evaluate(queries, ds_name, runners[name], ctx, grader, cfg.concurrency)
                records.extend(r.record for r in results)
                outcomes.extend(r.outcome for r in results)
    finally:
        client.close()
        for c in extra_clients:
            c.close()

    rows = compute_metrics(records, cfg.baseline)
    try:
        emit_report(rows, outcomes, out, records=records)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write results to {out}: {exc.strerror or exc}") from None
    failed = sum(r.failed for r in records)
    print((out / "metrics.txt").read_text(encoding="utf-8"), end="")
    print(f"failed records: {failed}/{len(records)} ({100 * failed / max(1, len(records)):.1f}%)")
    print(f"results written to {out}")
    return EXIT_OK


def cmd_rft(args: argparse.Namespace) -> int:
    cfg = _config(args)
    settings = replace(
        cfg.rft,
        **{k: v for k, v in (
            ("strategy", args.rft_strategy),
            ("K", args.k),
            ("formats", tuple(args.formats.split(",")) if args.formats else None),
        ) if v is not None},
    )
    bad = [f for f in settings.formats if f not in ("sft", "dpo", "grpo-log")]
    if bad:
        raise CliError(EXIT_CONFIG, f"unknown training format(s) {bad}; expected sft, dpo, grpo-log")
    try:
        rft_cfg = settings.to_rft_config(cfg.concurrency)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"bad rft settings: {exc}") from None
    profile = cfg.resolve_profile()
    queries = [q for _, qs in _datasets(cfg) for q in qs]
    out = Path(cfg.out)

    client = _client(cfg.endpoint, profile)
    slots = LimitedCompleter(client, cfg.concurrency)
    grader, extra_clients = _grader(cfg, slots)
    ctx = _context(cfg, slots)
    try:
        result = run_rft(queries, ctx, grader, rft_cfg)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    finally:
        client.close()
        for c in extra_clients:
            c.close()

    files = {"sft": ("sft.jsonl", result.sft), "dpo": ("dpo.jsonl", result.dpo), "grpo-log": ("grpo.jsonl", result.grpo)}
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in settings.formats:
            name, items = files[fmt]
            export_training_file(items, fmt, out / name, allow_empty=True)
            print(f"{fmt}: {len(items)} record(s) -> {out / name}")
            if not items:
                _err(f"warning: {fmt} file is empty (no problem had a correct rollout)")
        _write_jsonl(
            out / "rollouts.jsonl",
            [
                {"problem_id": r.problem_id, "index": r.index, "mode": r.mode.label(), "tokens": r.tokens,
                 "correct": r.correct, "failed": r.failed, "error": r.error}
                for s in result.sets for r in s.rollouts
            ],
        )
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write training files to {out}: {exc.strerror or exc}") from None
    for w in result.warnings:
        _err(f"warning: {w}")
    if result.skipped:
        _err(f"warning: {len(result.skipped)} problem(s) had no correct rollout: {', '.join(result.skipped)}")
    return EXIT_OK


def cmd_mock(args: argparse.Namespace) -> int:
    path = Path(args.fixture)
    try:
        if not path.exists() and "/" not in args.fixture:
            path = shipped_fixture(args.fixture)
        script = script_from_fixture(path)
    except FixtureError as exc:
        code = EXIT_IO if exc.line is None else EXIT_CONFIG
        raise CliError(code, str(exc)) from None
    try:
        server = MockServer(script, args.port, args.host)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot bind {args.host}:{args.port}: {exc.strerror or exc}") from None
    print(f"mock model serving {len(script.entries)} entries at {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    src = Path(args.records)
    rec_path = src / "records.jsonl" if src.is_dir() else src
    if not rec_path.exists():
        raise CliError(EXIT_IO, f"no records found at {rec_path}")
    try:
        records = load_records(rec_path)
        out_path = rec_path.parent / "outcomes.jsonl"
        outcomes = load_outcomes(out_path) if out_path.exists() else []
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_IO, f"cannot read records: {exc}") from None
    if not records:
        raise CliError(EXIT_IO, f"{rec_path} holds no records")
    try:
        rows = compute_metrics(records, args.baseline)
    except MissingBaselineError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    out = Path(args.out) if args.out else rec_path.parent
    formats = tuple(args.format.split(",")) if args.format else ("table", "csv", "records")
    try:
        emit_report(rows, outcomes, out, formats=formats, records=records)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report to {out}: {exc.strerror or exc}") from None
    if "table" in formats:
        print((out / "metrics.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


# ---- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinkswitch", description="Adaptive thinking-mode evaluation and RFT data tools.")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="YAML or JSON run config")
        sp.add_argument("--dataset", action="append", help="JSONL problem file (repeatable)")
        sp.add_argument("--endpoint", help="base URL or endpoint YAML/JSON file; token read from $THINKSWITCH_API_KEY")
        sp.add_argument("--profile", help="model profile (qwen3.5, gpt-oss, seed-oss, or one defined in the config)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--concurrency", type=int, help="max in-flight requests (default 8)")
        sp.add_argument("--judge-endpoint", help="LLM-as-judge endpoint (URL or file)")
        sp.add_argument("--grader-command", help="external grader command for code problems")
        sp.add_argument("--seed", type=int, help="seed for sampled presets and retry jitter")

    ev = sub.add_parser("eval", help="run strategies over datasets and write records and metrics")
    common(ev)
    ev.add_argument("--strategy", action="append", help="strategy or preset name (repeatable)")
    ev.add_argument("--baseline", help="baseline strategy for Red%% (default full_think)")
    ev.set_defaults(func=cmd_eval)

    rf = sub.add_parser("rft", help="build SFT / DPO / GRPO training files")
    common(rf)
    rf.add_argument("--strategy", dest="rft_strategy", choices=("pt", "rt", "baseline"), help="system-prompt family")
    rf.add_argument("--k", type=int, help="rollouts per mode")
    rf.add_argument("--formats", help="comma list of sft,dpo,grpo-log")
    rf.set_defaults(func=cmd_rft)

    mk = sub.add_parser("mock", help="serve a scripted mock endpoint until interrupted")
    mk.add_argument("--fixture", required=True, help="fixture path or shipped name (escalation_suite, routing_suite)")
    mk.add_argument("--port", type=int, default=8000)
    mk.add_argument("--host", default="127.0.0.1")
    mk.set_defaults(func=cmd_mock)

    rp = sub.add_parser("report", help="recompute metrics, frontier and CSV from saved records")
    rp.add_argument("--records", required=True, help="results directory or records.jsonl")
    rp.add_argument("--baseline", default="full_think")
    rp.add_argument("--out", help="output directory (default: next to the records)")
    rp.add_argument("--format", help="comma list of table,csv,records")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        _err(str(exc))
        return exc.code
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except FixtureError as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
