"""One test per acceptance criterion; the session summary prints a PASS/FAIL line for each."""

import json
import math
import random
import string
import time
from fractions import Fraction

import conftest
import mpmath
import pytest
from conftest import mock_client, published_table

from thinkswitch.core import ResponseTrace, ThinkingMode
from thinkswitch.evaluation import AVG, Grader, compute_metrics, dominates, evaluate, load_dataset, pareto_frontier
from thinkswitch.mock import script_from_fixture, shipped_fixture
from thinkswitch.mock.script import tokenize
from thinkswitch.profiles import get_profile
from thinkswitch.rft import RewardParams, Rollout, RolloutSet, build_dpo_pairs, group_advantages, grpo_reward, select_sft
from thinkswitch.strategies import STRATEGIES, build_context
from thinkswitch.strategies.entropy import EscalationRule, should_escalate, token_entropy

SEED = 20240611


@pytest.mark.acceptance(1, "metric arithmetic reproduces the published AVG Acc / Red% columns")
def test_metric_arithmetic_against_published_table():
    start = time.perf_counter()
    data, records = published_table()
    rows = {r.strategy: r for r in compute_metrics(records, data["baseline"]) if r.dataset == AVG}
    elapsed = time.perf_counter() - start
    problems = []
    for row in data["rows"]:
        got = rows[row["method"]]
        if abs(got.acc - row["avg_acc"]) > 0.15:
            problems.append(f"{row['method']}: AVG Acc {got.acc:.2f} vs published {row['avg_acc']}")
        want_red = 0.0 if row["red_pct"] is None else row["red_pct"]
        if abs(got.red_pct - want_red) > 0.6:
            problems.append(f"{row['method']}: Red% {got.red_pct:+.2f} vs published {want_red:+.1f}")
    assert elapsed < 1.0, f"took {elapsed:.3f}s"
    assert not problems, f"{len(problems)} cell(s) out of tolerance:\n" + "\n".join(problems)


def oracle_entropy(lps):
    with mpmath.workdps(60):
        ws = [mpmath.exp(mpmath.mpf(x)) for x in lps]
        z = mpmath.fsum(ws)
        if len(ws) == 1:
            return 0.0
        h = -mpmath.fsum((w / z) * mpmath.log(w / z) for w in ws)
        return float(h / mpmath.log(len(ws)))


@pytest.mark.acceptance(2, "entropy matches a high-precision oracle; uniform = 1, singleton = 0")
def test_entropy_oracle():
    rng = random.Random(SEED)
    worst = 0.0
    for _ in range(1000):
        k = rng.randint(1, 20)
        shape = rng.choice(("spread", "peaked", "ties"))
        if shape == "spread":
            lps = [rng.uniform(-12, 0) for _ in range(k)]
        elif shape == "peaked":
            lps = [-1e-4] + [rng.uniform(-30, -8) for _ in range(k - 1)]
        else:
            lps = [rng.choice((-0.5, -1.5, -3.0)) for _ in range(k)]
        worst = max(worst, abs(token_entropy(lps) - oracle_entropy(lps)))
    assert worst <= 1e-9, worst
    for k in range(2, 21):
        for lp in (-math.log(k), -0.1, -7.25):
            assert token_entropy([lp] * k) == 1.0
    for lp in (0.0, -1e-4, -3.0, -40.0):
        assert token_entropy([lp]) == 0.0


@pytest.mark.acceptance(3, "escalation rule equals the count/fraction predicate and is monotone in tau")
def test_escalation_rule():
    rule = EscalationRule(threshold=0.5)
    for n in range(1, 201):
        for count in range(n + 1):
            entropies = [0.75] * count + [0.25] * (n - count)
            assert should_escalate(entropies, rule) == (count >= 3 or count / n > 0.05), (n, count)
    rng = random.Random(SEED)
    taus = [i / 100 for i in range(1, 100)]
    for _ in range(1000):
        vec = [rng.random() ** rng.choice((1, 3, 8)) for _ in range(rng.randint(1, 400))]
        fired = [should_escalate(vec, EscalationRule(threshold=t)) for t in taus]
        # once escalation stops as tau grows, it never resumes
        assert fired == sorted(fired, reverse=True)


def expected_pass_tokens(script, problem, think):
    for e in script.entries:
        if e.match.problem and e.match.problem in problem and e.match.think is think:
            r = e.replies[0]
            return len(tokenize(r.thinking)) + len(tokenize(r.answer))
    raise AssertionError(problem)


@pytest.mark.acceptance(4, "speculative strategies escalate exactly on the scripted problems; tokens are additive")
def test_speculative_end_to_end(escalation_server):
    start = time.perf_counter()
    fixture = shipped_fixture("escalation_suite")
    script = script_from_fixture(fixture)
    queries = load_dataset(fixture.with_name("escalation_suite.dataset.jsonl"))
    profile = get_profile("qwen3.5")
    expected = {"spec_trigger": {"esc-4", "esc-5"}, "spec_entropy": {"esc-3", "esc-5"}}
    with mock_client(escalation_server, profile) as client:
        ctx = build_context(client)
        for name, should in expected.items():
            results = evaluate(queries, "esc", STRATEGIES[name], ctx, Grader(), concurrency=4)
            escalated = {r.outcome.query_id for r in results if len(r.outcome.passes) == 2}
            assert escalated == should, (name, escalated)
            for r in results:
                o, q = r.outcome, next(q for q in queries if q.id == r.outcome.query_id)
                assert not o.failed
                first = expected_pass_tokens(script, q.problem, False)
                assert o.passes[0].trace.total_tokens == first
                if o.query_id in should:
                    second = expected_pass_tokens(script, q.problem, True)
                    assert o.passes[1].trace.total_tokens == second
                    assert o.total_tokens == r.record.total_tokens == first + second
                else:
                    assert o.total_tokens == first
    assert time.perf_counter() - start < 30


PROFILES = [get_profile(n) for n in ("qwen3.5", "gpt-oss", "seed-oss")]


def valid_case(rng, profile):
    if profile.family.value == "discrete-effort":
        level = rng.choice(("high", "medium", "low"))
        shown = rng.choice((level, level.upper(), level.capitalize()))
        return {"level": shown}, ThinkingMode.effort(level)
    budgets = (512, 1024, 2048, 4096) if profile.family.value == "budget-controlled" else (1024, 2048, 4096)
    mode = rng.choice((1, 2, 3))
    as_text = rng.random() < 0.7
    obj = {"mode": str(mode) if as_text else mode, "budget": None}
    if mode == 3:
        obj["budget"] = rng.choice(budgets)
        return obj, ThinkingMode.budget(obj["budget"])
    return obj, profile.full_think_mode if mode == 1 else profile.no_think_mode


def invalid_case(rng, profile):
    if profile.family.value == "discrete-effort":
        return rng.choice(({"level": "extreme"}, {"level": 3}, {"mode": "1", "budget": None}, {"level": None}, {}))
    return rng.choice((
        {"mode": "4", "budget": None}, {"mode": "0", "budget": None}, {"mode": "1", "budget": 1024},
        {"mode": "3", "budget": None}, {"mode": "3", "budget": 3000}, {"mode": "3", "budget": "lots"},
        {"mode": True, "budget": None}, {"level": "high"}, {"budget": 1024}, {"mode": [1]},
    ))


def wrap(rng, text):
    pre = rng.choice(("", "Decision: ", "```json\n", "Here is my routing choice.\n", "思考完毕 "))
    post = rng.choice(("", "\n```", " Good luck!", "\n\nReasoning: the problem is short."))
    return pre + text + post


@pytest.mark.acceptance(5, "judge parsing survives 10,000 fuzz cases; non-conforming output falls back to full think")
def test_routing_parse_fuzz():
    from thinkswitch.strategies.judge import parse_judge_decision

    rng = random.Random(SEED)
    alphabet = string.ascii_letters + string.digits + " \n\t:,.\"'[]}()-_é中"
    counts = dict.fromkeys(("valid", "embedded", "truncated", "invalid", "garbage"), 0)
    for i in range(10_000):
        profile = PROFILES[i % 3]
        kind = rng.choice(tuple(counts))
        counts[kind] += 1
        if kind in ("valid", "embedded"):
            obj, want = valid_case(rng, profile)
            text = json.dumps(obj)
            text = wrap(rng, text) if kind == "embedded" else text
        elif kind == "truncated":
            obj, _ = valid_case(rng, profile)
            full = json.dumps(obj)
            text, want = full[: rng.randint(0, len(full) - 1)], None
        elif kind == "invalid":
            text, want = wrap(rng, json.dumps(invalid_case(rng, profile))), None
        else:
            text, want = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 120))), None
        d = parse_judge_decision(text, profile)
        if want is None:
            assert d.source == "fallback" and d.mode == profile.full_think_mode, (profile.name, text)
        else:
            assert d.source == "parsed" and d.mode == want, (profile.name, text)
    assert min(counts.values()) > 1500


def random_set(rng):
    modes = (ThinkingMode.think(), ThinkingMode.no_think())[: rng.randint(1, 2)]
    K = rng.randint(1, 8)
    rollouts = []
    for idx in range(K * len(modes)):
        mode = modes[idx // K]
        failed = rng.random() < 0.05
        t = rng.choice((rng.randint(0, 40), rng.randint(0, 40000)))  # small ranges force ties
        resp = None if failed else ResponseTrace("", "", t, 0, t)
        rollouts.append(Rollout("p", mode, resp, (not failed) and rng.random() < 0.5, idx, failed=failed))
    return RolloutSet("p", tuple(rollouts), K, modes)


@pytest.mark.acceptance(6, "RFT selection, pairing, reward and advantages match brute-force oracles")
def test_rft_oracles():
    rng = random.Random(SEED)
    for _ in range(500):
        s = random_set(rng)
        correct = [(r.tokens, r.index) for r in s.rollouts if r.correct]
        want = min(correct)[1] if correct else None
        got = select_sft(s)
        assert (None if got is None else got.index) == want
        pairs = build_dpo_pairs(s)
        for p in pairs:
            assert p.chosen.correct and (not p.rejected.correct or p.rejected.tokens > p.chosen.tokens)
        if got is not None:
            expect = [r.index for r in s.rollouts if r is not got and not r.failed
                      and (not r.correct or r.tokens > got.tokens)]
            assert [p.rejected.index for p in pairs] == expect
        t_ref = rng.randint(1, 40000)
        params = RewardParams(t_ref, alpha=1.0, beta=0.5)
        rewards = []
        for r in s.rollouts:
            exact = 0 if not r.correct else 1 + Fraction(1, 2) * max(Fraction(0), 1 - Fraction(r.tokens, t_ref))
            got_r = grpo_reward(r.correct, r.tokens, params)
            assert abs(got_r - float(exact)) <= 1e-12
            rewards.append(got_r)
        adv = group_advantages(rewards)
        with mpmath.workdps(50):
            assert abs(mpmath.fsum(mpmath.mpf(a) for a in adv)) <= 1e-12


def brute_frontier(points):
    pts = {(float(a), float(t)) for a, t in points}
    return {p for p in pts if not any(dominates(q, p) for q in pts)}


@pytest.mark.acceptance(7, "Pareto frontier passes a brute-force dominance oracle")
def test_pareto_soundness():
    rng = random.Random(SEED)
    sets = []
    for _ in range(200):
        n = rng.randint(1, 40)
        if rng.random() < 0.5:
            sets.append([(rng.randint(0, 10), rng.randint(0, 10)) for _ in range(n)])  # ties and duplicates
        else:
            sets.append([(rng.uniform(0, 100), rng.uniform(0, 50000)) for _ in range(n)])
    data, records = published_table()
    sets.append([(r.acc, r.tok) for r in compute_metrics(records, data["baseline"]) if r.dataset == AVG])
    for pts in sets:
        front = pareto_frontier(pts)
        assert set(front) == brute_frontier(pts)
        assert len(front) == len(set(front))
        assert all(a[1] < b[1] and a[0] < b[0] for a, b in zip(front, front[1:]))


@pytest.mark.acceptance(8, "whole suite is hermetic (loopback only) and finishes under 2 minutes")
@pytest.mark.run_last
def test_hermetic_and_fast():
    elapsed = time.monotonic() - conftest.SESSION_START
    assert conftest.BLOCKED_CONNECTIONS == [], conftest.BLOCKED_CONNECTIONS
    assert elapsed < 120, f"suite took {elapsed:.1f}s"
