from __future__ import annotations

import socket
import time
from pathlib import Path

import pytest

from thinkswitch.core import ResponseTrace, TokenLogprobs
from thinkswitch.gateway import CompletionRequest, EndpointConfig, GatewayClient
from thinkswitch.mock import script_from_fixture, serve, shipped_fixture
from thinkswitch.profiles import get_profile
from thinkswitch.strategies import build_context

FIXTURES = Path(__file__).parent / "fixtures"
SESSION_START = time.monotonic()
_ACCEPTANCE: dict[int, tuple[str, str]] = {}
BLOCKED_CONNECTIONS: list[object] = []

# ---- hermeticity guard: only loopback connections are allowed -----------------

_real_connect = socket.socket.connect


def _loopback_only(self, address):
    host = address[0] if isinstance(address, tuple) else address
    if isinstance(host, str) and host not in ("127.0.0.1", "localhost", "::1") and self.family in (
        socket.AF_INET,
        socket.AF_INET6,
    ):
        BLOCKED_CONNECTIONS.append(address)
        raise ConnectionRefusedError(f"test suite is hermetic; refused connection to {address}")
    return _real_connect(self, address)


socket.socket.connect = _loopback_only


# ---- acceptance reporting ---------------------------------------------------------


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")
    config.addinivalue_line("markers", "run_last: run after every other test")


def pytest_collection_modifyitems(session, config, items):
    # the runtime/hermeticity criterion must observe the whole session, so it runs last
    last = [i for i in items if i.get_closest_marker("run_last")]
    items[:] = [i for i in items if not i.get_closest_marker("run_last")] + last


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else "FAIL"
        if number not in _ACCEPTANCE or status == "FAIL":
            _ACCEPTANCE[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


# ---- shared helpers ---------------------------------------------------------------


def trace(thinking: str = "", answer: str = "", thinking_tokens: int | None = None, answer_tokens: int | None = None,
          logprobs=None) -> ResponseTrace:
    th = len(thinking.split()) if thinking_tokens is None else thinking_tokens
    an = len(answer.split()) if answer_tokens is None else answer_tokens
    return ResponseTrace(thinking, answer, th, an, th + an, per_token_logprobs=logprobs)


def confident_tokens(n: int, k: int = 20) -> tuple[TokenLogprobs, ...]:
    top = (("x", -1e-4),) + tuple((f"a{j}", -20.0) for j in range(1, k))
    return tuple(TokenLogprobs(f" t{i}", -1e-4, top) for i in range(n))


def uniform_token(k: int = 20) -> TokenLogprobs:
    import math

    return TokenLogprobs(" u", -math.log(k), tuple((f"c{j}", -math.log(k)) for j in range(k)))


class ScriptedCompleter:
    """In-process stand-in for GatewayClient: ``respond(request) -> ResponseTrace``."""

    def __init__(self, profile, respond):
        self.profile = profile
        self.respond = respond
        self.requests: list[CompletionRequest] = []

    def complete(self, request: CompletionRequest) -> ResponseTrace:
        self.requests.append(request)
        result = self.respond(request)
        if isinstance(result, Exception):
            raise result
        return result


@pytest.fixture
def qwen():
    return get_profile("qwen3.5")


@pytest.fixture
def gptoss():
    return get_profile("gpt-oss")


@pytest.fixture
def seed():
    return get_profile("seed-oss")


def make_ctx(profile, respond, **kw):
    client = ScriptedCompleter(profile, respond)
    return client, build_context(client, **kw)


@pytest.fixture
def escalation_server():
    with serve(script_from_fixture(shipped_fixture("escalation_suite"))) as server:
        yield server


@pytest.fixture
def routing_server():
    with serve(script_from_fixture(shipped_fixture("routing_suite"))) as server:
        yield server


def mock_client(server, profile, **endpoint_kw):
    ep = EndpointConfig(base_url=server.url, model="mock-model", backoff_base=0.001, backoff_cap=0.01, **endpoint_kw)
    return GatewayClient(ep, profile)


def published_table():
    """Recorded per-dataset (Acc, Tok) cells from the published comparison table, as EvalRecords.

    Each cell becomes 1000 records so that one-decimal accuracies are exact.
    """
    import json

    from thinkswitch.core import EvalRecord

    data = json.loads((FIXTURES / "published_comparison.json").read_text())
    records = []
    for row in data["rows"]:
        for dataset, cell in row["datasets"].items():
            hits = round(cell["acc"] * 10)
            records.extend(
                EvalRecord(f"{dataset}-{i}", dataset, row["method"], i < hits, cell["tok"]) for i in range(1000)
            )
    return data, records
