import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinkswitch.core import ThinkingMode
from thinkswitch.gateway import (
    CompletionRequest,
    ContextLengthError,
    DecodeError,
    EndpointConfig,
    GatewayClient,
    ModeMismatchError,
    RequestRejectedError,
    TransportError,
    build_body,
    map_mode,
    parse_response,
)
from thinkswitch.profiles import get_profile


def ok_body(content="ok", reasoning="", completion=3, reasoning_tokens=1, logprobs=None):
    usage = {"completion_tokens": completion}
    if reasoning_tokens is not None:
        usage["completion_tokens_details"] = {"reasoning_tokens": reasoning_tokens}
    return {
        "choices": [{"message": {"content": content, "reasoning_content": reasoning}, "logprobs": logprobs,
                     "finish_reason": "stop"}],
        "usage": usage,
    }


@pytest.mark.parametrize(
    "profile,mode,expected",
    [
        ("qwen3.5", ThinkingMode.think(), {"enable_thinking": True}),
        ("qwen3.5", ThinkingMode.no_think(), {"enable_thinking": False}),
        ("qwen3.5", ThinkingMode.budget(2048), {"enable_thinking": True, "thinking_budget": 2048}),
        ("qwen3.5", ThinkingMode.budget(0), {"enable_thinking": False}),
        ("gpt-oss", ThinkingMode.effort("medium"), {"reasoning_effort": "medium"}),
        ("seed-oss", ThinkingMode.budget(512), {"thinking_budget": 512}),
        ("seed-oss", ThinkingMode.no_think(), {"thinking_budget": 0}),
        ("seed-oss", ThinkingMode.think(), {"thinking_budget": 32768}),
    ],
)
def test_map_mode(profile, mode, expected):
    assert map_mode(get_profile(profile), mode) == expected


@pytest.mark.parametrize(
    "profile,mode",
    [("gpt-oss", ThinkingMode.think()), ("gpt-oss", ThinkingMode.budget(100)), ("qwen3.5", ThinkingMode.effort("low")),
     ("seed-oss", ThinkingMode.effort("high"))],
)
def test_mode_mismatch_names_both_kinds(profile, mode):
    with pytest.raises(ModeMismatchError) as info:
        map_mode(get_profile(profile), mode)
    msg = str(info.value)
    assert mode.kind.value in msg and get_profile(profile).family.value in msg


def test_body_nests_mode_fields_under_extension_root():
    req = CompletionRequest("hi", ThinkingMode.no_think(), system_prompt="sys", max_output_tokens=256,
                            want_logprobs=True, logprob_k=20)
    body = build_body(req, get_profile("qwen3.5"), "m")
    assert body["chat_template_kwargs"] == {"enable_thinking": False}
    assert body["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}]
    assert body["max_tokens"] == 256 and body["logprobs"] is True and body["top_logprobs"] == 20
    flat = build_body(CompletionRequest("hi", ThinkingMode.effort("low")), get_profile("gpt-oss"), "m")
    assert flat["reasoning_effort"] == "low" and "messages" in flat and "logprobs" not in flat


def test_parse_reported_split():
    t = parse_response(json.dumps(ok_body("ans", "why", 10, 4)).encode(), get_profile("qwen3.5"))
    assert (t.thinking_text, t.answer_text, t.thinking_tokens, t.answer_tokens, t.total_tokens) == ("why", "ans", 4, 6, 10)
    assert t.split_reported


def test_parse_inline_think_block_estimates_split():
    body = ok_body("<think>abcdefgh</think>final", "", 20, None)
    t = parse_response(json.dumps(body).encode(), get_profile("qwen3.5"))
    assert t.thinking_text == "abcdefgh" and t.answer_text == "final"
    assert t.thinking_tokens == 2 and t.total_tokens == 20 and not t.split_reported


def test_parse_seed_delimiters():
    body = ok_body("<seed:think>plan</seed:think>done", "", 5, None)
    t = parse_response(json.dumps(body).encode(), get_profile("seed-oss"))
    assert (t.thinking_text, t.answer_text) == ("plan", "done")


def test_parse_logprobs():
    lp = {"content": [{"token": "a", "logprob": -0.1, "top_logprobs": [{"token": "a", "logprob": -0.1},
                                                                     {"token": "b", "logprob": -2.4}]}]}
    t = parse_response(json.dumps(ok_body(logprobs=lp)).encode(), get_profile("qwen3.5"))
    assert t.per_token_logprobs[0].top == (("a", -0.1), ("b", -2.4))


@pytest.mark.parametrize(
    "payload",
    [b"not json", b"[]", b"{}", json.dumps({"choices": []}).encode(),
     json.dumps(ok_body(completion=-1)).encode(), json.dumps(ok_body(completion=3, reasoning_tokens=9)).encode(),
     json.dumps({"choices": [{"message": {"content": 5}}], "usage": {"completion_tokens": 1}}).encode()],
)
def test_parse_rejects_malformed(payload):
    with pytest.raises(DecodeError):
        parse_response(payload, get_profile("qwen3.5"))


json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-5, 10**6) | st.floats(allow_nan=True) | st.text(max_size=20),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(
        st.sampled_from(["choices", "message", "content", "usage", "completion_tokens", "logprobs", "token",
                         "reasoning_content", "completion_tokens_details", "reasoning_tokens", "top_logprobs", "x"]),
        inner, max_size=5),
    max_leaves=25,
)


@settings(max_examples=300, deadline=None)
@given(st.one_of(st.binary(max_size=200), json_values.map(lambda v: json.dumps(v).encode())))
def test_parse_fuzz_only_raises_decode_error(payload):
    try:
        parse_response(payload, get_profile("qwen3.5"))
    except DecodeError:
        pass


def make_client(handler, profile="qwen3.5", **kw):
    ep = EndpointConfig(base_url="http://mock.invalid/v1", model="m", backoff_base=0.0, **kw)
    return GatewayClient(ep, get_profile(profile), transport=httpx.MockTransport(handler), sleep=lambda s: None)


def test_retries_transient_then_succeeds():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) < 3:
            return httpx.Response(503, json={"error": {"message": "busy"}})
        return httpx.Response(200, json=ok_body())

    t = make_client(handler).complete(CompletionRequest("q", ThinkingMode.think()))
    assert t.answer_text == "ok" and len(calls) == 3


def test_gives_up_after_max_attempts():
    def handler(request):
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError, match="3 attempts"):
        make_client(handler).complete(CompletionRequest("q", ThinkingMode.think()))


def test_context_length_and_rejection_are_typed():
    ctx = make_client(lambda r: httpx.Response(400, json={"error": {"message": "maximum context length exceeded"}}))
    with pytest.raises(ContextLengthError):
        ctx.complete(CompletionRequest("q", ThinkingMode.think()))
    bad = make_client(lambda r: httpx.Response(422, json={"error": {"message": "nope"}}))
    with pytest.raises(RequestRejectedError):
        bad.complete(CompletionRequest("q", ThinkingMode.think()))


def test_auth_header_from_environment(monkeypatch):
    monkeypatch.setenv("THINKSWITCH_API_KEY", "sekret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=ok_body())

    make_client(handler, send_query_id=True).complete(CompletionRequest("q", ThinkingMode.think(), query_id="p7"))
    assert seen["auth"] == "Bearer sekret"
    assert seen["body"]["metadata"] == {"query_id": "p7"}


def test_mode_mismatch_raised_before_any_request():
    calls = []
    client = make_client(lambda r: calls.append(r) or httpx.Response(200, json=ok_body()), profile="gpt-oss")
    with pytest.raises(ModeMismatchError):
        client.complete(CompletionRequest("q", ThinkingMode.think()))
    assert calls == []
