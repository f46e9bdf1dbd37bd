"""Loopback HTTP server that answers chat-completion requests from a script."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from thinkswitch.mock.script import Reply, Script, ScriptEntry, tokenize

logger = logging.getLogger(__name__)

MODEL_ID = "mock-model"


def _cut(pieces: list[str], n: int) -> str:
    return "".join(pieces[:n])


def render_reply(body: Mapping[str, Any], reply: Reply, response_id: str) -> dict[str, Any]:
    """Build the response object for ``reply``, honouring max_tokens and logprob requests."""
    think_pieces, answer_pieces = tokenize(reply.thinking), tokenize(reply.answer)
    th, an = reply.counts()
    finish = "stop"
    limit = body.get("max_tokens")
    if isinstance(limit, int) and not isinstance(limit, bool) and limit >= 0 and th + an > limit:
        th = min(th, limit)
        an = min(an, limit - th)
        finish = "length"
        think_pieces = think_pieces[:th]
        answer_pieces = answer_pieces[:an]
    thinking, answer = "".join(think_pieces), "".join(answer_pieces)

    message: dict[str, Any] = {"role": "assistant"}
    usage: dict[str, Any] = {
        "prompt_tokens": sum(len(tokenize(str(m.get("content", "")))) for m in body.get("messages", [])),
        "completion_tokens": th + an,
    }
    usage["total_tokens"] = usage["prompt_tokens"] + usage["completion_tokens"]
    if reply.report_split:
        message["content"] = answer
        message["reasoning_content"] = thinking
        usage["completion_tokens_details"] = {"reasoning_tokens": th}
    else:
        message["content"] = f"{reply.think_open}{thinking}{reply.think_close}{answer}" if thinking else answer

    logprobs = None
    if body.get("logprobs"):
        k = body.get("top_logprobs")
        k = k if isinstance(k, int) and not isinstance(k, bool) and k > 0 else 1
        logprobs = {"content": reply.logprobs.entries(think_pieces + answer_pieces, k)}

    return {
        "id": response_id,
        "object": "chat.completion",
        "created": 0,
        "model": body.get("model", MODEL_ID),
        "choices": [{"index": 0, "message": message, "logprobs": logprobs, "finish_reason": finish}],
        "usage": usage,
    }


class MockState:
    """Script plus per-entry hit counters; counters drive fail_first and reply cycling."""

    def __init__(self, script: Script) -> None:
        self.script = script
        self._hits: dict[int | None, int] = {}
        self._lock = threading.Lock()
        self.requests: list[dict[str, Any]] = []

    def hit(self, index: int | None, body: dict[str, Any]) -> int:
        with self._lock:
            n = self._hits.get(index, 0)
            self._hits[index] = n + 1
            self.requests.append(body)
            return n

    def respond(self, body: dict[str, Any]) -> tuple[int, bytes]:
        index, entry = self.script.find(body)
        n = self.hit(index, body)
        if index is None:
            logger.info("unmatched request; serving default reply")
        return self._answer(entry, n, body)

    @staticmethod
    def _answer(entry: ScriptEntry, n: int, body: dict[str, Any]) -> tuple[int, bytes]:
        if entry.latency_ms:
            time.sleep(entry.latency_ms / 1000)
        if n < entry.fail_first:
            return 503, _error_body("scripted transient failure", "server_error")
        if entry.error is not None:
            return entry.error.status, _error_body(entry.error.message, "invalid_request_error")
        if entry.raw_body is not None:
            return 200, entry.raw_body.encode()
        reply = entry.replies[(n - entry.fail_first) % len(entry.replies)]
        digest = hashlib.sha1(json.dumps(body, sort_keys=True).encode() + f"#{n}".encode()).hexdigest()[:24]
        payload = render_reply(body, reply, f"chatcmpl-{digest}")
        return 200, json.dumps(payload, sort_keys=True).encode()


def _error_body(message: str, kind: str) -> bytes:
    return json.dumps({"error": {"message": message, "type": kind}}).encode()


class _Handler(BaseHTTPRequestHandler):
    server: _Server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args: Any) -> None:
        logger.debug("mock: " + fmt, *args)

    def _send(self, status: int, payload: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self) -> None:
        if self.path.rstrip("/") in ("/v1/models", "/models"):
            self._send(200, json.dumps({"object": "list", "data": [{"id": MODEL_ID, "object": "model"}]}).encode())
        else:
            self._send(404, _error_body(f"no route {self.path}", "not_found"))

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        if self.path.rstrip("/") not in ("/v1/chat/completions", "/chat/completions"):
            self._send(404, _error_body(f"no route {self.path}", "not_found"))
            return
        try:
            body = json.loads(raw)
        except ValueError:
            self._send(400, _error_body("request body is not JSON", "invalid_request_error"))
            return
        if not isinstance(body, dict) or not isinstance(body.get("messages"), list):
            self._send(400, _error_body("request needs a messages list", "invalid_request_error"))
            return
        status, payload = self.server.state.respond(body)
        self._send(status, payload)


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, addr: tuple[str, int], state: MockState) -> None:
        super().__init__(addr, _Handler)
        self.state = state


class MockServer:
    """Handle for a running mock endpoint; use as a context manager or call ``close``."""

    def __init__(self, script: Script, port: int = 0, host: str = "127.0.0.1") -> None:
        self.state = MockState(script)
        self._server = _Server((host, port), self.state)  # OSError if the port is taken
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._server.server_address[0]}:{self.port}/v1"

    @property
    def requests(self) -> list[dict[str, Any]]:
        return self.state.requests

    def start(self) -> MockServer:
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.02}, name="mock-model", daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def close(self) -> None:
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
        self._server.server_close()

    def __enter__(self) -> MockServer:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def serve(script: Script, port: int = 0, host: str = "127.0.0.1") -> MockServer:
    """Start serving ``script`` in a background thread; port 0 picks a free port."""
    return MockServer(script, port, host).start()
