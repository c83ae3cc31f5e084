"""Deterministic in-process mock of an OpenAI-compatible chat server.

Responses are keyed on request content via responder callables, so
pipelines and evaluations replay byte-identically. The server also
tracks in-flight concurrency, supports scripted failure sequences, and
can pace streamed tokens at a configured rate for throughput tests.
"""

from __future__ import annotations

import json
import re
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence

from .client import estimate_tokens

Reply = "str | dict"


def echo_responder(payload: dict) -> str:
    """Default responder: repeat the last user message back."""
    for message in reversed(payload.get("messages", [])):
        if message.get("role") == "user":
            return str(message.get("content", ""))
    return ""


class RuleResponder:
    """Content-keyed canned responses.

    ``rules`` is an ordered list of (matcher, reply). A string matcher hits
    when it occurs in the concatenated message contents; a callable matcher
    receives the request payload. The first hit wins; ``default`` (or echo)
    handles the rest. Replies are either the reply text or a dict with any
    of: text, status, body, prompt_tokens, completion_tokens, omit_usage,
    finish_reason, stream_n_tokens.
    """

    def __init__(self, rules: Sequence[tuple], default: "Callable[[dict], str | dict] | None" = None):
        self.rules = list(rules)
        self.default = default or echo_responder

    def __call__(self, payload: dict) -> "str | dict":
        content = "\n".join(str(m.get("content", "")) for m in payload.get("messages", []))
        for matcher, reply in self.rules:
            hit = matcher(payload) if callable(matcher) else matcher in content
            if hit:
                return reply(payload) if callable(reply) else reply
        return self.default(payload)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output clean
        pass

    def do_POST(self):
        server: MockInferenceServer = self.server.owner  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw)
        except ValueError:
            self._send_error(400, "invalid JSON body")
            return
        with server._lock:
            server._in_flight += 1
            server.max_in_flight = max(server.max_in_flight, server._in_flight)
            server.requests.append({"payload": payload, "headers": dict(self.headers)})
            queued_status = (
                server._queued_statuses.popleft() if server._queued_statuses else None
            )
        try:
            if server.handler_delay_s:
                time.sleep(server.handler_delay_s)
            if not self.path.rstrip("/").endswith("/chat/completions"):
                self._send_error(404, f"unknown path {self.path}")
                return
            if queued_status is not None:
                self._send_error(queued_status, f"scripted failure {queued_status}")
                return
            reply = server.responder(payload)
            if isinstance(reply, str):
                reply = {"text": reply}
            status = int(reply.get("status", 200))
            if status != 200:
                self._send_error(status, str(reply.get("body", f"scripted failure {status}")))
                return
            if "raw_body" in reply:  # deliberately malformed 200 for protocol tests
                body = str(reply["raw_body"]).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
                return
            if payload.get("stream"):
                self._send_stream(server, payload, reply)
            else:
                self._send_completion(payload, reply)
        except BrokenPipeError:
            pass
        finally:
            with server._lock:
                server._in_flight -= 1

    def _send_error(self, status: int, message: str):
        body = json.dumps({"error": {"message": message}}).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _usage(self, payload: dict, reply: dict, text: str, n_stream_tokens: int | None = None):
        if reply.get("omit_usage"):
            return None
        contents = "".join(str(m.get("content", "")) for m in payload.get("messages", []))
        completion_default = (
            n_stream_tokens if n_stream_tokens is not None else estimate_tokens(text)
        )
        prompt = int(reply.get("prompt_tokens", estimate_tokens(contents)))
        completion = int(reply.get("completion_tokens", completion_default))
        return {
            "prompt_tokens": prompt,
            "completion_tokens": completion,
            "total_tokens": prompt + completion,
        }

    def _send_completion(self, payload: dict, reply: dict):
        text = str(reply.get("text", ""))
        body_obj = {
            "id": "mock-cmpl",
            "object": "chat.completion",
            "model": payload.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": reply.get("finish_reason", "stop"),
                }
            ],
        }
        usage = self._usage(payload, reply, text)
        if usage is not None:
            body_obj["usage"] = usage
        body = json.dumps(body_obj).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_stream(self, server: "MockInferenceServer", payload: dict, reply: dict):
        if "stream_n_tokens" in reply:
            n = int(reply["stream_n_tokens"])
            tokens = [f"tok{i} " for i in range(n)]
        elif reply.get("text"):
            tokens = re.findall(r"\S+\s*", str(reply["text"])) or [""]
        else:
            n = int(payload.get("max_tokens", 16))
            tokens = [f"tok{i} " for i in range(n)]
        ttft = reply.get("ttft_s", server.stream_ttft_s)
        rate = reply.get("tokens_per_s", server.stream_tokens_per_s)
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()

        def write_event(obj: dict):
            data = b"data: " + json.dumps(obj).encode("utf-8") + b"\n\n"
            self.wfile.write(f"{len(data):X}\r\n".encode("ascii") + data + b"\r\n")
            self.wfile.flush()

        if ttft:
            time.sleep(ttft)
        for i, tok in enumerate(tokens):
            if i > 0 and rate:
                time.sleep(1.0 / rate)
            write_event(
                {"choices": [{"index": 0, "delta": {"content": tok}, "finish_reason": None}]}
            )
        final = {"choices": [{"index": 0, "delta": {}, "finish_reason": "stop"}]}
        usage = self._usage(payload, reply, "".join(tokens), n_stream_tokens=len(tokens))
        if usage is not None:
            final["usage"] = usage
        write_event(final)
        done = b"data: [DONE]\n\n"
        self.wfile.write(f"{len(done):X}\r\n".encode("ascii") + done + b"\r\n")
        self.wfile.write(b"0\r\n\r\n")
        self.wfile.flush()


class MockInferenceServer:
    """Threaded mock server; use as a context manager.

    ``responder`` maps a request payload to a reply (see RuleResponder).
    ``handler_delay_s`` holds every request open to force overlap in
    concurrency tests; ``stream_ttft_s``/``stream_tokens_per_s`` pace
    streamed responses.
    """

    def __init__(
        self,
        responder: "Callable[[dict], str | dict] | None" = None,
        handler_delay_s: float = 0.0,
        stream_ttft_s: float = 0.0,
        stream_tokens_per_s: float | None = None,
    ):
        self.responder = responder or echo_responder
        self.handler_delay_s = handler_delay_s
        self.stream_ttft_s = stream_ttft_s
        self.stream_tokens_per_s = stream_tokens_per_s
        self.requests: list[dict] = []
        self.max_in_flight = 0
        self._in_flight = 0
        self._lock = threading.Lock()
        self._queued_statuses: deque[int] = deque()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def queue_statuses(self, statuses: Sequence[int]) -> None:
        """Serve these HTTP statuses (in order) to the next requests."""
        self._queued_statuses.extend(statuses)

    def start(self) -> "MockInferenceServer":
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._httpd.owner = self  # type: ignore[attr-defined]
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    @property
    def port(self) -> int:
        assert self._httpd is not None, "server not started"
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}/v1"

    def close(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockInferenceServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()
