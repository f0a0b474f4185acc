"""A scriptable stand-in for a local inference server.

Speaks the same two endpoints the gateway uses (``POST /api/generate`` and
``GET /api/tags``) and records every request body, so tests can replay canned
replies, adversarial ones included, and inspect exactly what was sent.

    with MockInferenceServer(lambda req: '{"terms": ["entropy"]}') as srv:
        cfg = GatewayConfig(base_url=srv.url)
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Iterable, Union

Reply = Union[str, tuple[int, str]]
Responder = Callable[[dict[str, Any]], Reply]


class _Handler(BaseHTTPRequestHandler):
    server: _Server

    def log_message(self, format: str, *args: Any) -> None:
        pass

    def _send(self, status: int, body: str) -> None:
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:
        if self.path.rstrip("/") == "/api/tags":
            self._send(200, json.dumps({"models": [{"name": "mock"}]}))
        else:
            self._send(404, "{}")

    def do_POST(self) -> None:
        if self.path.rstrip("/") != "/api/generate":
            self._send(404, "{}")
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send(400, '{"error": "bad json"}')
            return
        owner = self.server.owner
        with owner.lock:
            owner.requests.append(body)
        reply = owner.respond(body)
        if isinstance(reply, tuple):
            status, raw = reply
            self._send(status, raw)
            return
        self._send(200, json.dumps({"model": body.get("model", ""), "response": reply, "done": True}))


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    owner: MockInferenceServer


class MockInferenceServer:
    """Serve replies from ``responder`` (a callable) or a fixed script.

    A responder receives the decoded request body and returns either the
    ``response`` text or a ``(status, raw_body)`` pair for transport-level
    misbehaviour. Passing an iterable instead replays its items in order.
    """

    def __init__(self, responder: Responder | Iterable[Reply] | None = None):
        self.requests: list[dict[str, Any]] = []
        self.lock = threading.Lock()
        self._script: list[Reply] | None = None
        self._responder: Responder | None = None
        if callable(responder):
            self._responder = responder
        elif responder is not None:
            self._script = list(responder)
        self._httpd: _Server | None = None
        self._thread: threading.Thread | None = None

    def respond(self, body: dict[str, Any]) -> Reply:
        if self._responder is not None:
            return self._responder(body)
        with self.lock:
            if self._script:
                return self._script.pop(0)
        return (500, '{"error": "mock script exhausted"}')

    @property
    def url(self) -> str:
        assert self._httpd is not None, "server not started"
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def prompts(self) -> list[str]:
        return [r.get("prompt", "") for r in self.requests]

    def start(self) -> MockInferenceServer:
        self._httpd = _Server(("127.0.0.1", 0), _Handler)
        self._httpd.owner = self
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=2)
            self._thread = None

    def __enter__(self) -> MockInferenceServer:
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()
