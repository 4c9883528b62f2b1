"""A small JSON-over-HTTP layer shared by the device API and the stub server.

Routes are declared in a table (method, path pattern, handler, auth/role
flags) so the authorization policy of a whole service is inspectable and
testable as data rather than scattered through handlers.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import queue
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .auth import SessionStore, Session, Unauthorized

logger = logging.getLogger(__name__)


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: dict | None
    peer: tuple[str, int]
    params: dict[str, str] = field(default_factory=dict)
    session: Session | None = None

    @property
    def bearer_token(self) -> str | None:
        header = self.headers.get("authorization", "")
        if header.lower().startswith("bearer "):
            return header[7:].strip()
        # browsers cannot attach headers to an EventSource; the stream (and
        # only a caller that already holds a session) may pass the token here
        return self.query.get("token") or None


@dataclass
class Route:
    method: str
    pattern: str            # e.g. "/alarms/{id}/ack"; a trailing /* matches a subtree
    handler: object         # callable(Request) -> (status, json) | FileResponse | EventStream
    auth: bool = True
    role: str | None = None

    def match(self, method: str, path: str) -> dict[str, str] | None:
        if method != self.method:
            return None
        want = self.pattern.split("/")
        got = (path.rstrip("/") or "/").split("/")
        if want and want[-1] == "*":
            if got[:len(want) - 1] != want[:-1]:
                return None
            return {"*": "/".join(got[len(want) - 1:])}
        if len(want) != len(got):
            return None
        params = {}
        for expected, actual in zip(want, got):
            if expected.startswith("{") and expected.endswith("}"):
                params[expected[1:-1]] = actual
            elif expected != actual:
                return None
        return params


@dataclass
class FileResponse:
    path: Path
    content_type: str | None = None


@dataclass
class RawResponse:
    body: bytes
    content_type: str = "text/html"
    status: int = 200


class EventStream:
    """Server-sent events backed by a per-subscriber queue.

    The route handler returns one of these; the server then streams
    (event, json_text) pairs until the client goes away or the sentinel
    None is queued.
    """

    def __init__(self, subscribe, unsubscribe, keepalive: float = 10.0):
        self.subscribe = subscribe
        self.unsubscribe = unsubscribe
        self.keepalive = keepalive


class ApiError(Exception):
    """Handler-raised error carrying an HTTP status and a short code."""

    def __init__(self, status: int, code: str, detail: str = ""):
        self.status = status
        self.code = code
        self.detail = detail
        super().__init__(f"{status} {code}: {detail}")


def _write_json(handler: BaseHTTPRequestHandler, status: int, payload) -> None:
    raw = json.dumps(payload).encode("utf-8")
    handler.send_response(status)
    handler.send_header("Content-Type", "application/json")
    handler.send_header("Content-Length", str(len(raw)))
    handler.send_header("Access-Control-Allow-Origin", "*")
    handler.end_headers()
    handler.wfile.write(raw)


class JsonHttpServer:
    """Threaded HTTP server dispatching to a route table."""

    def __init__(self, routes: list[Route], host: str = "127.0.0.1",
                 port: int = 0, sessions: SessionStore | None = None,
                 name: str = "http"):
        self.routes = routes
        self.sessions = sessions
        self.name = name
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                logger.debug("%s %s", outer.name, fmt % args)

            def do_GET(self):
                outer._handle(self, "GET")

            def do_POST(self):
                outer._handle(self, "POST")

            def do_PUT(self):
                outer._handle(self, "PUT")

            def do_DELETE(self):
                outer._handle(self, "DELETE")

        class Server(ThreadingHTTPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=self.name, daemon=True)
        self._thread.start()
        logger.info("%s listening on port %d", self.name, self.port)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    # request dispatch -----------------------------------------------------

    def _handle(self, http: BaseHTTPRequestHandler, method: str) -> None:
        parsed = urlparse(http.path)
        path = parsed.path
        request = Request(
            method=method,
            path=path,
            query={k: v[-1] for k, v in parse_qs(parsed.query).items()},
            headers={k.lower(): v for k, v in http.headers.items()},
            body=None,
            peer=http.client_address,
        )
        route = None
        for candidate in self.routes:
            params = candidate.match(method, path)
            if params is not None:
                route, request.params = candidate, params
                break
        if route is None:
            _write_json(http, 404, {"error": "NotFound", "path": path})
            return
        if route.auth:
            if self.sessions is None:
                _write_json(http, 401, {"error": "Unauthorized"})
                return
            try:
                request.session = self.sessions.validate(request.bearer_token)
            except Unauthorized:
                _write_json(http, 401, {"error": "Unauthorized"})
                return
            if route.role and request.session.role != route.role:
                _write_json(http, 403, {"error": "Forbidden",
                                        "required_role": route.role})
                return
        length = int(request.headers.get("content-length", 0) or 0)
        if length:
            raw = http.rfile.read(length)
            try:
                request.body = json.loads(raw)
            except json.JSONDecodeError:
                _write_json(http, 400, {"error": "BadJson"})
                return
        try:
            result = route.handler(request)
        except ApiError as exc:
            payload = {"error": exc.code}
            if exc.detail:
                payload["detail"] = exc.detail
            _write_json(http, exc.status, payload)
            return
        except Exception:
            logger.exception("unhandled error in %s %s", method, path)
            _write_json(http, 500, {"error": "Internal"})
            return
        if isinstance(result, FileResponse):
            self._send_file(http, result)
        elif isinstance(result, RawResponse):
            http.send_response(result.status)
            http.send_header("Content-Type", result.content_type)
            http.send_header("Content-Length", str(len(result.body)))
            http.end_headers()
            http.wfile.write(result.body)
        elif isinstance(result, EventStream):
            self._stream_events(http, result)
        else:
            status, payload = result
            _write_json(http, status, payload)

    def _send_file(self, http: BaseHTTPRequestHandler, resp: FileResponse) -> None:
        try:
            raw = resp.path.read_bytes()
        except OSError:
            _write_json(http, 404, {"error": "NotFound"})
            return
        content_type = (resp.content_type
                        or mimetypes.guess_type(str(resp.path))[0]
                        or "application/octet-stream")
        http.send_response(200)
        http.send_header("Content-Type", content_type)
        http.send_header("Content-Length", str(len(raw)))
        http.end_headers()
        http.wfile.write(raw)

    def _stream_events(self, http: BaseHTTPRequestHandler,
                       stream: EventStream) -> None:
        subscription: queue.Queue = stream.subscribe()
        http.close_connection = True  # no content-length on an event stream
        http.send_response(200)
        http.send_header("Content-Type", "text/event-stream")
        http.send_header("Cache-Control", "no-cache")
        http.send_header("Access-Control-Allow-Origin", "*")
        http.end_headers()
        try:
            while True:
                try:
                    item = subscription.get(timeout=stream.keepalive)
                except queue.Empty:
                    http.wfile.write(b": keepalive\n\n")
                    http.wfile.flush()
                    continue
                if item is None:
                    return
                event, data = item
                chunk = f"event: {event}\ndata: {data}\n\n".encode("utf-8")
                http.wfile.write(chunk)
                http.wfile.flush()
        except OSError:
            pass
        finally:
            stream.unsubscribe(subscription)
