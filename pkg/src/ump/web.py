"""Minimal threaded WSGI plumbing shared by the model server and platform.

Handlers are framework-agnostic: they take a Request and return a Response;
routing, auth hand-off and ProblemDetail rendering live here. Services run
on a threading WSGI server so many instances can coexist in one process.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from socketserver import ThreadingMixIn
from urllib.parse import parse_qs
from wsgiref.simple_server import WSGIRequestHandler, WSGIServer, make_server

from . import errors
from .protocol import MEDIA_JSON, MEDIA_PROBLEM, ProblemDetail
from .util import to_json_bytes

LOGGER = logging.getLogger(__name__)

_STATUS_PHRASES = {
    200: "OK", 201: "Created", 204: "No Content",
    400: "Bad Request", 401: "Unauthorized", 403: "Forbidden", 404: "Not Found",
    405: "Method Not Allowed", 409: "Conflict", 410: "Gone",
    422: "Unprocessable Entity", 429: "Too Many Requests",
    500: "Internal Server Error", 502: "Bad Gateway", 504: "Gateway Timeout",
}

# browser clients (the scenario explorer) are served from a different origin
_CORS_HEADERS = (
    ("Access-Control-Allow-Origin", "*"),
    ("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"),
    ("Access-Control-Allow-Headers", "Authorization, Content-Type, Prefer, X-Federation-Hops"),
    ("Access-Control-Expose-Headers", "Location, Warning"),
)


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: bytes
    path_params: dict[str, str] = field(default_factory=dict)
    principal: object = None

    def header(self, name: str) -> str | None:
        return self.headers.get(name.lower())

    def prefer_async(self) -> bool:
        prefer = self.header("prefer") or ""
        return "respond-async" in [token.strip() for token in prefer.split(",")]

    def json_body(self):
        if not self.body:
            raise errors.bad_request("request body required")
        try:
            return json.loads(self.body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise errors.bad_request(f"malformed JSON body: {exc}") from exc

    def int_query(self, name: str, default: int, lo: int, hi: int) -> int:
        raw = self.query.get(name)
        if raw is None:
            return default
        try:
            value = int(raw)
        except ValueError:
            raise errors.bad_request(f"query parameter {name!r} must be an integer") from None
        if not lo <= value <= hi:
            raise errors.bad_request(f"query parameter {name!r} must be in [{lo}, {hi}]")
        return value


@dataclass
class Response:
    status: int = 200
    body: bytes = b""
    content_type: str = MEDIA_JSON
    headers: dict[str, str] = field(default_factory=dict)

    @classmethod
    def json(cls, doc, status: int = 200, headers: dict | None = None) -> "Response":
        return cls(status=status, body=to_json_bytes(doc), headers=dict(headers or {}))

    @classmethod
    def problem(cls, problem: ProblemDetail) -> "Response":
        return cls(status=problem.status, body=to_json_bytes(problem.to_dict()),
                   content_type=MEDIA_PROBLEM)


@dataclass
class Route:
    method: str
    pattern: str
    handler: object
    authenticated: bool = True
    regex: re.Pattern = None

    def __post_init__(self):
        parts = []
        for segment in self.pattern.strip("/").split("/"):
            if segment.startswith("{") and segment.endswith("}"):
                parts.append(f"(?P<{segment[1:-1]}>[^/]+)")
            else:
                parts.append(re.escape(segment))
        joined = "/".join(parts)
        self.regex = re.compile("^/" + joined + "$" if joined else "^/$")


class App:
    """Route table plus dispatch. `authenticator` maps an Authorization
    header to a principal and runs on every route flagged authenticated."""

    def __init__(self, authenticator=None):
        self.routes: list[Route] = []
        self.authenticator = authenticator

    def route(self, method: str, pattern: str, handler, authenticated: bool = True):
        self.routes.append(Route(method, pattern, handler, authenticated))

    def dispatch(self, request: Request) -> Response:
        matched_path = False
        for route in self.routes:
            m = route.regex.match(request.path)
            if not m:
                continue
            matched_path = True
            if route.method != request.method:
                continue
            request.path_params = m.groupdict()
            try:
                if route.authenticated and self.authenticator is not None:
                    request.principal = self.authenticator(request.header("authorization"))
                return route.handler(request)
            except errors.ApiError as exc:
                return Response.problem(exc.problem)
            except Exception as exc:  # noqa: BLE001 - render as 500, never leak a traceback body
                LOGGER.exception("unhandled error on %s %s", request.method, request.path)
                return Response.problem(errors.internal(f"unexpected error: {exc}").problem)
        if matched_path:
            return Response.problem(
                ProblemDetail(type="method-not-allowed", title="Method Not Allowed",
                              status=400, detail=f"{request.method} not supported here")
            )
        return Response.problem(errors.not_found(f"no route for {request.path}").problem)

    # -- WSGI adapter -------------------------------------------------------

    def wsgi(self, environ, start_response):
        try:
            length = int(environ.get("CONTENT_LENGTH") or 0)
        except ValueError:
            length = 0
        body = environ["wsgi.input"].read(length) if length else b""
        headers = {
            key[5:].replace("_", "-").lower(): value
            for key, value in environ.items()
            if key.startswith("HTTP_")
        }
        if environ.get("CONTENT_TYPE"):
            headers["content-type"] = environ["CONTENT_TYPE"]
        query = {k: v[0] for k, v in parse_qs(environ.get("QUERY_STRING", "")).items()}
        request = Request(
            method=environ["REQUEST_METHOD"],
            path=environ.get("PATH_INFO", "/") or "/",
            query=query,
            headers=headers,
            body=body,
        )
        if request.method == "OPTIONS":  # CORS preflight
            start_response("204 No Content", [("Content-Length", "0"), *_CORS_HEADERS])
            return [b""]
        response = self.dispatch(request)
        phrase = _STATUS_PHRASES.get(response.status, "Unknown")
        out_headers = [("Content-Type", response.content_type),
                       ("Content-Length", str(len(response.body)))]
        out_headers.extend(response.headers.items())
        out_headers.extend(_CORS_HEADERS)
        start_response(f"{response.status} {phrase}", out_headers)
        return [response.body]


class _ThreadingWSGIServer(ThreadingMixIn, WSGIServer):
    daemon_threads = True
    allow_reuse_address = True


class _QuietHandler(WSGIRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route access logs through logging
        LOGGER.debug("%s %s", self.address_string(), fmt % args)


class HttpService:
    """One bound listening socket serving an App from a background thread."""

    def __init__(self, app: App, host: str = "127.0.0.1", port: int = 0):
        self.app = app
        self._server = make_server(host, port, app.wsgi,
                                   server_class=_ThreadingWSGIServer,
                                   handler_class=_QuietHandler)
        self.host, self.port = self._server.server_address[:2]
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05),
            name=f"http-{self.port}", daemon=True)

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "HttpService":
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread.is_alive():
            self._thread.join(timeout=2.0)


def parse_bind_address(bind_address: str) -> tuple[str, int]:
    host, _, port = bind_address.rpartition(":")
    if not host:
        raise ValueError(f"bindAddress {bind_address!r} must be host:port")
    return host, int(port)
