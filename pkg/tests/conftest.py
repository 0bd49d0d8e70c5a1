import json
import socket
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
HTML_DIR = FIXTURES / "html"


@dataclass
class Route:
    body: bytes = b""
    status: int = 200
    content_type: str = "text/html; charset=utf-8"
    delay: float = 0.0
    # called with the parsed query string; returns (status, body) when set
    handler: object = None


class LocalServer:
    """Threaded HTTP server on an ephemeral port with per-path canned answers."""

    def __init__(self):
        self.routes = {}
        self.requests = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                parts = urlparse(self.path)
                server.requests.append(self.path)
                route = server.routes.get(parts.path)
                if route is None:
                    self.send_response(404)
                    self.end_headers()
                    return
                if route.delay:
                    time.sleep(route.delay)
                status, body = route.status, route.body
                if route.handler is not None:
                    status, body = route.handler(parse_qs(parts.query))
                self.send_response(status)
                self.send_header("Content-Type", route.content_type)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        class Server(ThreadingHTTPServer):
            def handle_error(self, request, client_address):
                pass  # clients that time out on purpose hang up mid-response

        self.httpd = Server(("127.0.0.1", 0), Handler)
        self.httpd.daemon_threads = True
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def url(self, path):
        return self.base + path

    def add(self, path, body=b"", **kw):
        if isinstance(body, str):
            body = body.encode("utf-8")
        self.routes[path] = Route(body=body, **kw)
        return self.url(path)

    def add_json(self, path, doc, status=200):
        return self.add(path, json.dumps(doc), status=status, content_type="application/json")


@pytest.fixture(scope="session")
def http_server():
    srv = LocalServer()
    srv.thread.start()
    yield srv
    srv.httpd.shutdown()
    srv.httpd.server_close()


@pytest.fixture
def closed_port_url():
    """An http URL on a local port with nothing listening."""
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}/"


@pytest.fixture(scope="session")
def html_truth():
    return json.loads((HTML_DIR / "truth.json").read_text())


def pagespeed_payload(optimization, fmt):
    return {"lighthouseResult": {"audits": {
        "uses-optimized-images": {"id": "uses-optimized-images", "score": optimization},
        "modern-image-formats": {"id": "modern-image-formats", "score": fmt},
    }}}


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    from usability_audit.dataset import write_csv
    from usability_audit.synthetic import planted_corpus

    records, planted = planted_corpus(n=422, seed=0)
    path = tmp_path_factory.mktemp("corpus") / "raw.csv"
    write_csv(records, path)
    return path, planted


# --- acceptance report ------------------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    name = mark.args[0]
    failed = call.excinfo is not None and call.excinfo.typename != "Skipped"
    if call.when == "call" or failed:
        _CRITERIA[name] = _CRITERIA.get(name, True) and not failed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _CRITERIA.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
