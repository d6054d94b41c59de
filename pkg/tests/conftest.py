import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from logicls import catalog
from logicls.lang import parse

# Pushpins with the count rule split by direction, so that too few and too
# many pins per compartment are told apart.
PUSHPINS_DIRECTIONAL = """
scenario "pushpins" {
  classes: missing_pushpin, additional_pushpin
  objects: pushpin
  region compartments = grid(3, 5) over [0, 0, 1500, 900]
  constraint too_few violation="missing_pushpin" count(pushpin) >= 1 per compartments
  constraint too_many violation="additional_pushpin" count(pushpin) <= 1 per compartments
}
"""

# One constraint of every kind.
ALL_KINDS = """
scenario "kinds" {
  classes: lost, crowded, misplaced, far, small, off_color, mismatched
  objects: box, lid, tag, plug, socket
  region tray = [0, 0, 1000, 800]
  region cells = grid(2, 2) over [0, 0, 1000, 800]
  maxcount tag = 2
  maxcount plug = 2
  constraint c_count violation="lost" count(box) >= 1
  constraint c_cell violation="crowded" count(tag) <= 1 per cells
  constraint c_rel violation="misplaced" relation(lid, box) is above
  constraint c_dist violation="far" distance(lid, box) <= 500
  constraint c_size violation="small" size_ratio(box, lid) >= 1.2
  constraint c_attr violation="off_color" attribute(tag, color) in {red, "dark blue"}
  constraint c_pair violation="mismatched" pairing(plug, socket) by port order_by rank
}
"""


@pytest.fixture(scope="session")
def specs():
    return catalog.load_all()


@pytest.fixture(scope="session")
def directional_pushpins():
    return parse(PUSHPINS_DIRECTIONAL)


@pytest.fixture(scope="session")
def kinds_spec():
    return parse(ALL_KINDS)


class _Replies:
    """Scripted replies for the fake answer server: a callable from request body to response."""

    def __init__(self):
        self.handler = lambda body: {"text": "<think>ok</think><answer>yes</answer>"}
        self.requests = []
        self.status = 200


@pytest.fixture()
def answer_server():
    replies = _Replies()

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 - http.server naming
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            replies.requests.append((self.path, body))
            if replies.status != 200:
                self.send_response(replies.status)
                self.end_headers()
                return
            out = replies.handler(body)
            data = out if isinstance(out, bytes) else json.dumps(out).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    replies.url = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        yield replies
    finally:
        server.shutdown()
        server.server_close()


# Acceptance results, one (number, title, passed, detail) row per criterion,
# echoed at the end of the run so they show without ``-s``.
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} ({detail})")
