import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from texbake import fixtures


def obj_text(mesh, groups=None):
    """Serialise a TriMesh to OBJ text; ``groups`` maps face index -> group name."""
    lines = [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.positions]
    lines += [f"vt {float(u)!r} {float(v)!r}" for u, v in mesh.uvs]
    lines += [f"vn {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.normals]
    last = None
    for i, face in enumerate(mesh.faces):
        if groups is not None and groups[i] != last:
            lines.append(f"g {groups[i]}")
            last = groups[i]
        lines.append("f " + " ".join(f"{p + 1}/{t + 1}/{n + 1}" for p, n, t in face))
    return "\n".join(lines) + "\n"


@pytest.fixture
def write_obj(tmp_path):
    def _write(mesh, name="mesh.obj", groups=None):
        path = tmp_path / name
        path.write_text(obj_text(mesh, groups))
        return path

    return _write


@pytest.fixture(scope="session")
def cube():
    return fixtures.cube()


@pytest.fixture(scope="session")
def sphere():
    return fixtures.uv_sphere()


@pytest.fixture(scope="session")
def checker():
    return fixtures.checker(256, 8)


class _Stub:
    """Tiny JSON-over-HTTP service; ``handler(path, body) -> (status, body)``."""

    def __init__(self, handler):
        self.handler = handler
        self.requests = []
        stub = self

        class H(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append((self.path, body))
                status, reply = stub.handler(self.path, body)
                data = reply if isinstance(reply, bytes) else json.dumps(reply).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), H)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    made = []

    def _make(handler):
        s = _Stub(handler)
        made.append(s)
        return s

    yield _make
    for s in made:
        s.close()


def free_port_url():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    return f"http://127.0.0.1:{port}"


def rng(seed=0):
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------- acceptance summary

ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
