import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from xdx.errors import InvariantViolationError, MalformedResponseError, TransportError
from xdx.remote import remote_predictor


class _StubHandler(BaseHTTPRequestHandler):
    behavior = {"mode": "echo", "pair": [0.2, 0.8], "status": 200, "body": None}

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        request = json.loads(self.rfile.read(length))
        mode = self.behavior["mode"]
        if mode == "status":
            self.send_response(self.behavior["status"])
            self.end_headers()
            return
        if mode == "raw":
            payload = self.behavior["body"].encode("utf-8")
        elif mode == "short":
            payload = json.dumps({"probs": [self.behavior["pair"]]}).encode("utf-8")
        else:
            rows = [list(self.behavior["pair"]) for _ in request["texts"]]
            payload = json.dumps({"probs": rows}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/predict"
    server.shutdown()


def _set(mode, **kwargs):
    _StubHandler.behavior = {"mode": mode, "pair": [0.2, 0.8], "status": 200, "body": None, **kwargs}


def test_echo_contract(stub_server):
    _set("echo", pair=[0.2, 0.8])
    predictor = remote_predictor(stub_server, timeout=5)
    probs = predictor(["anything", "at all"])
    assert len(probs) == 2
    assert probs[0].p_real == pytest.approx(0.2)
    assert probs[0].p_fake == pytest.approx(0.8)


def test_renormalizes_small_drift(stub_server):
    _set("echo", pair=[0.5004, 0.5004])
    predictor = remote_predictor(stub_server, timeout=5)
    p = predictor(["x"])[0]
    assert p.p_real == pytest.approx(0.5)
    assert p.p_fake == pytest.approx(0.5)


def test_rejects_large_drift(stub_server):
    _set("echo", pair=[0.9, 0.9])
    predictor = remote_predictor(stub_server, timeout=5)
    with pytest.raises(InvariantViolationError):
        predictor(["x"])


def test_rejects_negative_probability(stub_server):
    _set("echo", pair=[-0.1, 1.1])
    predictor = remote_predictor(stub_server, timeout=5)
    with pytest.raises(InvariantViolationError):
        predictor(["x"])


def test_non_200_is_transport_after_retries(stub_server):
    _set("status", status=503)
    predictor = remote_predictor(stub_server, timeout=5, retries=1)
    with pytest.raises(TransportError):
        predictor(["x"])


def test_unreachable_endpoint_is_transport():
    predictor = remote_predictor("http://127.0.0.1:1/predict", timeout=0.2, retries=0)
    with pytest.raises(TransportError):
        predictor(["x"])


def test_garbage_body_is_malformed(stub_server):
    _set("raw", body="this is not json")
    predictor = remote_predictor(stub_server, timeout=5)
    with pytest.raises(MalformedResponseError):
        predictor(["x"])


def test_wrong_row_count_is_malformed(stub_server):
    _set("short")
    predictor = remote_predictor(stub_server, timeout=5)
    with pytest.raises(MalformedResponseError):
        predictor(["a", "b", "c"])
