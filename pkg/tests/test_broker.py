import base64
import hashlib
import json
import socket
import threading
import time

import pytest

from streetnav.broker import Broker, BrokerClient, BrokerServer, _ws_build_frame, _ws_parse_frame
from streetnav.wire import HEADER, WireMessage, encode, encode_control


def _clock():
    return 1000


# -- in-process core ---------------------------------------------------------------


def test_two_subscribers_receive_once_in_order():
    broker = Broker()
    s1 = broker.attach("a")
    s2 = broker.attach("b")
    broker.subscribe(s1, "t/x")
    broker.subscribe(s2, "t/+")
    pub = broker.publisher("p", _clock)
    sent = [pub.publish("t/x", "haptic", "s", {}) for _ in range(5)]
    got1 = s1.drain()
    got2 = s2.drain()
    assert got1 == sent
    assert got2 == sent


def test_publish_without_subscribers_is_silent():
    broker = Broker()
    pub = broker.publisher("p", _clock)
    pub.publish("nobody/home", "haptic", "s", {})  # must not raise


def test_seq_strictly_increasing_per_topic():
    broker = Broker()
    sub = broker.attach("a")
    broker.subscribe(sub, "t/x")
    broker.subscribe(sub, "t/y")
    pub = broker.publisher("p", _clock)
    for i in range(10):
        pub.publish("t/x", "haptic", "s", {})
        pub.publish("t/y", "haptic", "s", {})
    msgs = sub.drain()
    for topic in ("t/x", "t/y"):
        seqs = [m.seq for m in msgs if m.topic == topic]
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == len(seqs)
        assert seqs[0] == 1


def test_drop_oldest_policy_and_counter():
    broker = Broker()
    sub = broker.attach("slow", maxlen=256)
    broker.subscribe(sub, "t")
    pub = broker.publisher("p", _clock)
    for _ in range(10_000):
        pub.publish("t", "haptic", "s", {})
    queued = sub.drain()
    assert len(queued) == 256
    assert sub.dropped_total == 10_000 - 256
    # the oldest were dropped: remaining seqs are the newest 256
    assert [m.seq for m in queued] == list(range(10_000 - 255, 10_001))


def test_fifo_under_concurrent_publishers():
    broker = Broker()
    sub = broker.attach("a", maxlen=100_000)
    broker.subscribe(sub, "race/+")
    def worker(name):
        pub = broker.publisher(name, _clock)
        for _ in range(2000):
            pub.publish(f"race/{name}", "haptic", "s", {})
    threads = [threading.Thread(target=worker, args=(f"w{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    msgs = sub.drain()
    assert len(msgs) == 8000
    for name in ("w0", "w1", "w2", "w3"):
        seqs = [m.seq for m in msgs if m.topic == f"race/{name}"]
        assert seqs == sorted(seqs) == list(range(1, 2001))


# -- TCP front end -----------------------------------------------------------------


@pytest.fixture
def server():
    broker = Broker()
    srv = BrokerServer(broker, port=0)  # ephemeral port
    srv.start()
    yield srv
    srv.stop()


def test_tcp_pub_sub_round_trip(server):
    sub_client = BrokerClient(port=server.port)
    sub_client.subscribe("demo/topic")
    time.sleep(0.05)
    pub_client = BrokerClient(port=server.port)
    sent = pub_client.publish("demo/topic", "haptic", "s1", {"veer_deg": 1.5})
    kind, got = sub_client.recv(timeout=2.0)
    assert kind == "message"
    assert got == sent
    sub_client.close()
    pub_client.close()


def test_tcp_fifo_and_wildcard(server):
    sub_client = BrokerClient(port=server.port)
    sub_client.subscribe("session/+/feedback")
    time.sleep(0.05)
    pub_client = BrokerClient(port=server.port)
    for i in range(50):
        pub_client.publish("session/u9/feedback", "haptic", "u9", {})
    seqs = []
    while len(seqs) < 50:
        item = sub_client.recv(timeout=2.0)
        assert item is not None, "timed out waiting for messages"
        kind, msg = item
        if kind == "message":
            seqs.append(msg.seq)
    assert seqs == list(range(1, 51))
    sub_client.close()
    pub_client.close()


def test_tcp_rejects_nothing_but_keeps_serving_after_bad_peer(server):
    # a peer sending garbage gets dropped; the broker keeps serving others
    bad = socket.create_connection(("127.0.0.1", server.port))
    bad.sendall(HEADER.pack(20) + b"\xff" * 20)
    time.sleep(0.1)
    bad.close()
    c = BrokerClient(port=server.port)
    c.subscribe("x")
    time.sleep(0.05)
    c.publish("x", "haptic", "s", {})
    kind, msg = c.recv(timeout=2.0)
    assert kind == "message"
    c.close()


# -- WebSocket gateway ----------------------------------------------------------------


def _ws_handshake(port):
    sock = socket.create_connection(("127.0.0.1", port))
    key = base64.b64encode(b"0123456789abcdef").decode()
    sock.sendall(
        (
            f"GET /ws HTTP/1.1\r\nHost: localhost:{port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        ).encode()
    )
    resp = b""
    while b"\r\n\r\n" not in resp:
        resp += sock.recv(4096)
    head = resp.split(b"\r\n\r\n", 1)[0].decode()
    assert "101" in head.split("\r\n")[0]
    expect = base64.b64encode(
        hashlib.sha1((key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest()
    ).decode()
    assert expect in head
    return sock


def _ws_send_text(sock, text: str):
    payload = text.encode()
    mask = b"\x01\x02\x03\x04"
    masked = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
    header = bytes([0x81])
    n = len(masked)
    assert n < 126
    header += bytes([0x80 | n]) + mask
    sock.sendall(header + masked)


def _ws_recv_text(sock, timeout=2.0):
    sock.settimeout(timeout)
    buf = b""
    while True:
        parsed = _ws_parse_frame(buf)
        if parsed is not None:
            opcode, payload, buf = parsed
            if opcode == 0x1:
                return payload.decode()
            continue
        buf += sock.recv(4096)


def test_websocket_round_trip(server):
    ws = _ws_handshake(server.port)
    _ws_send_text(ws, json.dumps({"op": "subscribe", "topic": "sim/state"}))
    time.sleep(0.05)
    pub = BrokerClient(port=server.port)
    sent = pub.publish(
        "sim/state",
        "world_snapshot",
        "-",
        {"t": 0.0, "frame_id": 0, "agents": [], "detections": [], "tracks": [], "signals": []},
    )
    text = _ws_recv_text(ws)
    got = json.loads(text)
    assert got["type"] == "world_snapshot"
    assert got["seq"] == sent.seq
    ws.close()
    pub.close()


def test_ws_frame_helpers_round_trip():
    payload = b'{"hello": 1}'
    frame = _ws_build_frame(0x1, payload)
    opcode, got, rest = _ws_parse_frame(frame)
    assert opcode == 0x1 and got == payload and rest == b""
    # long frame (16-bit length)
    big = b"x" * 300
    opcode, got, rest = _ws_parse_frame(_ws_build_frame(0x2, big))
    assert got == big


def test_static_file_serving(tmp_path):
    (tmp_path / "index.html").write_text("<html>ui</html>")
    broker = Broker()
    srv = BrokerServer(broker, port=0, ui_dir=str(tmp_path))
    srv.start()
    try:
        sock = socket.create_connection(("127.0.0.1", srv.port))
        sock.sendall(b"GET / HTTP/1.1\r\nHost: x\r\n\r\n")
        resp = b""
        sock.settimeout(2.0)
        try:
            while True:
                chunk = sock.recv(4096)
                if not chunk:
                    break
                resp += chunk
        except socket.timeout:
            pass
        assert b"200 OK" in resp and b"<html>ui</html>" in resp
        # path traversal is refused
        sock2 = socket.create_connection(("127.0.0.1", srv.port))
        sock2.sendall(b"GET /../../etc/passwd HTTP/1.1\r\nHost: x\r\n\r\n")
        resp2 = b""
        sock2.settimeout(2.0)
        try:
            while True:
                chunk = sock2.recv(4096)
                if not chunk:
                    break
                resp2 += chunk
        except socket.timeout:
            pass
        assert b"404" in resp2
        sock.close()
        sock2.close()
    finally:
        srv.stop()
