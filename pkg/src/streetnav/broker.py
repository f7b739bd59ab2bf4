"""Self-contained topic broker with TCP, WebSocket, and in-process clients.

Semantics: per-topic FIFO fan-out to every matching subscriber; each
subscriber owns one bounded queue (default 256) with a drop-oldest policy,
so a stalled consumer loses its stalest messages and accumulates a drop
counter instead of ever blocking a publisher. Subscriptions are exact
topics or single-level ``+`` wildcards.

Transports share one listener: raw framed TCP (see wire.py), an HTTP GET
that upgrades to a WebSocket at ``/ws`` carrying the same JSON bodies as
text frames, and static file serving for the walkthrough UI. Heartbeats
(zero-length frames / WS pings) flow every 5 s; a connection silent for
three intervals is dropped.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import mimetypes
import socket
import struct
import threading
import time
from collections import deque
from pathlib import Path
from typing import Callable, Optional

from .errors import DecodeError, FrameTooLargeError, SchemaError
from .wire import (
    HEADER,
    HEARTBEAT,
    MAX_FRAME_BYTES,
    WireMessage,
    decode_body,
    encode,
    encode_control,
    topic_matches,
    validate_message,
)

logger = logging.getLogger(__name__)

DEFAULT_PORT = 18930
HEARTBEAT_INTERVAL_S = 5.0
MISSED_HEARTBEATS_LIMIT = 3
_WS_MAGIC = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class Subscriber:
    """One consumer's bounded message queue plus its topic patterns."""

    def __init__(self, name: str, maxlen: int = 256):
        self.name = name
        self.maxlen = maxlen
        self.patterns: list[str] = []
        self.queue: deque = deque()
        self.dropped_total = 0
        self._undelivered_drops = 0
        self.cond = threading.Condition()
        self.closed = False

    def wants(self, topic: str) -> bool:
        return any(topic_matches(p, topic) for p in self.patterns)

    def offer(self, msg: WireMessage):
        with self.cond:
            if self.closed:
                return
            if len(self.queue) >= self.maxlen:
                self.queue.popleft()
                self.dropped_total += 1
                self._undelivered_drops += 1
            self.queue.append(msg)
            self.cond.notify()

    def drain(self) -> list[WireMessage]:
        """All pending messages, non-blocking."""
        with self.cond:
            out = list(self.queue)
            self.queue.clear()
            return out

    def pop(self, timeout: Optional[float] = None) -> Optional[WireMessage]:
        with self.cond:
            if not self.queue and timeout:
                self.cond.wait(timeout)
            if self.queue:
                return self.queue.popleft()
            return None

    def take_drop_count(self) -> int:
        with self.cond:
            n = self._undelivered_drops
            self._undelivered_drops = 0
            return n

    def close(self):
        with self.cond:
            self.closed = True
            self.cond.notify_all()


class Publisher:
    """Stamps per-topic monotone sequence numbers and timestamps."""

    def __init__(self, broker: "Broker", name: str, clock_ms: Callable[[], int]):
        self.broker = broker
        self.name = name
        self.clock_ms = clock_ms
        self._seq: dict[str, int] = {}

    def publish(self, topic: str, type: str, session_id: str, payload: Optional[dict] = None) -> WireMessage:
        seq = self._seq.get(topic, 0) + 1
        self._seq[topic] = seq
        msg = WireMessage(
            topic=topic,
            type=type,
            session_id=session_id,
            seq=seq,
            timestamp_ms=self.clock_ms(),
            payload=payload or {},
        )
        self.broker.route(msg)
        return msg


class Broker:
    """Topic router. Publishing only enqueues; it never blocks on consumers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers: list[Subscriber] = []

    def attach(self, name: str, maxlen: int = 256) -> Subscriber:
        sub = Subscriber(name, maxlen=maxlen)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def detach(self, sub: Subscriber):
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)
        sub.close()

    def subscribe(self, sub: Subscriber, pattern: str):
        with self._lock:
            if pattern not in sub.patterns:
                sub.patterns.append(pattern)

    def unsubscribe(self, sub: Subscriber, pattern: str):
        with self._lock:
            if pattern in sub.patterns:
                sub.patterns.remove(pattern)

    def publisher(self, name: str, clock_ms: Callable[[], int]) -> Publisher:
        return Publisher(self, name, clock_ms)

    def route(self, msg: WireMessage):
        validate_message(msg)
        with self._lock:
            targets = [s for s in self._subscribers if s.wants(msg.topic)]
        for sub in targets:
            sub.offer(msg)


# ---------------------------------------------------------------------------
# network front end
# ---------------------------------------------------------------------------


class _Connection:
    """One TCP or WebSocket client served by reader+writer threads."""

    def __init__(self, server: "BrokerServer", sock: socket.socket, addr):
        self.server = server
        self.sock = sock
        self.addr = addr
        self.sub = server.broker.attach(f"conn-{addr}")
        self.alive = True
        self.is_websocket = False
        self.last_rx = time.monotonic()
        self._send_lock = threading.Lock()

    # -- sending -------------------------------------------------------------

    def send_frame(self, payload: bytes):
        with self._send_lock:
            self.sock.sendall(payload)

    def send_message(self, msg: WireMessage):
        if self.is_websocket:
            body = encode(msg)[HEADER.size :]
            self.send_frame(_ws_build_frame(0x1, body))
        else:
            self.send_frame(encode(msg))

    def send_control(self, op: dict):
        if self.is_websocket:
            body = encode_control(op)[HEADER.size :]
            self.send_frame(_ws_build_frame(0x1, body))
        else:
            self.send_frame(encode_control(op))

    def send_heartbeat(self):
        if self.is_websocket:
            self.send_frame(_ws_build_frame(0x9, b""))
        else:
            self.send_frame(HEARTBEAT)

    # -- inbound handling ------------------------------------------------------

    def handle_body(self, body: bytes):
        self.last_rx = time.monotonic()
        if not body:
            return
        kind, obj = decode_body(body)
        if kind == "control":
            op = obj.get("op")
            if op == "subscribe":
                self.server.broker.subscribe(self.sub, str(obj.get("topic", "")))
            elif op == "unsubscribe":
                self.server.broker.unsubscribe(self.sub, str(obj.get("topic", "")))
            elif op == "ping":
                self.send_control({"op": "pong"})
            else:
                logger.debug("conn %s: ignoring control op %r", self.addr, op)
            return
        self.server.broker.route(obj)

    def close(self):
        if not self.alive:
            return
        self.alive = False
        self.server.broker.detach(self.sub)
        try:
            self.sock.close()
        except OSError:
            pass


class BrokerServer:
    """TCP/WS/HTTP front end over a Broker."""

    def __init__(
        self,
        broker: Broker,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        ui_dir: Optional[str] = None,
    ):
        self.broker = broker
        self.host = host
        self.port = port
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self._listener: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._connections: list[_Connection] = []
        self._conn_lock = threading.Lock()
        self._stopping = threading.Event()

    def start(self):
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(32)
        self.port = listener.getsockname()[1]
        self._listener = listener
        t = threading.Thread(target=self._accept_loop, name="broker-accept", daemon=True)
        t.start()
        self._threads.append(t)
        logger.info("broker listening on %s:%d", self.host, self.port)

    def stop(self):
        self._stopping.set()
        if self._listener:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._conn_lock:
            conns = list(self._connections)
        for conn in conns:
            conn.close()

    def _accept_loop(self):
        while not self._stopping.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            conn = _Connection(self, sock, addr)
            with self._conn_lock:
                self._connections.append(conn)
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True,
                name=f"broker-conn-{addr}",
            ).start()

    def _serve_connection(self, conn: _Connection):
        try:
            first = conn.sock.recv(4, socket.MSG_PEEK)
            if first.startswith(b"GET ") or first.startswith(b"HEAD"):
                self._serve_http(conn)
            else:
                self._serve_framed(conn)
        except (OSError, DecodeError, FrameTooLargeError, SchemaError) as exc:
            logger.debug("conn %s dropped: %s", conn.addr, exc)
        finally:
            conn.close()
            with self._conn_lock:
                if conn in self._connections:
                    self._connections.remove(conn)

    # -- framed TCP ---------------------------------------------------------

    def _serve_framed(self, conn: _Connection):
        writer = threading.Thread(
            target=self._writer_loop, args=(conn,), daemon=True,
            name=f"broker-writer-{conn.addr}",
        )
        writer.start()
        buf = b""
        conn.sock.settimeout(1.0)
        while conn.alive and not self._stopping.is_set():
            try:
                chunk = conn.sock.recv(65536)
            except socket.timeout:
                if time.monotonic() - conn.last_rx > HEARTBEAT_INTERVAL_S * MISSED_HEARTBEATS_LIMIT:
                    logger.info("conn %s: heartbeat timeout", conn.addr)
                    return
                continue
            except OSError:
                return
            if not chunk:
                return
            buf += chunk
            while len(buf) >= HEADER.size:
                (length,) = HEADER.unpack_from(buf)
                if length > MAX_FRAME_BYTES:
                    raise FrameTooLargeError(f"conn {conn.addr}: frame {length} bytes")
                if len(buf) < HEADER.size + length:
                    break
                body = buf[HEADER.size : HEADER.size + length]
                buf = buf[HEADER.size + length :]
                conn.handle_body(body)

    def _writer_loop(self, conn: _Connection):
        last_beat = time.monotonic()
        while conn.alive and not self._stopping.is_set():
            msg = conn.sub.pop(timeout=0.5)
            try:
                drops = conn.sub.take_drop_count()
                if drops:
                    conn.send_control({"op": "drops", "count": drops})
                if msg is not None:
                    conn.send_message(msg)
                if time.monotonic() - last_beat >= HEARTBEAT_INTERVAL_S:
                    conn.send_heartbeat()
                    last_beat = time.monotonic()
            except OSError:
                conn.close()
                return

    # -- HTTP / WebSocket -----------------------------------------------------

    def _serve_http(self, conn: _Connection):
        conn.sock.settimeout(5.0)
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.sock.recv(65536)
            if not chunk:
                return
            data += chunk
            if len(data) > 65536:
                return
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        lines = head.split("\r\n")
        method, path, _ = lines[0].split(" ", 2)
        headers = {}
        for line in lines[1:]:
            if ":" in line:
                k, v = line.split(":", 1)
                headers[k.strip().lower()] = v.strip()

        if path.split("?")[0] == "/ws" and headers.get("upgrade", "").lower() == "websocket":
            self._serve_websocket(conn, headers)
            return
        self._serve_static(conn, method, path)

    def _serve_static(self, conn: _Connection, method: str, path: str):
        path = path.split("?")[0]
        if self.ui_dir is None:
            conn.send_frame(_http_response(404, b"no ui directory configured"))
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir)) or not target.is_file():
            conn.send_frame(_http_response(404, b"not found"))
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        body = target.read_bytes() if method == "GET" else b""
        conn.send_frame(_http_response(200, body, ctype))

    def _serve_websocket(self, conn: _Connection, headers: dict):
        key = headers.get("sec-websocket-key", "")
        accept = base64.b64encode(
            hashlib.sha1((key + _WS_MAGIC).encode()).digest()
        ).decode()
        conn.send_frame(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\nConnection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode()
        )
        conn.is_websocket = True
        writer = threading.Thread(
            target=self._writer_loop, args=(conn,), daemon=True,
            name=f"broker-ws-writer-{conn.addr}",
        )
        writer.start()
        conn.sock.settimeout(1.0)
        buf = b""
        while conn.alive and not self._stopping.is_set():
            try:
                chunk = conn.sock.recv(65536)
            except socket.timeout:
                if time.monotonic() - conn.last_rx > HEARTBEAT_INTERVAL_S * MISSED_HEARTBEATS_LIMIT:
                    return
                continue
            except OSError:
                return
            if not chunk:
                return
            buf += chunk
            while True:
                parsed = _ws_parse_frame(buf)
                if parsed is None:
                    break
                opcode, payload, buf = parsed
                if opcode == 0x8:  # close
                    return
                if opcode == 0x9:  # ping -> pong
                    conn.send_frame(_ws_build_frame(0xA, payload))
                    conn.last_rx = time.monotonic()
                    continue
                if opcode == 0xA:  # pong
                    conn.last_rx = time.monotonic()
                    continue
                if opcode in (0x1, 0x2):
                    conn.handle_body(payload)


def _http_response(status: int, body: bytes, ctype: str = "text/plain") -> bytes:
    reason = {200: "OK", 404: "Not Found"}.get(status, "OK")
    head = (
        f"HTTP/1.1 {status} {reason}\r\n"
        f"Content-Type: {ctype}\r\nContent-Length: {len(body)}\r\n"
        "Connection: close\r\n\r\n"
    )
    return head.encode() + body


def _ws_parse_frame(buf: bytes):
    """Parse one WebSocket frame; returns (opcode, payload, rest) or None."""
    if len(buf) < 2:
        return None
    b0, b1 = buf[0], buf[1]
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    length = b1 & 0x7F
    idx = 2
    if length == 126:
        if len(buf) < 4:
            return None
        length = struct.unpack_from(">H", buf, 2)[0]
        idx = 4
    elif length == 127:
        if len(buf) < 10:
            return None
        length = struct.unpack_from(">Q", buf, 2)[0]
        idx = 10
    if length > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"websocket frame {length} bytes")
    mask = b""
    if masked:
        if len(buf) < idx + 4:
            return None
        mask = buf[idx : idx + 4]
        idx += 4
    if len(buf) < idx + length:
        return None
    payload = buf[idx : idx + length]
    if masked:
        payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
    return opcode, payload, buf[idx + length :]


def _ws_build_frame(opcode: int, payload: bytes) -> bytes:
    header = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        header += bytes([n])
    elif n < 1 << 16:
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    return header + payload


# ---------------------------------------------------------------------------
# client side (used by the CLI's protocol-dump and by tests)
# ---------------------------------------------------------------------------


class BrokerClient:
    """Blocking framed-TCP client for the broker."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._buf = b""
        self._seq: dict[str, int] = {}

    def subscribe(self, pattern: str):
        self.sock.sendall(encode_control({"op": "subscribe", "topic": pattern}))

    def publish(self, topic: str, type: str, session_id: str, payload: Optional[dict] = None,
                timestamp_ms: Optional[int] = None):
        seq = self._seq.get(topic, 0) + 1
        self._seq[topic] = seq
        msg = WireMessage(
            topic=topic,
            type=type,
            session_id=session_id,
            seq=seq,
            timestamp_ms=timestamp_ms if timestamp_ms is not None else int(time.time() * 1000),
            payload=payload or {},
        )
        self.sock.sendall(encode(msg))
        return msg

    def send_heartbeat(self):
        self.sock.sendall(HEARTBEAT)

    def recv(self, timeout: Optional[float] = None):
        """Next (kind, obj) where kind is 'message'|'control'; None on timeout."""
        self.sock.settimeout(timeout)
        while True:
            while len(self._buf) >= HEADER.size:
                (length,) = HEADER.unpack_from(self._buf)
                if len(self._buf) < HEADER.size + length:
                    break
                body = self._buf[HEADER.size : HEADER.size + length]
                self._buf = self._buf[HEADER.size + length :]
                if length == 0:
                    continue  # heartbeat
                return decode_body(body)
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                return None
            if not chunk:
                raise ConnectionError("broker closed connection")
            self._buf += chunk

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
