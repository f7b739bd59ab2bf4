"""Typed message envelope and frame codec for all broker traffic.

Frame format: 4-byte big-endian body length, then a UTF-8 JSON body capped
at 64 KiB. A zero-length frame is a connection heartbeat and is never
delivered as a message. Bodies with an "op" key are broker control frames
(subscribe/unsubscribe/drop counters, documented in PROTOCOL.md); all other
bodies are :class:`WireMessage` envelopes.

Every message type's payload is closed over an explicit field whitelist in
PAYLOAD_SCHEMAS, and payload values are restricted to JSON scalars, flat
lists, and one level of object nesting. No schema admits pixel buffers or
image fields: navigation state only ever crosses the wire.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import DecodeError, FrameTooLargeError, SchemaError

MAX_FRAME_BYTES = 64 * 1024
HEADER = struct.Struct(">I")

MESSAGE_TYPES = (
    "connect_request",
    "wave_signal",
    "bind_ack",
    "poi_list",
    "select_destination",
    "route_overview",
    "instruction",
    "veer",
    "haptic",
    "obstacle",
    "signal_advisory",
    "arrival",
    "tracking_lost",
    "compass_update",
    "steer_command",
    "world_snapshot",
    "error",
)

# field name -> allowed python types after JSON decode; lists hold scalars
# or flat objects. "?" prefix marks optional fields.
PAYLOAD_SCHEMAS: dict[str, dict[str, Any]] = {
    "connect_request": {"?resume": bool, "?client": str},
    "wave_signal": {"waving": bool},
    "bind_ack": {"track_id": int, "corner_label": str, "utterance": str},
    "poi_list": {"pois": list},
    "select_destination": {"poi_id": int},
    "route_overview": {
        "utterance": str,
        "total_length_m": float,
        "legs": int,
        "crossings": int,
        "destination": str,
        "?leg_list": list,
    },
    "instruction": {
        "utterance": str,
        "leg_index": int,
        "bearing_deg": float,
        "length_m": float,
        "kind": str,
        "to_label": str,
        "?signal_id": str,
    },
    "veer": {"side": str, "rate_hz": float, "veer_deg": float},
    "haptic": {"?veer_deg": float},
    "obstacle": {
        "utterance": str,
        "category": str,
        "distance_ft": int,
        "direction": str,
        "?track_id": int,
    },
    "signal_advisory": {
        "utterance": str,
        "advisory": str,
        "signal_id": str,
        "?remaining_s": float,
    },
    "arrival": {"utterance": str, "destination": str, "?end_distance_m": float},
    "tracking_lost": {"utterance": str},
    "compass_update": {"heading_deg": float},
    "steer_command": {
        "?turn_dps": float,
        "?speed_mps": float,
        "?set_heading_deg": float,
        "?waving": bool,
    },
    "world_snapshot": {
        "t": float,
        "frame_id": int,
        "agents": list,
        "detections": list,
        "tracks": list,
        "signals": list,
    },
    "error": {"code": str, "message": str},
}

# defense in depth on top of the whitelists: no payload field may even look
# like it carries imagery
_FORBIDDEN_FIELD_WORDS = ("pixel", "image", "img", "jpeg", "png", "video", "crop", "rgb")


@dataclass(frozen=True)
class WireMessage:
    topic: str
    type: str
    session_id: str
    seq: int
    timestamp_ms: int
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "type": self.type,
            "session_id": self.session_id,
            "seq": self.seq,
            "timestamp_ms": self.timestamp_ms,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "WireMessage":
        try:
            return WireMessage(
                topic=d["topic"],
                type=d["type"],
                session_id=d["session_id"],
                seq=d["seq"],
                timestamp_ms=d["timestamp_ms"],
                payload=d.get("payload", {}),
            )
        except KeyError as exc:
            raise SchemaError(f"missing envelope field {exc}") from exc


def _check_scalar(value, allow_containers=True):
    if isinstance(value, bool) or value is None:
        return
    if isinstance(value, (int, float, str)):
        return
    if allow_containers and isinstance(value, list):
        for item in value:
            _check_scalar(item, allow_containers=True)
        return
    if allow_containers and isinstance(value, dict):
        for key, item in value.items():
            _check_field_name(str(key))
            _check_scalar(item, allow_containers=True)
        return
    raise SchemaError(f"payload value of type {type(value).__name__} not allowed")


def _check_field_name(name: str):
    low = name.lower()
    for word in _FORBIDDEN_FIELD_WORDS:
        if word in low:
            raise SchemaError(f"payload field {name!r} suggests image data")


def validate_message(msg: WireMessage):
    """Raise SchemaError unless the message fits its type's payload schema."""
    if msg.type not in MESSAGE_TYPES:
        raise SchemaError(f"unknown message type {msg.type!r}")
    schema = PAYLOAD_SCHEMAS[msg.type]
    required = {k for k in schema if not k.startswith("?")}
    allowed = {k.lstrip("?") for k in schema}
    fields = set(msg.payload)
    missing = required - fields
    if missing:
        raise SchemaError(f"{msg.type}: missing payload fields {sorted(missing)}")
    extra = fields - allowed
    if extra:
        raise SchemaError(f"{msg.type}: unexpected payload fields {sorted(extra)}")
    for name, value in msg.payload.items():
        _check_field_name(name)
        _check_scalar(value)
        want = schema.get(name, schema.get("?" + name))
        if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            continue
        if want is int and isinstance(value, bool):
            raise SchemaError(f"{msg.type}.{name}: expected int, got bool")
        if value is not None and want is not None and not isinstance(value, want):
            raise SchemaError(
                f"{msg.type}.{name}: expected {want.__name__}, got {type(value).__name__}"
            )
    if not isinstance(msg.seq, int) or isinstance(msg.seq, bool):
        raise SchemaError("seq must be an integer")
    if not isinstance(msg.timestamp_ms, int) or isinstance(msg.timestamp_ms, bool):
        raise SchemaError("timestamp_ms must be an integer")
    if not isinstance(msg.topic, str) or not msg.topic:
        raise SchemaError("topic must be a non-empty string")


def encode(msg: WireMessage) -> bytes:
    """Length-prefixed JSON frame for a validated message."""
    validate_message(msg)
    body = json.dumps(msg.to_dict(), separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame body {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return HEADER.pack(len(body)) + body


def encode_control(op: dict) -> bytes:
    """Control frame (subscribe/unsubscribe/drops); body carries an 'op' key."""
    if "op" not in op:
        raise SchemaError("control frame needs an 'op' key")
    body = json.dumps(op, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"control frame {len(body)} bytes exceeds {MAX_FRAME_BYTES}")
    return HEADER.pack(len(body)) + body


HEARTBEAT = HEADER.pack(0)


def decode_body(body: bytes):
    """Decode one frame body into ('control', dict) | ('message', WireMessage)."""
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        offset = getattr(exc, "pos", getattr(exc, "start", 0))
        raise DecodeError(f"malformed frame body: {exc}", offset=offset) from exc
    if not isinstance(obj, dict):
        raise DecodeError("frame body must be a JSON object")
    if "op" in obj:
        return "control", obj
    msg = WireMessage.from_dict(obj)
    validate_message(msg)
    return "message", msg


def decode(frame: bytes):
    """Decode a complete frame (header + body). Returns decode_body's result."""
    if len(frame) < HEADER.size:
        raise DecodeError("frame shorter than header", offset=len(frame))
    (length,) = HEADER.unpack_from(frame)
    if length > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"declared body {length} exceeds {MAX_FRAME_BYTES}")
    body = frame[HEADER.size : HEADER.size + length]
    if len(body) != length:
        raise DecodeError(f"truncated frame: {len(body)} of {length} bytes", offset=len(frame))
    if length == 0:
        return "heartbeat", None
    return decode_body(body)


def topic_matches(pattern: str, topic: str) -> bool:
    """Exact-topic or single-level '+' wildcard subscription match."""
    if pattern == topic:
        return True
    p_parts = pattern.split("/")
    t_parts = topic.split("/")
    if len(p_parts) != len(t_parts):
        return False
    for p, t in zip(p_parts, t_parts):
        if p == "+":
            continue
        if p != t:
            return False
    return True


def uplink_topic(session_id: str) -> str:
    return f"session/{session_id}/uplink"


def feedback_topic(session_id: str) -> str:
    return f"session/{session_id}/feedback"


SIM_CONTROL_TOPIC = "sim/control"
SIM_STATE_TOPIC = "sim/state"
