"""Newline-delimited JSON wire format shared by sensor, processing and consumer.

Every message is one UTF-8 line::

    {"v":1,"type":"register_user","ts":1700000000000.0,"body":{...}}\\n

``ts`` is the sender's wall clock in epoch milliseconds when the message was
written; one-way hop latency is receiver clock minus ``ts``.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Any

VERSION = 1

MESSAGE_TYPES = (
    "register_sensor",
    "register_user",
    "update_zone",
    "frame",
    "event",
    "ack",
    "error",
)

# required body keys per type; extra keys are allowed except on user messages
REQUIRED = {
    "register_sensor": ("device_id", "socket_in", "trajectory", "zone", "position"),
    "register_user": ("device_id", "socket_in", "zone"),
    "update_zone": ("device_id", "zone"),
    "frame": ("frame_id", "sensor_id", "timestamp", "width", "height", "boxes"),
    "event": (
        "event_id", "sensor_id", "sensor_position", "object_bearing", "object_class",
        "heading", "zone", "t_detect", "severity_hint",
    ),
    "ack": ("ref",),
    "error": ("code", "message"),
}

# user modules may only ever say who they are, where to reach them and their zone
USER_ALLOWED = {
    "register_user": {"device_id", "socket_in", "zone"},
    "update_zone": {"device_id", "zone"},
}
PRIVATE_KEYS = frozenset({
    "lat", "lon", "latitude", "longitude", "position", "bearing", "trajectory",
    "speed", "heading", "x", "y",
})


class ProtocolError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


def now_ms() -> float:
    return time.time() * 1000.0


@dataclass
class WireMessage:
    type: str
    body: dict = field(default_factory=dict)
    ts: float = field(default_factory=now_ms)
    v: int = VERSION

    def to_dict(self) -> dict:
        return {"v": self.v, "type": self.type, "ts": self.ts, "body": self.body}


def _validate(obj: Any) -> WireMessage:
    if not isinstance(obj, dict):
        raise ProtocolError("message must be a JSON object")
    missing = [k for k in ("v", "type", "ts", "body") if k not in obj]
    if missing:
        raise ProtocolError(f"envelope missing {', '.join(missing)}")
    if obj["v"] != VERSION:
        raise ProtocolError(f"unsupported protocol version {obj['v']!r}")
    mtype = obj["type"]
    if mtype not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {mtype!r}")
    ts = obj["ts"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise ProtocolError("ts must be a number")
    body = obj["body"]
    if not isinstance(body, dict):
        raise ProtocolError("body must be an object")
    missing = [k for k in REQUIRED[mtype] if k not in body]
    if missing:
        raise ProtocolError(f"{mtype} body missing {', '.join(missing)}")
    if mtype in USER_ALLOWED:
        check_user_privacy(mtype, body)
    return WireMessage(mtype, body, ts, obj["v"])


def check_user_privacy(mtype: str, body: dict) -> None:
    """Reject any user-module message carrying more than identity and zone."""
    extra = set(body) - USER_ALLOWED[mtype]
    if extra:
        raise ProtocolError(f"{mtype} may not carry {', '.join(sorted(extra))}")
    leaked = _private_keys(body)
    if leaked:
        raise ProtocolError(f"{mtype} leaks {', '.join(sorted(leaked))}")


def _private_keys(obj: Any) -> set[str]:
    found: set[str] = set()
    if isinstance(obj, dict):
        for k, v in obj.items():
            if k.lower() in PRIVATE_KEYS:
                found.add(k)
            found |= _private_keys(v)
    elif isinstance(obj, list):
        for v in obj:
            found |= _private_keys(v)
    return found


def encode(m: WireMessage) -> bytes:
    _validate(m.to_dict())
    try:
        text = json.dumps(m.to_dict(), separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"cannot encode {m.type}: {exc}") from None
    # json.dumps escapes control characters, so the only newline is ours
    return text.encode("utf-8") + b"\n"


def decode(line: bytes) -> WireMessage:
    if line.endswith(b"\n"):
        line = line[:-1]
        if line.endswith(b"\r"):
            line = line[:-1]
    nl = line.find(b"\n")
    if nl >= 0:
        raise ProtocolError("embedded newline", nl)
    try:
        text = line.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError("invalid UTF-8", exc.start) from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON: {exc.msg}", len(text[: exc.pos].encode("utf-8"))) from None
    return _validate(obj)


_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_event_id(ts_ms: float | None = None) -> str:
    """26-char ULID-style id: 48-bit ms timestamp + 80 random bits, sortable by time."""
    t = int(now_ms() if ts_ms is None else ts_ms) & ((1 << 48) - 1)
    n = (t << 80) | int.from_bytes(os.urandom(10), "big")
    chars = []
    for _ in range(26):
        n, r = divmod(n, 32)
        chars.append(_CROCKFORD[r])
    return "".join(reversed(chars))


def error_message(code: str, message: str, **extra: Any) -> WireMessage:
    return WireMessage("error", {"code": code, "message": message, **extra})
