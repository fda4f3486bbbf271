"""Wire format: 4-byte big-endian length, then a UTF-8 JSON object.

The body is ``{"kind": ..., "request_id": ..., "payload": {...}}``.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass, field

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024

REQUEST_KINDS = ("REGISTER", "LOOKUP", "SNAPSHOT")
REPLY_KINDS = ("ASSIGNED", "SNAPSHOT_REPLY", "ERROR")
REPLY_FOR = {"REGISTER": "ASSIGNED", "LOOKUP": "ASSIGNED", "SNAPSHOT": "SNAPSHOT_REPLY"}


class ProtocolError(ValueError):
    pass


class ConnectionClosed(ConnectionError):
    pass


@dataclass(frozen=True)
class SyncMessage:
    kind: str
    request_id: int
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REQUEST_KINDS + REPLY_KINDS:
            raise ProtocolError(f"unknown message kind {self.kind!r}")


def encode(msg: SyncMessage) -> bytes:
    body = json.dumps({"kind": msg.kind, "request_id": msg.request_id, "payload": msg.payload}, separators=(",", ":")).encode()
    if len(body) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(body)) + body


def decode_body(body: bytes) -> SyncMessage:
    try:
        d = json.loads(body.decode())
        return SyncMessage(d["kind"], int(d["request_id"]), d.get("payload") or {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ProtocolError):
            raise
        raise ProtocolError(f"malformed message: {exc}") from exc


def decode_stream(buf: bytes) -> tuple[list[SyncMessage], bytes]:
    """All complete frames in ``buf`` plus the unconsumed tail."""
    out = []
    while len(buf) >= HEADER.size:
        (n,) = HEADER.unpack_from(buf)
        if n > MAX_FRAME:
            raise ProtocolError(f"frame length {n} exceeds {MAX_FRAME}")
        if len(buf) < HEADER.size + n:
            break
        out.append(decode_body(buf[HEADER.size : HEADER.size + n]))
        buf = buf[HEADER.size + n :]
    return out, buf


def _read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> SyncMessage:
    (n,) = HEADER.unpack(_read_exact(sock, HEADER.size))
    if n > MAX_FRAME:
        raise ProtocolError(f"frame length {n} exceeds {MAX_FRAME}")
    return decode_body(_read_exact(sock, n))


def send_message(sock: socket.socket, msg: SyncMessage) -> None:
    sock.sendall(encode(msg))
