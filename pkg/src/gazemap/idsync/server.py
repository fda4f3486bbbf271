"""TCP front end for a :class:`Registry`, plus the matching client."""

from __future__ import annotations

import itertools
import logging
import socket
import socketserver
import threading

from .protocol import REPLY_FOR, ConnectionClosed, ProtocolError, SyncMessage, read_message, send_message
from .registry import DimensionMismatch, Registry, Snapshot

log = logging.getLogger(__name__)


class RemoteError(RuntimeError):
    pass


def handle(registry: Registry, msg: SyncMessage) -> SyncMessage:
    """One request in, exactly one reply out."""
    try:
        if msg.kind == "REGISTER":
            rid, created = registry.register_or_lookup(msg.payload["embedding"], str(msg.payload.get("device", "")))
            return SyncMessage("ASSIGNED", msg.request_id, {"id": rid, "created": created})
        if msg.kind == "LOOKUP":
            return SyncMessage("ASSIGNED", msg.request_id, {"id": registry.lookup(msg.payload["embedding"]), "created": False})
        if msg.kind == "SNAPSHOT":
            return SyncMessage("SNAPSHOT_REPLY", msg.request_id, registry.snapshot().to_dict())
        raise ProtocolError(f"{msg.kind} is not a request")
    except (KeyError, ValueError, DimensionMismatch) as exc:
        return SyncMessage("ERROR", msg.request_id, {"type": type(exc).__name__, "message": str(exc)})


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        registry = self.server.registry  # type: ignore[attr-defined]
        while True:
            try:
                msg = read_message(self.request)
            except ConnectionClosed:
                return
            except ProtocolError as exc:
                send_message(self.request, SyncMessage("ERROR", 0, {"type": "ProtocolError", "message": str(exc)}))
                return
            except OSError:
                return
            send_message(self.request, handle(registry, msg))


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class RegistryServer:
    def __init__(self, registry: Registry, host: str = "127.0.0.1", port: int = 0):
        self.registry = registry
        self._server = _TCPServer((host, port), _Handler)
        self._server.registry = registry  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "RegistryServer":
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever(poll_interval=0.2)

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "RegistryServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class RegistryClient:
    """Blocking client; one connection, requests serialized by a lock."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    def _call(self, kind: str, payload: dict) -> SyncMessage:
        with self._lock:
            rid = next(self._ids)
            send_message(self._sock, SyncMessage(kind, rid, payload))
            reply = read_message(self._sock)
        if reply.kind == "ERROR":
            raise RemoteError(f"{reply.payload.get('type')}: {reply.payload.get('message')}")
        if reply.request_id != rid or reply.kind != REPLY_FOR[kind]:
            raise ProtocolError(f"expected {REPLY_FOR[kind]} #{rid}, got {reply.kind} #{reply.request_id}")
        return reply

    def register_or_lookup(self, embedding, device: str = "") -> tuple[int, bool]:
        r = self._call("REGISTER", {"embedding": [float(x) for x in embedding], "device": device})
        return int(r.payload["id"]), bool(r.payload["created"])

    def lookup(self, embedding) -> int | None:
        r = self._call("LOOKUP", {"embedding": [float(x) for x in embedding]})
        return r.payload["id"]

    def snapshot(self) -> Snapshot:
        return Snapshot.from_dict(self._call("SNAPSHOT", {}).payload)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "RegistryClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
