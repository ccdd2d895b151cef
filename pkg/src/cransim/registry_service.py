"""Optional service mode for the registry: a line-based text protocol over
a stream socket, one request per line, UTF-8, newline-terminated.

Requests:
    PUT <key> <base64(value)>
    GET <key>
    DEL <key>
    WATCH <prefix> <rev>

Responses:
    OK <rev> [<base64>]
    ABSENT
    EVT <PUT|DEL> <rev> <key> <base64>
    ERR <message>

A WATCH turns its connection into a one-way event stream: the server acks
with `OK <current-revision>` and then emits one EVT line per mutation under
the prefix with revision greater than <rev>, starting with history the
store already holds.
"""

from __future__ import annotations

import base64
import binascii
import logging
import socketserver
import threading

from .registry import BadKeyError, MutationKind, Registry

log = logging.getLogger("cransim.registry_service")

_EVT_KIND = {MutationKind.PUT: "PUT", MutationKind.DELETE: "DEL"}
_WATCH_POLL_S = 0.2


class RegistryServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], registry: Registry | None = None):
        self.registry = registry if registry is not None else Registry()
        self.stopping = threading.Event()
        super().__init__(address, _Handler)

    def shutdown(self) -> None:
        self.stopping.set()
        super().shutdown()


class _Handler(socketserver.StreamRequestHandler):
    server: RegistryServer

    def _send(self, line: str) -> None:
        self.wfile.write((line + "\n").encode("utf-8"))

    def handle(self) -> None:
        registry = self.server.registry
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            parts = line.split()
            cmd, args = parts[0].upper(), parts[1:]
            try:
                if cmd == "PUT":
                    self._handle_put(registry, args)
                elif cmd == "GET":
                    self._handle_get(registry, args)
                elif cmd == "DEL":
                    self._handle_del(registry, args)
                elif cmd == "WATCH":
                    if self._handle_watch(registry, args):
                        return  # the connection now belongs to the watch stream
                else:
                    self._send(f"ERR unknown command {cmd}")
            except BadKeyError as exc:
                self._send(f"ERR {exc}")
            except (BrokenPipeError, ConnectionResetError):
                return

    def _decode_value(self, args: list[str]) -> bytes:
        if not args:
            return b""
        try:
            return base64.b64decode(args[0], validate=True)
        except (binascii.Error, ValueError) as exc:
            raise BadKeyError(f"invalid base64: {exc}") from exc

    def _handle_put(self, registry: Registry, args: list[str]) -> None:
        if not 1 <= len(args) <= 2:
            self._send("ERR usage: PUT <key> <base64>")
            return
        rev = registry.put(args[0], self._decode_value(args[1:]))
        self._send(f"OK {rev}")

    def _handle_get(self, registry: Registry, args: list[str]) -> None:
        if len(args) != 1:
            self._send("ERR usage: GET <key>")
            return
        entry = registry.get_entry(args[0])
        if entry is None:
            self._send("ABSENT")
        else:
            encoded = base64.b64encode(entry.value).decode()
            self._send(f"OK {entry.revision} {encoded}".rstrip())

    def _handle_del(self, registry: Registry, args: list[str]) -> None:
        if len(args) != 1:
            self._send("ERR usage: DEL <key>")
            return
        rev = registry.delete(args[0])
        self._send("ABSENT" if rev is None else f"OK {rev}")

    def _handle_watch(self, registry: Registry, args: list[str]) -> bool:
        """Returns True once the connection has become an event stream."""
        if len(args) != 2:
            self._send("ERR usage: WATCH <prefix> <rev>")
            return False
        prefix = args[0]
        try:
            cursor = int(args[1])
        except ValueError:
            self._send(f"ERR invalid revision {args[1]!r}")
            return False
        if cursor < 0:
            self._send("ERR revision must be >= 0")
            return False
        cursor = min(cursor, registry.revision)
        self._send(f"OK {registry.revision}")
        while not self.server.stopping.is_set():
            events = registry.wait_for_events(prefix, cursor, timeout=_WATCH_POLL_S)
            for event in events:
                encoded = base64.b64encode(event.entry.value).decode()
                self._send(
                    f"EVT {_EVT_KIND[event.kind]} {event.revision} {event.key} {encoded}".rstrip()
                )
                cursor = event.revision
            if events:
                self.wfile.flush()
        return True


def serve(host: str, port: int, registry: Registry | None = None) -> RegistryServer:
    """Start a server thread; returns the server (caller owns shutdown)."""
    server = RegistryServer((host, port), registry)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    log.info("registry service listening on %s:%d", *server.server_address)
    return server
