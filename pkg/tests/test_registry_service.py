import base64
import socket

import pytest

from cransim.registry import Registry
from cransim.registry_service import RegistryServer, serve


@pytest.fixture()
def server():
    srv = serve("127.0.0.1", 0)
    yield srv
    srv.shutdown()
    srv.server_close()


class Client:
    def __init__(self, server: RegistryServer):
        host, port = server.server_address
        self.sock = socket.create_connection((host, port), timeout=5)
        self.rfile = self.sock.makefile("rb")

    def send(self, line: str) -> None:
        self.sock.sendall((line + "\n").encode())

    def recv(self) -> str:
        return self.rfile.readline().decode().rstrip("\n")

    def ask(self, line: str) -> str:
        self.send(line)
        return self.recv()

    def close(self) -> None:
        self.rfile.close()
        self.sock.close()


def b64(value: bytes) -> str:
    return base64.b64encode(value).decode()


def test_put_get_del_round_trip(server):
    c = Client(server)
    try:
        assert c.ask(f"PUT pods/rrh-0/ip {b64(b'10.244.1.2')}") == "OK 1"
        assert c.ask("GET pods/rrh-0/ip") == f"OK 1 {b64(b'10.244.1.2')}"
        assert c.ask("DEL pods/rrh-0/ip") == "OK 2"
        assert c.ask("GET pods/rrh-0/ip") == "ABSENT"
        assert c.ask("DEL pods/rrh-0/ip") == "ABSENT"
    finally:
        c.close()


def test_empty_value_round_trip(server):
    c = Client(server)
    try:
        assert c.ask("PUT pods/x/ip") == "OK 1"
        assert c.ask("GET pods/x/ip") == "OK 1"
    finally:
        c.close()


def test_protocol_errors(server):
    c = Client(server)
    try:
        assert c.ask("FROB key").startswith("ERR unknown command")
        assert c.ask("PUT k $$$").startswith("ERR invalid base64")
        assert c.ask("GET a b").startswith("ERR usage")
        assert c.ask("WATCH p notanumber").startswith("ERR invalid revision")
        assert c.ask("PUT").startswith("ERR usage")
        # The store is still usable on the same connection after errors.
        assert c.ask(f"PUT k {b64(b'v')}") == "OK 1"
    finally:
        c.close()


def test_watch_streams_history_and_live_events(server):
    registry: Registry = server.registry
    registry.put("pods/rrh-0/ip", b"10.244.1.2")  # history before the watch

    watcher = Client(server)
    mutator = Client(server)
    try:
        watcher.send("WATCH pods/ 0")
        assert watcher.recv() == "OK 1"  # ack carries the current revision
        assert watcher.recv() == f"EVT PUT 1 pods/rrh-0/ip {b64(b'10.244.1.2')}"

        assert mutator.ask(f"PUT pods/bbu-0/ip {b64(b'10.244.0.2')}") == "OK 2"
        assert watcher.recv() == f"EVT PUT 2 pods/bbu-0/ip {b64(b'10.244.0.2')}"

        assert mutator.ask("DEL pods/rrh-0/ip") == "OK 3"
        assert watcher.recv() == "EVT DEL 3 pods/rrh-0/ip"
    finally:
        watcher.close()
        mutator.close()


def test_watch_prefix_filters_stream(server):
    watcher = Client(server)
    mutator = Client(server)
    try:
        watcher.send("WATCH pods/bbu 0")
        assert watcher.recv() == "OK 0"
        mutator.ask(f"PUT pods/rrh-0/ip {b64(b'x')}")
        mutator.ask(f"PUT pods/bbu-0/ip {b64(b'y')}")
        # Only the matching key arrives; rev 2 proves rev 1 was skipped.
        assert watcher.recv() == f"EVT PUT 2 pods/bbu-0/ip {b64(b'y')}"
    finally:
        watcher.close()
        mutator.close()


def test_embedded_registry_is_shared_with_service(server):
    # The service can wrap a store the simulator is already using.
    c = Client(server)
    try:
        server.registry.put("pods/epc/ip", b"192.168.100.1")
        assert c.ask("GET pods/epc/ip") == f"OK 1 {b64(b'192.168.100.1')}"
    finally:
        c.close()
