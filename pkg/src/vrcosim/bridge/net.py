"""Socket transport and a threaded application server.

Addresses are ``host:port`` for TCP or ``unix:/path/to.sock``.
"""
from __future__ import annotations

import logging
import os
import socket
import socketserver
import threading
from typing import Callable

from .codec import DEFAULT_MAX_PAYLOAD
from .errors import BridgeError, ConnectionLost
from .session import AppSession, BridgeApp

log = logging.getLogger(__name__)

DEFAULT_ADDRESS = "127.0.0.1:47010"


def parse_address(address: str):
    if address.startswith("unix:"):
        return socket.AF_UNIX, address[len("unix:") :]
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad bridge address {address!r}; expected host:port or unix:/path")
    return socket.AF_INET, (host, int(port))


class SocketTransport:
    def __init__(self, sock: socket.socket):
        self.sock = sock

    @classmethod
    def connect(cls, address: str, timeout: float | None = 30.0) -> "SocketTransport":
        family, addr = parse_address(address)
        sock = socket.socket(family, socket.SOCK_STREAM)
        sock.settimeout(timeout)
        try:
            sock.connect(addr)
        except OSError as exc:
            sock.close()
            raise ConnectionLost(f"cannot connect to {address}: {exc}") from exc
        sock.settimeout(None)
        if family == socket.AF_INET:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock)

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self, max_bytes: int) -> bytes:
        return self.sock.recv(max_bytes)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def serve_connection(sock: socket.socket, app: BridgeApp, max_payload: int = DEFAULT_MAX_PAYLOAD) -> None:
    """Run one session until CLOSE, EOF, or a protocol violation."""
    endpoint = AppSession(app, max_payload)
    try:
        while not endpoint.closed:
            chunk = sock.recv(65536)
            if not chunk:
                break
            out = endpoint.feed(chunk)
            if out:
                sock.sendall(out)
    except BridgeError as exc:
        log.warning("closing session: %s", exc)
    except OSError as exc:
        log.info("connection dropped: %s", exc)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        if self.request.family == socket.AF_INET:
            self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        serve_connection(self.request, self.server.app_factory(), self.server.max_payload)


class _TCPServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    daemon_threads = True
    allow_reuse_address = True


class _UnixServer(socketserver.ThreadingMixIn, socketserver.UnixStreamServer):
    daemon_threads = True


def make_server(address: str, app_factory: Callable[[], BridgeApp], max_payload: int = DEFAULT_MAX_PAYLOAD):
    """Create (but do not start) a server; each connection gets a fresh app."""
    family, addr = parse_address(address)
    if family == socket.AF_UNIX:
        if os.path.exists(addr):
            os.unlink(addr)
        server = _UnixServer(addr, _Handler)
    else:
        server = _TCPServer(addr, _Handler)
    server.app_factory = app_factory
    server.max_payload = max_payload
    return server


def server_address(server) -> str:
    addr = server.server_address
    if isinstance(addr, str):
        return "unix:" + addr
    return f"{addr[0]}:{addr[1]}"


def start_background_server(address: str, app_factory: Callable[[], BridgeApp]):
    server = make_server(address, app_factory)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
