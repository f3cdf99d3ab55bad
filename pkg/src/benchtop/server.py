"""Environment server: one session per connection over TCP or stdio.

A session is strictly serial: CONFIG, then any number of RESET / STEP /
EXPERT requests, then CLOSE. Concurrent connections get fully independent
environment batches.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import sys
import threading

import numpy as np

from . import protocol as proto
from .config import EnvConfig, config_from_text, config_to_text
from .errors import (
    ActionFormatError,
    BenchtopError,
    ConfigError,
    ProtocolError,
    RunnerUsageError,
    UnknownTaskError,
)
from .runner import VectorEnv

logger = logging.getLogger(__name__)

DEFAULT_PORT = 9147


class _CloseSession(Exception):
    pass


class Session:
    """Protocol state machine for one connection."""

    def __init__(self, write_frame):
        self._write = write_frame
        self._vec: VectorEnv | None = None
        self._was_reset = False

    def handle(self, msg_type: int, payload: bytes) -> None:
        try:
            self._dispatch(msg_type, payload)
        except ProtocolError as exc:
            self._error(exc.code, str(exc))
            if exc.code == proto.ERR_MALFORMED:
                raise _CloseSession from exc
        except (ConfigError, UnknownTaskError) as exc:
            self._error(proto.ERR_CONFIG, str(exc))
        except (RunnerUsageError,) as exc:
            self._error(proto.ERR_ORDER, str(exc))
        except ActionFormatError as exc:
            self._error(proto.ERR_ARITY, str(exc))
        except BenchtopError as exc:
            self._error(proto.ERR_CONFIG, str(exc))

    def close(self) -> None:
        if self._vec is not None:
            self._vec.close()
            self._vec = None

    def _dispatch(self, msg_type: int, payload: bytes) -> None:
        if msg_type == proto.MSG_CONFIG:
            n, task, config_text = proto.decode_config(payload)
            if n < 1:
                raise ProtocolError(proto.ERR_MALFORMED, "CONFIG needs n >= 1")
            config = config_from_text(config_text) if config_text.strip() else EnvConfig()
            self.close()
            self._vec = VectorEnv(n, task, config)
            self._was_reset = False
            resolved = self._vec._envs[0].config if self._vec._envs else config
            self._write(proto.MSG_ACK, config_to_text(resolved).encode("utf-8"))
            return
        if msg_type == proto.MSG_CLOSE:
            self.close()
            self._write(proto.MSG_ACK, b"")
            raise _CloseSession
        if msg_type not in (proto.MSG_RESET, proto.MSG_STEP, proto.MSG_EXPERT):
            self._error(proto.ERR_UNKNOWN_TYPE, f"unknown message type 0x{msg_type:02x}")
            return
        if self._vec is None:
            raise ProtocolError(proto.ERR_ORDER, "CONFIG required before this request")
        if msg_type == proto.MSG_RESET:
            observations = self._vec.reset()
            self._was_reset = True
            zeros = np.zeros(self._vec.n, dtype=np.float32)
            self._write(
                proto.MSG_OBS,
                proto.encode_observations(observations, zeros, zeros),
            )
            return
        if msg_type == proto.MSG_STEP:
            if not self._was_reset:
                raise ProtocolError(proto.ERR_ORDER, "STEP before RESET")
            actions = proto.decode_actions(payload, self._vec.n)
            result = self._vec.step(actions)
            self._write(
                proto.MSG_OBS,
                proto.encode_observations(
                    result.observations, result.rewards, result.dones
                ),
            )
            return
        if msg_type == proto.MSG_EXPERT:
            if not self._was_reset:
                raise ProtocolError(proto.ERR_ORDER, "EXPERT before RESET")
            actions = self._vec.get_next_action()
            self._write(proto.MSG_ACTIONS, proto.encode_actions(actions))

    def _error(self, code: int, message: str) -> None:
        logger.debug("session error 0x%04x: %s", code, message)
        self._write(proto.MSG_ERROR, proto.encode_error(code, message))


def _serve_stream(read_exact, write_bytes) -> None:
    lock = threading.Lock()

    def write_frame(msg_type: int, payload: bytes) -> None:
        with lock:
            write_bytes(proto.pack_frame(msg_type, payload))

    session = Session(write_frame)
    try:
        while True:
            try:
                frame = proto.read_frame(read_exact)
            except ProtocolError as exc:
                write_frame(proto.MSG_ERROR, proto.encode_error(exc.code, str(exc)))
                break
            if frame is None:
                break
            try:
                session.handle(*frame)
            except _CloseSession:
                break
    finally:
        session.close()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

        def read_exact(n: int) -> bytes:
            chunks = []
            remaining = n
            while remaining:
                chunk = sock.recv(remaining)
                if not chunk:
                    break
                chunks.append(chunk)
                remaining -= len(chunk)
            return b"".join(chunks)

        try:
            _serve_stream(read_exact, sock.sendall)
        except (ConnectionError, BrokenPipeError):
            pass


class EnvServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve(host: str = "127.0.0.1", port: int = DEFAULT_PORT, ready_callback=None):
    """Serve over TCP until interrupted. ``ready_callback(host, port)`` fires
    once the socket is bound (handy for tests and child-process startup)."""
    with EnvServer((host, port), _Handler) as server:
        bound = server.server_address
        logger.info("serving on %s:%d", *bound)
        if ready_callback is not None:
            ready_callback(*bound)
        server.serve_forever()


def start_background(host: str = "127.0.0.1", port: int = 0) -> tuple[EnvServer, int]:
    """Bind and serve on a daemon thread; returns (server, bound_port)."""
    server = EnvServer((host, port), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]


def serve_stdio() -> None:
    """One session over stdin/stdout (binary frames)."""
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def read_exact(n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            chunk = stdin.read(remaining)
            if not chunk:
                break
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def write_bytes(data: bytes) -> None:
        stdout.write(data)
        stdout.flush()

    _serve_stream(read_exact, write_bytes)
