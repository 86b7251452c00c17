"""Message transports: in-process loopback and a local TCP stream."""
from __future__ import annotations

import collections
import socket
import threading

from ..errors import ProtocolError, TransportTimeout
from .protocol import FrameBuffer, Message, decode


class Transport:
    def send(self, frame: bytes) -> None:
        raise NotImplementedError

    def recv(self, timeout: float | None = None) -> Message:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LoopbackTransport(Transport):
    """Delivers frames straight to a prover object; replies are queued."""

    def __init__(self, prover):
        self.prover = prover
        self._inbox: collections.deque[bytes] = collections.deque()

    def send(self, frame: bytes) -> None:
        self._inbox.extend(self.prover.handle(decode(frame)))

    def recv(self, timeout: float | None = None) -> Message:
        if not self._inbox:
            raise TransportTimeout("no reply from prover")
        return decode(self._inbox.popleft())


class SocketTransport(Transport):
    def __init__(self, address, timeout: float = 5.0):
        try:
            self._sock = socket.create_connection(address, timeout=timeout)
        except socket.timeout:
            raise TransportTimeout(f"connect to {address} timed out") from None
        self._timeout = timeout
        self._frames = FrameBuffer()
        self._pending: collections.deque[Message] = collections.deque()

    def send(self, frame: bytes) -> None:
        self._sock.sendall(frame)

    def recv(self, timeout: float | None = None) -> Message:
        self._sock.settimeout(self._timeout if timeout is None else timeout)
        while not self._pending:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise TransportTimeout("no reply from prover") from None
            if not chunk:
                raise ProtocolError("connection closed by prover")
            self._pending.extend(self._frames.feed(chunk))
        return self._pending.popleft()

    def close(self) -> None:
        self._sock.close()


class ProverServer:
    """Serves one prover over TCP on a background thread."""

    def __init__(self, prover, host: str = "127.0.0.1", port: int = 0):
        self.prover = prover
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()[:2]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def start(self) -> "ProverServer":
        self._thread.start()
        return self

    def _serve(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with conn:
                self._session(conn)

    def _session(self, conn: socket.socket):
        conn.settimeout(0.2)
        frames = FrameBuffer()
        while not self._stop.is_set():
            try:
                chunk = conn.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            if not chunk:
                return
            try:
                for msg in frames.feed(chunk):
                    for out in self.prover.handle(msg):
                        conn.sendall(out)
            except ProtocolError:
                return

    def stop(self):
        self._stop.set()
        self._listener.close()
        self._thread.join(timeout=2)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

