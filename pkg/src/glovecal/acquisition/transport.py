"""TCP broadcast of packet streams and a recording client."""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass

from .protocol import OVERHEAD, ProtocolError, check_frame
from .recording import DEFAULT_STREAMS, file_header

log = logging.getLogger(__name__)


class BindError(OSError):
    pass


class Broadcaster:
    """Accepts any number of clients and sends every packet to all of them.

    A client that disconnects is dropped; the broadcast carries on.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self.sock.bind((host, port))
        except OSError as exc:
            self.sock.close()
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self.sock.listen(8)
        self.address = self.sock.getsockname()
        self.clients: list[socket.socket] = []
        self.lock = threading.Lock()
        self.joined = threading.Condition(self.lock)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    @property
    def port(self) -> int:
        return self.address[1]

    def _accept_loop(self):
        self.sock.settimeout(0.05)
        while not self._stop.is_set():
            try:
                conn, addr = self.sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self.lock:
                self.clients.append(conn)
                self.joined.notify_all()
            log.info("client %s connected", addr)

    def wait_for_clients(self, n: int, timeout: float | None = None) -> bool:
        with self.lock:
            return self.joined.wait_for(lambda: len(self.clients) >= n, timeout)

    def send(self, data: bytes) -> int:
        """Send to every client; returns the number still connected."""
        with self.lock:
            alive = []
            for c in self.clients:
                try:
                    c.sendall(data)
                    alive.append(c)
                except OSError:
                    log.info("client dropped")
                    c.close()
            self.clients = alive
            return len(alive)

    def close(self):
        self._stop.set()
        self._thread.join()
        with self.lock:
            for c in self.clients:
                try:
                    c.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                c.close()
            self.clients = []
        self.sock.close()


def serve(packets, host: str = "127.0.0.1", port: int = 0, min_clients: int = 1, realtime: bool = False,
          timestamps=None, batch: int = 64, ready=None, accept_timeout: float | None = None) -> int:
    """Broadcast ``packets`` to TCP clients and return how many were sent.

    Streaming starts once ``min_clients`` are connected so that every
    early client sees the full sequence. With ``realtime`` the packets are
    paced by ``timestamps`` (ns, one per packet).
    """
    server = Broadcaster(host, port)
    try:
        if ready is not None:
            ready(server.port)
        if not server.wait_for_clients(min_clients, accept_timeout):
            raise TimeoutError(f"fewer than {min_clients} clients connected")
        sent = 0
        start = time.monotonic()
        t0 = None
        buf = []
        for k, pkt in enumerate(packets):
            if realtime and timestamps is not None:
                ts = timestamps[k]
                t0 = ts if t0 is None else t0
                wait = start + (ts - t0) / 1e9 - time.monotonic()
                if wait > 0:
                    if buf:
                        server.send(b"".join(buf))
                        buf = []
                    time.sleep(wait)
            buf.append(pkt)
            sent += 1
            if len(buf) >= batch:
                server.send(b"".join(buf))
                buf = []
        if buf:
            server.send(b"".join(buf))
        return sent
    finally:
        server.close()


@dataclass
class ClientResult:
    packets: int
    bytes: int
    truncated: bool
    error: str | None = None


def receive(host: str, port: int, sink, connect_timeout: float = 5.0) -> ClientResult:
    """Read packets from a server until it closes the connection.

    ``sink`` is called with each complete packet. A partial packet at the
    end of the stream, or a malformed one, ends the read and is reported
    as truncation rather than raised.
    """
    deadline = time.monotonic() + connect_timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=connect_timeout)
            break
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.02)
    sock.settimeout(None)
    buf = bytearray()
    count = 0
    total = 0
    error = None
    try:
        while True:
            chunk = sock.recv(1 << 16)
            if not chunk:
                break
            buf += chunk
            offset = 0
            while len(buf) - offset >= OVERHEAD:
                length = int.from_bytes(buf[offset + 6:offset + 8], "little")
                if len(buf) - offset < OVERHEAD + length:
                    break
                pkt = bytes(buf[offset:offset + OVERHEAD + length])
                try:
                    _, size = check_frame(pkt)
                except ProtocolError as exc:
                    error = f"{type(exc).__name__}: {exc}"
                    break
                sink(pkt)
                count += 1
                total += size
                offset += size
            del buf[:offset]
            if error:
                break
    except OSError as exc:
        error = f"connection error: {exc}"
    finally:
        sock.close()
    truncated = bool(buf) or error is not None
    return ClientResult(count, total, truncated, error)


def record_stream(host: str, port: int, path, n_streams: int = DEFAULT_STREAMS, **kw) -> ClientResult:
    """Record a live stream into a recording file."""
    with open(path, "wb") as f:
        f.write(file_header(n_streams))
        return receive(host, port, f.write, **kw)


__all__ = ["BindError", "Broadcaster", "ClientResult", "receive", "record_stream", "serve"]
