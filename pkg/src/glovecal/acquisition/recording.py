"""Recording files: a 16-byte header followed by packets verbatim."""

from __future__ import annotations

import struct
import time
from pathlib import Path

from .protocol import ProtocolError, check_frame, decode_packet

FILE_MAGIC = b"FSGR"
FILE_VERSION = 1
FILE_HEADER = struct.Struct("<4sIII")
DEFAULT_STREAMS = 17


class RecordingError(Exception):
    pass


class CorruptFile(RecordingError):
    """Raised when a recording stops parsing.

    ``offset`` is the byte offset of the last valid packet (None when
    there is none) and ``end_offset`` the offset just past it.
    """

    def __init__(self, message: str, offset: int | None, end_offset: int):
        self.offset = offset
        self.end_offset = end_offset
        super().__init__(f"{message} (last valid packet at {offset}, data valid up to byte {end_offset})")


def file_header(n_streams: int = DEFAULT_STREAMS) -> bytes:
    return FILE_HEADER.pack(FILE_MAGIC, FILE_VERSION, n_streams, 0)


def record(packets, path, n_streams: int = DEFAULT_STREAMS) -> int:
    """Write encoded packets to ``path``; returns the packet count."""
    count = 0
    with open(path, "wb") as f:
        f.write(file_header(n_streams))
        for pkt in packets:
            f.write(pkt)
            count += 1
    return count


def read_header(data: bytes) -> int:
    if len(data) < FILE_HEADER.size:
        raise CorruptFile("file shorter than its header", None, 0)
    magic, version, n_streams, _ = FILE_HEADER.unpack_from(data)
    if magic != FILE_MAGIC:
        raise CorruptFile(f"bad file magic {magic!r}", None, 0)
    if version != FILE_VERSION:
        raise CorruptFile(f"unsupported recording version {version}", None, 0)
    return n_streams


def iter_packets(data: bytes):
    """Yield ``(offset, type, packet_bytes)`` from an in-memory recording."""
    read_header(data)
    view = memoryview(data)
    offset = FILE_HEADER.size
    last = None
    while offset < len(data):
        try:
            ptype, size = check_frame(view, offset)
        except ProtocolError as exc:
            raise CorruptFile(f"{type(exc).__name__}: {exc}", last, offset) from None
        yield offset, ptype, bytes(view[offset:offset + size])
        last = offset
        offset += size


def load(path) -> list[tuple[int, bytes]]:
    """All packets of a recording as ``(type, bytes)`` pairs."""
    data = Path(path).read_bytes()
    return [(ptype, pkt) for _, ptype, pkt in iter_packets(data)]


def replay(path, speed="max", decode: bool = False, clock=time.monotonic, sleep=time.sleep):
    """Yield the packets of a recording in order.

    ``speed`` is ``"max"`` (no pacing), ``"realtime"`` or a float factor;
    paced replay sleeps according to timestamp deltas between packets.
    """
    if speed == "max":
        factor = None
    elif speed == "realtime":
        factor = 1.0
    else:
        factor = float(speed)
        if factor <= 0:
            raise ValueError("speed factor must be positive")
    data = Path(path).read_bytes()
    t0_wall = None
    t0_data = None
    for _, ptype, pkt in iter_packets(data):
        if factor is not None:
            ts = decode_packet(pkt).timestamp
            if t0_wall is None:
                t0_wall, t0_data = clock(), ts
            due = t0_wall + (ts - t0_data) / 1e9 / factor
            wait = due - clock()
            if wait > 0:
                sleep(wait)
        yield decode_packet(pkt) if decode else pkt
