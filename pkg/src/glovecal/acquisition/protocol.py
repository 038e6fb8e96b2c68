"""Binary wire format for glove sensor streams.

Every packet is ``header | payload | crc`` with all fields little-endian::

    magic  4s  b"FSGV"
    version u8  1
    type    u8  1 imu, 2 dorsal, 3 clock probe, 4 segment marker
    length  u16 payload bytes
    payload
    crc32  u32  IEEE CRC over header and payload

Float fields travel as f32 (orientation, rates, acceleration) or f64
(dorsal translation). Samples quantize their float fields on
construction so that ``decode(encode(s)) == s`` holds bit for bit.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"FSGV"
VERSION = 1
HEADER = struct.Struct("<4sBBH")
CRC = struct.Struct("<I")
HEADER_SIZE = HEADER.size
OVERHEAD = HEADER_SIZE + CRC.size

TYPE_IMU = 1
TYPE_DORSAL = 2
TYPE_CLOCK = 3
TYPE_SEGMENT = 4

IMU_PAYLOAD = struct.Struct("<BQ4f3f3f")
DORSAL_PAYLOAD = struct.Struct("<Q4f3d")
CLOCK_PAYLOAD = struct.Struct("<B4Q")
SEGMENT_PAYLOAD = struct.Struct("<BQ")
PAYLOADS = {TYPE_IMU: IMU_PAYLOAD, TYPE_DORSAL: DORSAL_PAYLOAD, TYPE_CLOCK: CLOCK_PAYLOAD, TYPE_SEGMENT: SEGMENT_PAYLOAD}

N_IMU = 16
QUAT_NORM_TOL = 1e-6
U64_MAX = 2**64 - 1


class ProtocolError(ValueError):
    pass


class BadMagic(ProtocolError):
    pass


class BadLength(ProtocolError):
    pass


class BadChecksum(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


def _f32(values, n: int) -> tuple:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value")
    return tuple(float(x) for x in arr.astype(np.float32))


def _f64(values, n: int) -> tuple:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value")
    return tuple(float(x) for x in arr)


def _timestamp(t) -> int:
    t = int(t)
    if not 0 <= t <= U64_MAX:
        raise ValueError(f"timestamp {t} outside the u64 range")
    return t


def _quat(q) -> tuple:
    """Quantize to f32 and apply the ``w >= 0`` sign convention."""
    w, x, y, z = _f32(q, 4)
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    norm = float(np.sqrt(w * w + x * x + y * y + z * z))
    if abs(norm - 1.0) > QUAT_NORM_TOL:
        raise ValueError(f"orientation is not a unit quaternion (norm {norm})")
    return (w, x, y, z)


@dataclass(frozen=True)
class ImuSample:
    sensor_id: int
    timestamp: int
    orientation: tuple
    angular_velocity: tuple = (0.0, 0.0, 0.0)
    acceleration: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0 <= int(self.sensor_id) < N_IMU:
            raise ValueError(f"sensor id {self.sensor_id} outside 0..{N_IMU - 1}")
        object.__setattr__(self, "sensor_id", int(self.sensor_id))
        object.__setattr__(self, "timestamp", _timestamp(self.timestamp))
        object.__setattr__(self, "orientation", _quat(self.orientation))
        object.__setattr__(self, "angular_velocity", _f32(self.angular_velocity, 3))
        object.__setattr__(self, "acceleration", _f32(self.acceleration, 3))


@dataclass(frozen=True)
class DorsalSample:
    timestamp: int
    orientation: tuple
    translation: tuple

    def __post_init__(self):
        object.__setattr__(self, "timestamp", _timestamp(self.timestamp))
        object.__setattr__(self, "orientation", _quat(self.orientation))
        object.__setattr__(self, "translation", _f64(self.translation, 3))


@dataclass(frozen=True)
class ClockProbe:
    probe_id: int
    t1: int
    t2: int
    t3: int
    t4: int

    def __post_init__(self):
        if not 0 <= int(self.probe_id) <= 255:
            raise ValueError("probe id must fit in a byte")
        object.__setattr__(self, "probe_id", int(self.probe_id))
        for name in ("t1", "t2", "t3", "t4"):
            object.__setattr__(self, name, _timestamp(getattr(self, name)))

    @property
    def timestamp(self) -> int:
        return self.t4


@dataclass(frozen=True)
class SegmentMarker:
    kind: int
    timestamp: int

    def __post_init__(self):
        if not 0 <= int(self.kind) <= 255:
            raise ValueError("segment kind must fit in a byte")
        object.__setattr__(self, "kind", int(self.kind))
        object.__setattr__(self, "timestamp", _timestamp(self.timestamp))


def _frame(ptype: int, payload: bytes) -> bytes:
    head = HEADER.pack(MAGIC, VERSION, ptype, len(payload))
    return head + payload + CRC.pack(zlib.crc32(head + payload))


def encode_packet(sample) -> bytes:
    if isinstance(sample, ImuSample):
        payload = IMU_PAYLOAD.pack(sample.sensor_id, sample.timestamp, *sample.orientation,
                                   *sample.angular_velocity, *sample.acceleration)
        return _frame(TYPE_IMU, payload)
    if isinstance(sample, DorsalSample):
        return _frame(TYPE_DORSAL, DORSAL_PAYLOAD.pack(sample.timestamp, *sample.orientation, *sample.translation))
    if isinstance(sample, ClockProbe):
        return _frame(TYPE_CLOCK, CLOCK_PAYLOAD.pack(sample.probe_id, sample.t1, sample.t2, sample.t3, sample.t4))
    if isinstance(sample, SegmentMarker):
        return _frame(TYPE_SEGMENT, SEGMENT_PAYLOAD.pack(sample.kind, sample.timestamp))
    raise TypeError(f"cannot encode {type(sample).__name__}")


def check_frame(buf, offset: int = 0) -> tuple[int, int]:
    """Validate the packet starting at ``offset``; returns ``(type, size)``."""
    view = memoryview(buf)
    if len(view) - offset < OVERHEAD:
        raise BadLength(f"need at least {OVERHEAD} bytes, have {len(view) - offset}")
    magic, version, ptype, length = HEADER.unpack_from(view, offset)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise BadMagic(f"unsupported protocol version {version}")
    size = OVERHEAD + length
    if len(view) - offset < size:
        raise BadLength(f"packet declares {size} bytes, have {len(view) - offset}")
    (crc,) = CRC.unpack_from(view, offset + HEADER_SIZE + length)
    if zlib.crc32(view[offset:offset + HEADER_SIZE + length]) != crc:
        raise BadChecksum("checksum mismatch")
    if ptype not in PAYLOADS:
        raise UnknownType(f"unknown packet type {ptype}")
    if PAYLOADS[ptype].size != length:
        raise BadLength(f"type {ptype} payload must be {PAYLOADS[ptype].size} bytes, got {length}")
    return ptype, size


def decode_packet(buf):
    """Decode exactly one complete packet."""
    ptype, size = check_frame(buf)
    if len(buf) != size:
        raise BadLength(f"frame is {size} bytes but buffer holds {len(buf)}")
    fields = PAYLOADS[ptype].unpack_from(buf, HEADER_SIZE)
    if ptype == TYPE_IMU:
        return ImuSample(fields[0], fields[1], fields[2:6], fields[6:9], fields[9:12])
    if ptype == TYPE_DORSAL:
        return DorsalSample(fields[0], fields[1:5], fields[5:8])
    if ptype == TYPE_CLOCK:
        return ClockProbe(*fields)
    return SegmentMarker(*fields)


def split_packets(buf, offset: int = 0):
    """Yield ``(offset, type, size)`` for consecutive packets in ``buf``.

    Stops at the end of the buffer; raises ProtocolError at the first bad
    packet.
    """
    end = len(buf)
    while offset < end:
        ptype, size = check_frame(buf, offset)
        yield offset, ptype, size
        offset += size


# ----------------------------------------------------------------------
# vectorized encoding of whole sessions

_IMU_FRAME = np.dtype([
    ("magic", "S4"), ("version", "u1"), ("type", "u1"), ("length", "<u2"),
    ("sensor", "u1"), ("timestamp", "<u8"), ("orientation", "<f4", 4),
    ("angular_velocity", "<f4", 3), ("acceleration", "<f4", 3), ("crc", "<u4"),
])
_DORSAL_FRAME = np.dtype([
    ("magic", "S4"), ("version", "u1"), ("type", "u1"), ("length", "<u2"),
    ("timestamp", "<u8"), ("orientation", "<f4", 4), ("translation", "<f8", 3), ("crc", "<u4"),
])
IMU_PACKET_SIZE = _IMU_FRAME.itemsize
DORSAL_PACKET_SIZE = _DORSAL_FRAME.itemsize


def _canonical_f32_quats(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).astype(np.float32)
    return np.where(q[..., :1] < 0, -q, q)


def _fill_crc(rows: np.ndarray) -> list[bytes]:
    raw = rows.tobytes()
    size = rows.dtype.itemsize
    out = []
    for k in range(len(rows)):
        body = raw[k * size:(k + 1) * size - CRC.size]
        out.append(body + CRC.pack(zlib.crc32(body)))
    return out


def encode_imu_batch(sensor_ids, timestamps, orientations, angular_velocity, acceleration) -> list[bytes]:
    """Packets for many IMU samples at once; equal to encoding each
    ImuSample individually."""
    n = len(timestamps)
    rows = np.zeros(n, dtype=_IMU_FRAME)
    rows["magic"], rows["version"], rows["type"], rows["length"] = MAGIC, VERSION, TYPE_IMU, IMU_PAYLOAD.size
    rows["sensor"] = sensor_ids
    rows["timestamp"] = timestamps
    rows["orientation"] = _canonical_f32_quats(orientations)
    rows["angular_velocity"] = angular_velocity
    rows["acceleration"] = acceleration
    return _fill_crc(rows)


def encode_dorsal_batch(timestamps, orientations, translations) -> list[bytes]:
    n = len(timestamps)
    rows = np.zeros(n, dtype=_DORSAL_FRAME)
    rows["magic"], rows["version"], rows["type"], rows["length"] = MAGIC, VERSION, TYPE_DORSAL, DORSAL_PAYLOAD.size
    rows["timestamp"] = timestamps
    rows["orientation"] = _canonical_f32_quats(orientations)
    rows["translation"] = translations
    return _fill_crc(rows)


def decode_imu_batch(packets: list) -> np.ndarray:
    """Structured array view of already validated IMU packets."""
    if not packets:
        return np.zeros(0, dtype=_IMU_FRAME)
    return np.frombuffer(b"".join(packets), dtype=_IMU_FRAME)


def decode_dorsal_batch(packets: list) -> np.ndarray:
    if not packets:
        return np.zeros(0, dtype=_DORSAL_FRAME)
    return np.frombuffer(b"".join(packets), dtype=_DORSAL_FRAME)
