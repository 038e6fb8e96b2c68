"""Data plane: wire protocol, recordings, clock sync and stream matching."""

from .clock import ClockCorrector, ClockOffset, NegativeDelay, estimate_clock_offset
from .protocol import (
    BadChecksum,
    BadLength,
    BadMagic,
    ClockProbe,
    DorsalSample,
    ImuSample,
    ProtocolError,
    SegmentMarker,
    UnknownType,
    decode_packet,
    encode_packet,
)
from .recording import CorruptFile, record, replay
from .sync import ApproximateSynchronizer, FrameSet, SyncPolicy, synchronize

__all__ = [
    "ApproximateSynchronizer",
    "BadChecksum",
    "BadLength",
    "BadMagic",
    "ClockCorrector",
    "ClockOffset",
    "ClockProbe",
    "CorruptFile",
    "DorsalSample",
    "FrameSet",
    "ImuSample",
    "NegativeDelay",
    "ProtocolError",
    "SegmentMarker",
    "SyncPolicy",
    "UnknownType",
    "decode_packet",
    "encode_packet",
    "estimate_clock_offset",
    "record",
    "replay",
    "synchronize",
]
