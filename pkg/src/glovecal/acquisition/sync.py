"""Approximate-time synchronization of the 16 IMU streams and the dorsal
tracker into FrameSets.

Matching is greedy around a pivot, the latest head among the required
streams. Samples more than half a window before the pivot can never join
a set and are dropped. For every stream the sample nearest the pivot within
half a window after it is taken; a stream is only decided once it has a
sample beyond that bound (or is closed), so online and offline runs agree.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

N_IMU = 16
DORSAL = 16
DEFAULT_WINDOW_NS = 10_000_000


@dataclass
class SyncPolicy:
    window_ns: int = DEFAULT_WINDOW_NS
    use_dorsal: bool = True
    queue_size: int | None = None

    def __post_init__(self):
        if self.window_ns <= 0:
            raise ValueError("window must be positive")
        if self.queue_size is not None and self.queue_size < 1:
            raise ValueError("queue size must be at least 1")


@dataclass
class FrameSet:
    timestamp: int
    samples: list  # one item per IMU stream
    timestamps: list
    dorsal: object = None
    dorsal_timestamp: int | None = None

    @property
    def spread(self) -> int:
        ts = list(self.timestamps)
        if self.dorsal_timestamp is not None:
            ts.append(self.dorsal_timestamp)
        return max(ts) - min(ts)


@dataclass
class SyncStats:
    emitted: int = 0
    dropped: list = field(default_factory=list)
    overflow: list = field(default_factory=list)

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped)


class ApproximateSynchronizer:
    """Single-consumer synchronizer. ``push`` returns the FrameSets that
    became final; ``close`` marks a stream finished."""

    def __init__(self, policy: SyncPolicy | None = None, n_required: int = N_IMU):
        self.policy = policy or SyncPolicy()
        self.n_required = n_required
        self.n_streams = n_required + (1 if self.policy.use_dorsal else 0)
        self.queues = [deque() for _ in range(self.n_streams)]
        self.closed = [False] * self.n_streams
        self.last_pushed = [None] * self.n_streams
        self.last_emitted: int | None = None
        self.stats = SyncStats(0, [0] * self.n_streams, [0] * self.n_streams)
        self.half = self.policy.window_ns // 2

    def push(self, stream: int, timestamp: int, item=None) -> list[FrameSet]:
        if not 0 <= stream < self.n_streams:
            raise ValueError(f"unknown stream {stream}")
        if self.closed[stream]:
            raise ValueError(f"stream {stream} is closed")
        timestamp = int(timestamp)
        last = self.last_pushed[stream]
        if last is not None and timestamp < last:
            raise ValueError(f"stream {stream} went back in time ({timestamp} < {last})")
        self.last_pushed[stream] = timestamp
        q = self.queues[stream]
        q.append((timestamp, item))
        size = self.policy.queue_size
        if size is not None and len(q) > size:
            q.popleft()
            self.stats.dropped[stream] += 1
            self.stats.overflow[stream] += 1
        return self._drain()

    def close(self, stream: int | None = None) -> list[FrameSet]:
        """Close one stream, or all of them, and flush what is decidable.

        Once all streams are closed the leftovers are counted as drops.
        """
        streams = range(self.n_streams) if stream is None else [stream]
        for s in streams:
            self.closed[s] = True
        out = self._drain()
        if all(self.closed):
            for s, q in enumerate(self.queues):
                self.stats.dropped[s] += len(q)
                q.clear()
        return out

    # ------------------------------------------------------------------

    def _drain(self) -> list[FrameSet]:
        out = []
        while True:
            frame = self._try_emit()
            if frame is None:
                return out
            out.append(frame)

    def _drop_before(self, stream: int, bound: int) -> None:
        q = self.queues[stream]
        while q and q[0][0] < bound:
            q.popleft()
            self.stats.dropped[stream] += 1

    def _try_emit(self) -> FrameSet | None:
        req = range(self.n_required)
        while True:
            if any(not self.queues[s] for s in req):
                return None
            pivot = max(self.queues[s][0][0] for s in req)
            for s in range(self.n_streams):
                self._drop_before(s, pivot - self.half)
            if all(self.queues[s] for s in req) and max(self.queues[s][0][0] for s in req) == pivot:
                break
        upper = pivot + self.half
        for s in range(self.n_streams):
            q = self.queues[s]
            if not self.closed[s] and (not q or q[-1][0] <= upper):
                return None
        picks = []
        for s in range(self.n_streams):
            q = self.queues[s]
            best, best_d = None, None
            for k, (t, _) in enumerate(q):
                if t > upper:
                    break
                d = abs(t - pivot)
                if best is None or d < best_d:
                    best, best_d = k, d
            picks.append(best)
        for s, k in enumerate(picks):
            if k is None:
                continue
            q = self.queues[s]
            self.stats.dropped[s] += k
            for _ in range(k):
                q.popleft()
            picks[s] = q.popleft()
        imu = picks[: self.n_required]
        frame = FrameSet(pivot, [p[1] for p in imu], [p[0] for p in imu])
        if self.policy.use_dorsal and picks[DORSAL] is not None:
            frame.dorsal_timestamp, frame.dorsal = picks[DORSAL]
        self.last_emitted = pivot
        self.stats.emitted += 1
        return frame


def synchronize(streams, policy: SyncPolicy | None = None, n_required: int = N_IMU):
    """Offline synchronization of per-stream timestamp lists.

    ``streams`` is a list of sequences of ``(timestamp, item)``; the last
    entry is the dorsal stream when the policy uses one. Samples are fed
    in global timestamp order. Returns ``(frames, stats)``.
    """
    sync = ApproximateSynchronizer(policy, n_required)
    if len(streams) != sync.n_streams:
        raise ValueError(f"expected {sync.n_streams} streams, got {len(streams)}")
    events = sorted(
        ((int(t), s, k, item) for s, stream in enumerate(streams) for k, (t, item) in enumerate(stream)),
        key=lambda e: (e[0], e[1], e[2]),
    )
    frames = []
    for t, s, _, item in events:
        frames.extend(sync.push(s, t, item))
    frames.extend(sync.close())
    return frames, sync.stats
