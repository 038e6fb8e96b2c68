"""Four-timestamp clock offset estimation and timestamp correction.

The glove (client) stamps ``t1`` when it sends a probe and ``t4`` when the
reply arrives; the host (server) stamps ``t2`` on receipt and ``t3`` on
reply. ``offset`` is host clock minus glove clock.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)


class NegativeDelay(ValueError):
    pass


@dataclass(frozen=True)
class ClockOffset:
    offset: int
    delay: int


def estimate_clock_offset(t1: int, t2: int, t3: int, t4: int) -> ClockOffset:
    t1, t2, t3, t4 = int(t1), int(t2), int(t3), int(t4)
    delay = (t4 - t1) - (t3 - t2)
    if delay < 0:
        raise NegativeDelay(f"round-trip delay {delay} ns is negative")
    # floor division keeps the result an exact integer of nanoseconds
    offset = ((t2 - t1) + (t3 - t4)) // 2
    return ClockOffset(offset, delay)


def best_offset(probes) -> ClockOffset | None:
    """Offset from the probe with the smallest round-trip delay."""
    best = None
    for p in probes:
        est = estimate_clock_offset(p.t1, p.t2, p.t3, p.t4)
        if best is None or est.delay < best.delay:
            best = est
    return best


class ClockCorrector:
    """Maps glove timestamps onto the host clock.

    Setting the same offset again is a no-op, so repeated probes do not
    shift timestamps twice.
    """

    def __init__(self, offset: int = 0):
        self.offset = int(offset)

    def update(self, estimate: ClockOffset) -> bool:
        if estimate.offset == self.offset:
            return False
        log.info("clock offset %d ns -> %d ns (delay %d ns)", self.offset, estimate.offset, estimate.delay)
        self.offset = int(estimate.offset)
        return True

    def __call__(self, timestamp):
        return timestamp + self.offset
