"""Millisecond clocks: a virtual one for tests and simulation, a wall one for hardware."""
from __future__ import annotations

import time
from datetime import datetime, timedelta, timezone

VIRTUAL_EPOCH = datetime(2018, 1, 1, tzinfo=timezone.utc)


class VirtualClock:
    """Time only moves when someone calls ``sleep`` or ``advance_to``."""

    virtual = True

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)

    def now(self) -> int:
        return self._now

    def sleep(self, ms: int) -> None:
        if ms > 0:
            self._now += int(ms)

    def advance_to(self, t_ms: int) -> None:
        if t_ms > self._now:
            self._now = int(t_ms)

    def timestamp(self) -> str:
        return (VIRTUAL_EPOCH + timedelta(milliseconds=self._now)).isoformat().replace("+00:00", "Z")


class WallClock:
    virtual = False

    def __init__(self):
        self._origin = time.monotonic()

    def now(self) -> int:
        return int((time.monotonic() - self._origin) * 1000)

    def sleep(self, ms: int) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)

    def advance_to(self, t_ms: int) -> None:
        self.sleep(t_ms - self.now())

    def timestamp(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def make_clock(virtual: bool):
    return VirtualClock() if virtual else WallClock()
