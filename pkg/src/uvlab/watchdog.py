"""External watchdog: line protocol, pure state machine, and a small driver.

The state machine is two pure functions, ``on_message`` and ``tick``, over an
immutable ``WatchdogState``. ``Watchdog`` wires them to a device (ping and
power button) and a clock; it holds no campaign knowledge.

Wire format, one ASCII line per message::

    START <run_id> <nominal_ms>
    DONE <run_id>
    PING / PONG / POWER_CYCLE / BOOTED / RESUME
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable

from .errors import NonPositiveDuration, ProtocolViolation

log = logging.getLogger(__name__)

DEFAULT_PING_INTERVAL_MS = 1000
DEFAULT_TIMEOUT_MULTIPLIER = 2


class Phase(str, enum.Enum):
    IDLE = "IDLE"
    ARMED = "ARMED"
    PINGING = "PINGING"
    CYCLING = "CYCLING"
    AWAIT_BOOT = "AWAIT_BOOT"


class Kind(str, enum.Enum):
    START = "START"
    DONE = "DONE"
    PING = "PING"
    PONG = "PONG"
    POWER_CYCLE = "POWER_CYCLE"
    BOOTED = "BOOTED"
    RESUME = "RESUME"


class PingResult(str, enum.Enum):
    RESPONSIVE = "responsive"
    UNRESPONSIVE = "unresponsive"
    NONE = "none"


@dataclass(frozen=True)
class Message:
    kind: Kind
    run_id: str | None = None
    nominal_ms: int | None = None

    def encode(self) -> bytes:
        if self.kind is Kind.START:
            return f"START {self.run_id} {self.nominal_ms}\n".encode("ascii")
        if self.kind is Kind.DONE:
            return f"DONE {self.run_id}\n".encode("ascii")
        return f"{self.kind.value}\n".encode("ascii")

    def __str__(self) -> str:
        return self.encode().decode().rstrip("\n")


def start(run_id, nominal_ms: int) -> Message:
    return Message(Kind.START, str(run_id), int(nominal_ms))


def done(run_id) -> Message:
    return Message(Kind.DONE, str(run_id))


PING = Message(Kind.PING)
PONG = Message(Kind.PONG)
POWER_CYCLE = Message(Kind.POWER_CYCLE)
BOOTED = Message(Kind.BOOTED)
RESUME = Message(Kind.RESUME)


def decode(line: bytes | str) -> Message | None:
    """Parse one line; unknown or malformed lines are logged and return None."""
    try:
        text = line.decode("ascii") if isinstance(line, bytes) else line
    except UnicodeDecodeError:
        log.warning("ignoring non-ASCII watchdog line %r", line)
        return None
    parts = text.rstrip("\r\n").split(" ")
    head, args = parts[0], parts[1:]
    try:
        if head == "START" and len(args) == 2 and args[0]:
            nominal = int(args[1])
            if nominal > 0:
                return Message(Kind.START, args[0], nominal)
        elif head == "DONE" and len(args) == 1 and args[0]:
            return Message(Kind.DONE, args[0])
        elif head in ("PING", "PONG", "POWER_CYCLE", "BOOTED", "RESUME") and not args:
            return Message(Kind(head))
    except ValueError:
        pass
    log.warning("ignoring unknown watchdog line %r", text)
    return None


class LineDecoder:
    """Incremental decoder for a byte stream (socket or serial line)."""

    def __init__(self):
        self._buf = b""

    def feed(self, data: bytes) -> list[Message]:
        self._buf += data
        *lines, self._buf = self._buf.split(b"\n")
        return [m for m in (decode(line) for line in lines if line.strip()) if m is not None]


def timeout_for(nominal_ms: int, multiplier: float = DEFAULT_TIMEOUT_MULTIPLIER) -> int:
    """Hang timeout for a run whose normal execution time is ``nominal_ms``."""
    if nominal_ms <= 0:
        raise NonPositiveDuration(f"nominal duration must be positive, got {nominal_ms}")
    if multiplier <= 0:
        raise NonPositiveDuration(f"timeout multiplier must be positive, got {multiplier}")
    return int(round(nominal_ms * multiplier))


@dataclass(frozen=True)
class WatchdogState:
    phase: Phase = Phase.IDLE
    run_id: str | None = None
    deadline: int | None = None
    ping_interval: int = DEFAULT_PING_INTERVAL_MS
    nominal_duration: int | None = None
    timeout_multiplier: float = DEFAULT_TIMEOUT_MULTIPLIER
    cycles: int = 0  # POWER_CYCLEs emitted for the current run

    @property
    def armed(self) -> bool:
        return self.phase in (Phase.ARMED, Phase.PINGING)


def _idle(state: WatchdogState) -> WatchdogState:
    return replace(state, phase=Phase.IDLE, run_id=None, deadline=None, nominal_duration=None, cycles=0)


def _cycle(state: WatchdogState) -> tuple[WatchdogState, list[Message]]:
    return replace(state, phase=Phase.CYCLING, deadline=None, cycles=state.cycles + 1), [POWER_CYCLE]


def on_message(state: WatchdogState, msg: Message, now: int) -> tuple[WatchdogState, list[Message]]:
    kind = msg.kind
    if kind is Kind.START:
        if state.phase is not Phase.IDLE:
            raise ProtocolViolation(f"START {msg.run_id} while {state.phase.value} (run {state.run_id})")
        deadline = now + timeout_for(msg.nominal_ms, state.timeout_multiplier)
        return replace(state, phase=Phase.PINGING, run_id=msg.run_id, deadline=deadline,
                       nominal_duration=msg.nominal_ms, cycles=0), []
    if kind is Kind.DONE:
        if state.armed and msg.run_id == state.run_id:
            return _idle(state), []
        log.info("ignoring stale DONE %s in %s", msg.run_id, state.phase.value)
        return state, []
    if kind is Kind.BOOTED:
        if state.phase in (Phase.CYCLING, Phase.AWAIT_BOOT):
            return _idle(state), [RESUME]
        if state.armed:
            # the kernel reset itself (hung-task panic): same path as a failed ping
            return _cycle(state)
        return state, []
    if kind is Kind.PING:
        return state, [PONG]
    # PONG is consumed by the driver as a ping result; the rest only flow outward
    return state, []


def tick(state: WatchdogState, now: int, ping_result: PingResult | str = PingResult.NONE):
    ping_result = PingResult(ping_result)
    if state.armed:
        if ping_result is PingResult.UNRESPONSIVE or now >= state.deadline:
            return _cycle(state)
        return state, []
    if state.phase is Phase.CYCLING:
        return replace(state, phase=Phase.AWAIT_BOOT), []
    if state.phase is Phase.AWAIT_BOOT and ping_result is PingResult.RESPONSIVE:
        return _idle(state), [RESUME]
    return state, []


def next_tick_time(state: WatchdogState, last_tick: int) -> int:
    """When the driver should tick next: one ping interval on, but never past the deadline."""
    t = last_tick + state.ping_interval
    if state.armed and state.deadline is not None:
        t = min(t, max(state.deadline, last_tick + 1))
    return t


class Watchdog:
    """Drives the state machine against a device and a clock.

    ``send`` is the DUT-side end of the wire: it takes the bytes the
    orchestrator would write to the serial line. ``run_until`` plays the
    pinging loop forward in time; with a virtual clock it simply jumps from
    tick to tick.
    """

    def __init__(self, device, clock, *, ping_interval_ms: int = DEFAULT_PING_INTERVAL_MS,
                 timeout_multiplier: float = DEFAULT_TIMEOUT_MULTIPLIER,
                 on_event: Callable[[int, str], None] | None = None):
        self.device = device
        self.clock = clock
        self.state = WatchdogState(ping_interval=ping_interval_ms, timeout_multiplier=timeout_multiplier)
        self.outbox: list[bytes] = []
        self.events: list[tuple[int, str]] = []
        self._on_event = on_event
        self._decoder = LineDecoder()
        self._last_tick = clock.now()

    def _event(self, text: str):
        entry = (self.clock.now(), text)
        self.events.append(entry)
        if self._on_event:
            self._on_event(*entry)

    def _apply(self, new_state: WatchdogState, actions: Iterable[Message], reason: str = ""):
        self.state = new_state
        for act in actions:
            if act.kind is Kind.POWER_CYCLE:
                self._event(f"POWER_CYCLE {reason}".rstrip())
                self.device.power_cycle()
            elif act.kind is Kind.RESUME:
                self._event("RESUME")
                self.outbox.append(act.encode())
            else:
                self.outbox.append(act.encode())

    def send(self, data: bytes | Message):
        if isinstance(data, Message):
            data = data.encode()
        for msg in self._decoder.feed(data):
            if msg.kind in (Kind.START, Kind.DONE, Kind.BOOTED):
                self._event(str(msg))
            if msg.kind is Kind.START:
                self._last_tick = self.clock.now()
            reason = "hung-task-reset" if msg.kind is Kind.BOOTED and self.state.armed else ""
            self._apply(*on_message(self.state, msg, self.clock.now()), reason=reason)

    def _tick_once(self):
        t = next_tick_time(self.state, self._last_tick)
        self.clock.advance_to(t)
        self._last_tick = self.clock.now()
        result = PingResult.RESPONSIVE if self.device.ping() else PingResult.UNRESPONSIVE
        reason = ""
        if self.state.armed:
            reason = "timeout" if self.clock.now() >= self.state.deadline else "unresponsive"
        self._apply(*tick(self.state, self.clock.now(), result), reason=reason)

    def run_until(self, t_end: int) -> bool:
        """Tick until ``t_end``; False as soon as the armed run gets power-cycled."""
        while self.clock.now() < t_end:
            if not self.state.armed:
                break
            if next_tick_time(self.state, self._last_tick) > t_end:
                self.clock.advance_to(t_end)
                break
            self._tick_once()
            if self.state.phase is Phase.CYCLING:
                return False
        return self.state.phase is not Phase.CYCLING

    def await_resume(self, max_ticks: int = 1_000_000) -> None:
        """After a power cycle, ping until the device is back and RESUME goes out."""
        for _ in range(max_ticks):
            if self.state.phase is Phase.IDLE:
                return
            self._tick_once()
        raise TimeoutError("device never came back after power cycle")
