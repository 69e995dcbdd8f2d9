import logging
import queue
import socket
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

import wd_explore
from uvlab import watchdog as wd
from uvlab.clock import VirtualClock
from uvlab.errors import NonPositiveDuration, ProtocolViolation
from uvlab.watchdog import Phase, PingResult, WatchdogState


class FakeDevice:
    """Just enough device for the driver: ping answers and a power button."""

    def __init__(self, clock, boot_ms=30_000):
        self.clock = clock
        self.boot_ms = boot_ms
        self.dead_from = None
        self.booting_until = None
        self.cycles = []

    def ping(self):
        now = self.clock.now()
        if self.booting_until is not None and now < self.booting_until:
            return False
        return self.dead_from is None or now < self.dead_from

    def power_cycle(self):
        self.cycles.append(self.clock.now())
        self.dead_from = None
        self.booting_until = self.clock.now() + self.boot_ms


# -- pure functions -------------------------------------------------------------

def test_timeout_for():
    assert wd.timeout_for(10_000) == 20_000
    assert wd.timeout_for(1) == 2
    assert wd.timeout_for(1000, 3) == 3000
    with pytest.raises(NonPositiveDuration):
        wd.timeout_for(0)
    with pytest.raises(NonPositiveDuration):
        wd.timeout_for(10, 0)


def test_start_arms_deadline():
    s, acts = wd.on_message(WatchdogState(), wd.start("r1", 10_000), now=500)
    assert s.phase is Phase.PINGING and s.deadline == 20_500 and s.run_id == "r1" and acts == []


def test_done_returns_to_idle():
    s, _ = wd.on_message(WatchdogState(), wd.start("r1", 10_000), 0)
    s, acts = wd.on_message(s, wd.done("r1"), 100)
    assert s == WatchdogState() and acts == []


def test_stale_done_is_ignored():
    s, _ = wd.on_message(WatchdogState(), wd.start("r2", 10_000), 0)
    s2, acts = wd.on_message(s, wd.done("r1"), 100)
    assert s2 == s and acts == []
    assert wd.on_message(WatchdogState(), wd.done("r1"), 0) == (WatchdogState(), [])


def test_start_while_busy_is_a_violation():
    s, _ = wd.on_message(WatchdogState(), wd.start("r1", 10), 0)
    with pytest.raises(ProtocolViolation):
        wd.on_message(s, wd.start("r2", 10), 1)


def test_booted_while_awaiting_boot_resumes():
    s = WatchdogState(phase=Phase.AWAIT_BOOT, run_id="r1", cycles=1)
    s2, acts = wd.on_message(s, wd.BOOTED, 0)
    assert s2.phase is Phase.IDLE and acts == [wd.RESUME]


def test_tick_examples():
    s, _ = wd.on_message(WatchdogState(), wd.start("r1", 10_000), 0)
    assert wd.tick(s, 19_999, PingResult.RESPONSIVE) == (s, [])
    s2, acts = wd.tick(s, 20_000, PingResult.RESPONSIVE)
    assert s2.phase is Phase.CYCLING and acts == [wd.POWER_CYCLE] and s2.deadline is None
    s3, acts = wd.tick(s, 3_000, PingResult.UNRESPONSIVE)
    assert s3.phase is Phase.CYCLING and acts == [wd.POWER_CYCLE]
    s4, acts = wd.tick(s3, 4_000, PingResult.UNRESPONSIVE)
    assert s4.phase is Phase.AWAIT_BOOT and acts == []
    assert wd.tick(s4, 5_000, PingResult.UNRESPONSIVE) == (s4, [])
    s5, acts = wd.tick(s4, 6_000, PingResult.RESPONSIVE)
    assert s5.phase is Phase.IDLE and acts == [wd.RESUME]


def test_hung_task_reset_takes_fast_path():
    s, _ = wd.on_message(WatchdogState(), wd.start("r1", 10_000), 0)
    s2, acts = wd.on_message(s, wd.BOOTED, 1_500)
    assert s2.phase is Phase.CYCLING and acts == [wd.POWER_CYCLE]
    # the timeout path would only have fired at 20 s
    assert 1_500 < s.deadline


def test_ping_is_answered():
    assert wd.on_message(WatchdogState(), wd.PING, 0) == (WatchdogState(), [wd.PONG])


def test_next_tick_time_never_passes_deadline():
    s, _ = wd.on_message(WatchdogState(ping_interval=3000), wd.start("r1", 1000), 0)
    assert wd.next_tick_time(s, 0) == 2000
    assert wd.next_tick_time(WatchdogState(ping_interval=3000), 0) == 3000


# -- wire format ------------------------------------------------------------------

def test_encoding_is_bit_exact():
    assert wd.start("r1", 10_000).encode() == b"START r1 10000\n"
    assert wd.done("r1").encode() == b"DONE r1\n"
    for m, raw in ((wd.PING, b"PING\n"), (wd.PONG, b"PONG\n"), (wd.POWER_CYCLE, b"POWER_CYCLE\n"),
                   (wd.BOOTED, b"BOOTED\n"), (wd.RESUME, b"RESUME\n")):
        assert m.encode() == raw
        assert wd.decode(raw) == m


@given(st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=12),
       st.integers(1, 10**9))
def test_roundtrip(run_id, ms):
    assert wd.decode(wd.start(run_id, ms).encode()) == wd.start(run_id, ms)
    assert wd.decode(wd.done(run_id).encode()) == wd.done(run_id)


@pytest.mark.parametrize("line", [b"HELLO\n", b"START r1\n", b"START r1 -5\n", b"START r1 x\n", b"DONE\n",
                                  b"PING extra\n", b"\xff\xfe\n"])
def test_unknown_lines_ignored_with_warning(line, caplog):
    with caplog.at_level(logging.WARNING, logger="uvlab.watchdog"):
        assert wd.decode(line) is None
    assert caplog.records


def test_line_decoder_handles_fragments():
    dec = wd.LineDecoder()
    assert dec.feed(b"STA") == []
    assert dec.feed(b"RT 7 100\nDO") == [wd.start("7", 100)]
    assert dec.feed(b"NE 7\nJUNK\n") == [wd.done("7")]


# -- driver under a virtual clock -------------------------------------------------------

def test_cycle_fires_exactly_at_timeout():
    clock = VirtualClock()
    dev = FakeDevice(clock)
    dog = wd.Watchdog(dev, clock)
    dog.send(wd.start("r1", 10_000))
    assert dog.run_until(float("inf")) is False
    assert dev.cycles == [20_000]
    assert dog.events[-1] == (20_000, "POWER_CYCLE timeout")


def test_cycle_fires_at_first_unresponsive_tick():
    clock = VirtualClock()
    dev = FakeDevice(clock)
    dog = wd.Watchdog(dev, clock)
    dog.send(wd.start("r1", 10_000))
    dev.dead_from = 2_500
    assert dog.run_until(float("inf")) is False
    assert dev.cycles == [3_000]
    dog.await_resume()
    assert dog.state.phase is Phase.IDLE
    assert clock.now() == 3_000 + 30_000
    assert dog.outbox[-1] == b"RESUME\n"


def test_done_before_deadline_means_no_cycle():
    clock = VirtualClock()
    dev = FakeDevice(clock)
    dog = wd.Watchdog(dev, clock)
    dog.send(wd.start("r1", 10_000))
    assert dog.run_until(9_500) is True
    dog.send(wd.done("r1"))
    assert dog.state.phase is Phase.IDLE and dev.cycles == []
    # pinging stops at DONE: time can pass without ticks
    assert dog.run_until(100_000) is True and dev.cycles == []


@given(st.integers(1, 50_000), st.integers(100, 5000), st.sampled_from([1.5, 2, 3]))
def test_timeout_exactness(nominal, interval, mult):
    clock = VirtualClock(start_ms=1234)
    dev = FakeDevice(clock)
    dog = wd.Watchdog(dev, clock, ping_interval_ms=interval, timeout_multiplier=mult)
    dog.send(wd.start("r", nominal))
    dog.run_until(float("inf"))
    assert dev.cycles == [1234 + wd.timeout_for(nominal, mult)]


def test_booted_from_device_during_run():
    clock = VirtualClock()
    dev = FakeDevice(clock)
    dog = wd.Watchdog(dev, clock)
    dog.send(wd.start("r1", 10_000))
    dog.run_until(2_000)
    dog.send(wd.BOOTED)
    assert dev.cycles == [2_000]
    assert dog.events[-1] == (2_000, "POWER_CYCLE hung-task-reset")


# -- exhaustive model check ------------------------------------------------------------

def test_exhaustive_safety_and_liveness():
    nodes, violations, sequences = wd_explore.explore(depth=12)
    assert violations == []
    assert sequences > 10**9  # every interleaving of length <= 12 is covered via the node graph
    for node in nodes.values():
        assert wd_explore.returns_to_idle(node)


# -- over a real byte stream -------------------------------------------------------------

def test_protocol_over_socketpair():
    """Orchestrator and watchdog talk through a socket; a pump thread feeds an ordered queue."""
    left, right = socket.socketpair()
    clock = VirtualClock()
    dev = FakeDevice(clock, boot_ms=5_000)
    dog = wd.Watchdog(dev, clock)
    inbox: queue.Queue = queue.Queue()

    def pump():
        while True:
            data = right.recv(7)  # deliberately small reads to split lines
            if not data:
                inbox.put(None)
                return
            inbox.put(data)

    t = threading.Thread(target=pump, daemon=True)
    t.start()
    left.sendall(wd.start("run-1", 4_000).encode() + b"garbage line\n")
    left.sendall(wd.done("run-1").encode())
    left.sendall(wd.start("run-2", 4_000).encode())
    left.shutdown(socket.SHUT_WR)

    received = b""
    while True:
        chunk = inbox.get(timeout=5)
        if chunk is None:
            break
        received += chunk
        dog.send(chunk)
    t.join(timeout=5)
    assert received.count(b"\n") == 4
    # run-2 never reports DONE
    assert dog.run_until(float("inf")) is False
    dog.await_resume()
    for raw in dog.outbox:
        right.sendall(raw)
    right.shutdown(socket.SHUT_WR)
    back = b""
    while chunk := left.recv(64):
        back += chunk
    assert back == b"RESUME\n"
    assert [e for _, e in dog.events] == ["START run-1 4000", "DONE run-1", "START run-2 4000",
                                          "POWER_CYCLE timeout", "RESUME"]
    left.close()
    right.close()
