"""Device-under-test interface and the simulated implementation."""
from __future__ import annotations

import abc
import enum
import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .. import kernels
from ..errors import DeviceUnresponsive, UnknownPmd
from ..model import (
    EFFECTS,
    XGENE2,
    ChipSpec,
    CoreSelection,
    DomainKind,
    Effect,
    EffectSet,
    validate_frequency,
    validate_voltage,
)
from .fault_model import FaultModel

log = logging.getLogger(__name__)


class Location(str, enum.Enum):
    L1I = "L1I"
    L1D = "L1D"
    L2 = "L2"
    L3 = "L3"
    DRAM = "DRAM"


# L1 is parity protected: it can flag an error but never correct one
CE_LOCATIONS = (Location.L2, Location.L3, Location.DRAM)
UE_LOCATIONS = (Location.L1I, Location.L1D, Location.L2, Location.L3, Location.DRAM)

_EDAC_RE = re.compile(r"^EDAC (CE|UE) (L1I|L1D|L2|L3|DRAM) count=(\d+)$")


@dataclass(frozen=True)
class ErrorEvent:
    location: Location
    kind: Effect  # CE or UE
    count: int = 1

    def edac_line(self) -> str:
        return f"EDAC {self.kind.value} {self.location.value} count={self.count}"

    @classmethod
    def parse(cls, line: str) -> "ErrorEvent | None":
        m = _EDAC_RE.match(line.strip())
        if not m:
            return None
        return cls(Location(m.group(2)), Effect(m.group(1)), int(m.group(3)))


@dataclass
class SimulatedOutcome:
    effect_set: EffectSet
    error_events: list[ErrorEvent]
    exit_code: int
    output_digest: bytes
    duration_ms: int
    responsive: bool
    stdout: str = ""
    stderr: str = ""
    # offset from run start at which the device stops answering pings
    hang_after_ms: int | None = None


def digest(text: str) -> bytes:
    return hashlib.sha256(text.encode()).digest()


def reference_output(benchmark_id: str) -> str:
    """The correct program output of a simulated benchmark."""
    h = hashlib.sha256(f"uvlab-benchmark:{benchmark_id}".encode()).hexdigest()
    lines = [f"benchmark {benchmark_id}"]
    lines += [f"result[{i}] = {int(h[8 * i:8 * i + 8], 16)}" for i in range(8)]
    lines.append("checksum " + h[:16])
    return "\n".join(lines) + "\n"


class DeviceInterface(abc.ABC):
    """What the orchestrator and watchdog need from a device under test.

    A hardware backend would implement these with the platform's voltage
    regulator and error-reporting interfaces, a serial console and a relay on
    the power button; only the simulated device ships here.
    """

    chip: ChipSpec

    @abc.abstractmethod
    def set_voltage(self, domain: DomainKind | str, mv: int) -> None: ...

    @abc.abstractmethod
    def set_frequency(self, pmd_id: int, mhz: int) -> None: ...

    @abc.abstractmethod
    def voltage(self, domain: DomainKind | str = DomainKind.PMD_DOMAIN) -> int: ...

    @abc.abstractmethod
    def frequencies(self) -> list[int]: ...

    @abc.abstractmethod
    def run_benchmark(self, benchmark_id: str, selection: CoreSelection, golden_digest: bytes | None,
                      *, run_key: tuple[int, int] = (0, 0)) -> SimulatedOutcome: ...

    @abc.abstractmethod
    def read_error_log(self) -> list[ErrorEvent]: ...

    @abc.abstractmethod
    def power_cycle(self) -> None: ...

    @abc.abstractmethod
    def ping(self) -> bool:
        """Responsiveness probe; must not block on a running benchmark."""


@dataclass
class TraceEntry:
    t_ms: int
    op: str
    arg: object = None


class SimulatedDevice(DeviceInterface):
    """Deterministic stand-in for the board, driven by a FaultModel.

    Every outcome is a pure function of ``(seed, campaign, run_id)`` and the
    V/F state, never of call history, so a resumed campaign re-creates the
    exact runs an uninterrupted one would have produced.
    """

    def __init__(self, model: FaultModel | None = None, clock=None, *, chip: ChipSpec = XGENE2,
                 seed: int = 0, benchmarks: Mapping[str, int] | None = None,
                 default_duration_ms: int = 1000):
        from ..clock import VirtualClock

        self.chip = chip
        self.model = model or FaultModel(n_cores=chip.n_cores)
        if self.model.n_cores != chip.n_cores:
            raise ValueError(f"fault model has {self.model.n_cores} cores, chip has {chip.n_cores}")
        self.clock = clock or VirtualClock()
        self.seed = seed
        self.benchmarks = dict(benchmarks or {})
        self.default_duration_ms = default_duration_ms
        self.boot_delay_ms = self.model.boot_delay_ms
        self.trace: list[TraceEntry] = []
        self._errors: list[ErrorEvent] = []
        self._hung_at: int | None = None
        self._booting_until: int | None = None
        self._reset_state()

    def _reset_state(self):
        self._voltages = {d.kind: d.vdd_nominal_mv for d in self.chip.domains if d.scalable}
        self._freqs = [self.chip.freq_max_mhz] * self.chip.pmd_count

    def _require_responsive(self):
        if not self.ping():
            raise DeviceUnresponsive("device does not answer")

    # -- DeviceInterface --------------------------------------------------------

    def ping(self) -> bool:
        now = self.clock.now()
        if self._booting_until is not None and now < self._booting_until:
            return False
        if self._hung_at is not None and now >= self._hung_at:
            return False
        return True

    def set_voltage(self, domain, mv):
        domain = DomainKind(domain)
        self._require_responsive()
        validate_voltage(self.chip, domain, mv)
        self._voltages[domain] = mv
        self.trace.append(TraceEntry(self.clock.now(), "set_voltage", (domain.value, mv)))

    def set_frequency(self, pmd_id, mhz):
        self._require_responsive()
        if not 0 <= pmd_id < self.chip.pmd_count:
            raise UnknownPmd(f"PMD {pmd_id} does not exist (chip has {self.chip.pmd_count})")
        validate_frequency(self.chip, mhz)
        self._freqs[pmd_id] = mhz
        self.trace.append(TraceEntry(self.clock.now(), "set_frequency", (pmd_id, mhz)))

    def voltage(self, domain=DomainKind.PMD_DOMAIN):
        return self._voltages[DomainKind(domain)]

    def frequencies(self):
        return list(self._freqs)

    def nominal_duration(self, benchmark_id: str) -> int:
        return int(self.benchmarks.get(benchmark_id, self.default_duration_ms))

    def run_benchmark(self, benchmark_id, selection, golden_digest=None, *, run_key=(0, 0)):
        self._require_responsive()
        campaign, run_id = run_key
        v = self._voltages[DomainKind.PMD_DOMAIN]
        cores = list(selection.core_ids)
        freqs = [self._freqs[self.chip.pmd_of(c)] for c in cores]
        keys = kernels.run_keys(self.seed, campaign, [run_id])
        thr = self.model.thresholds(cores, freqs, benchmark_id)
        args = kernels.as_kernel_args(cores, thr, self.model.sigmas())
        raw = kernels.sample_flags(keys, *args, float(self.model.noise_mv), float(v))
        observed = kernels.observed_effects(raw)[0]
        aux = kernels.uniforms(keys[0], np.arange(kernels.AUX_BASE, kernels.AUX_BASE + 10, dtype=np.int64))
        outcome = self._fabricate(benchmark_id, observed, aux, golden_digest)
        start = self.clock.now()
        self.trace.append(TraceEntry(start, "run", (benchmark_id, v, run_id)))
        if outcome.hang_after_ms is not None:
            self._hung_at = start + outcome.hang_after_ms
        # error events land in the device log even when a crash later wipes it
        self._errors.extend(outcome.error_events)
        return outcome

    def _fabricate(self, benchmark_id, observed, aux, golden_digest) -> SimulatedOutcome:
        flags = {e for e, on in zip(EFFECTS, observed) if on}
        nominal = self.nominal_duration(benchmark_id)
        duration = max(1, int(round(nominal * (0.97 + 0.06 * aux[0]))))
        good = reference_output(benchmark_id)
        events = []
        if Effect.CE in flags:
            loc = CE_LOCATIONS[int(aux[4] * len(CE_LOCATIONS))]
            events.append(ErrorEvent(loc, Effect.CE, 1 + int(aux[5] * 8)))
        if Effect.UE in flags:
            loc = UE_LOCATIONS[int(aux[6] * len(UE_LOCATIONS))]
            events.append(ErrorEvent(loc, Effect.UE, 1 + int(aux[7] * 2)))

        if Effect.SC in flags:
            if aux[1] < 0.75:
                hang = max(1, int(duration * aux[2]))
                return SimulatedOutcome(EffectSet(frozenset(flags)), events, -1, b"", hang, False,
                                        hang_after_ms=hang)
            # livelock: still answers pings but never finishes
            return SimulatedOutcome(EffectSet(frozenset(flags)), events, -1, b"", 1000 * nominal, True)

        if Effect.AC in flags:
            code = (1, 134, 136, 139)[int(aux[3] * 4)]
            out = good[: int(len(good) * aux[8])]
            err = f"{benchmark_id}: terminated abnormally (exit {code})\n"
            return SimulatedOutcome(EffectSet(frozenset(flags)), events, code, digest(out), duration, True,
                                    stdout=out, stderr=err)

        out = good
        if Effect.SDC in flags:
            lines = good.splitlines(keepends=True)
            i = 1 + int(aux[9] * (len(lines) - 2))
            lines[i] = lines[i].replace(" = ", " = 1", 1)
            out = "".join(lines)
        outcome = SimulatedOutcome(EffectSet(frozenset(flags)), events, 0, digest(out), duration, True, stdout=out)
        if golden_digest is not None and (outcome.output_digest != golden_digest) != (Effect.SDC in flags):
            log.warning("golden digest for %s does not match the simulator's reference output", benchmark_id)
        return outcome

    def read_error_log(self):
        self._require_responsive()
        events, self._errors = self._errors, []
        return events

    def power_cycle(self):
        now = self.clock.now()
        self._hung_at = None
        self._booting_until = now + self.boot_delay_ms
        self._errors = []
        self._reset_state()
        self.trace.append(TraceEntry(now, "power_cycle"))

    # -- helpers for tests and the watchdog loop --------------------------------

    def voltage_trace(self) -> list[int]:
        """PMD-domain voltage after every voltage-changing operation, in order."""
        nominal = self.chip.pmd_nominal_mv
        out = []
        for t in self.trace:
            if t.op == "set_voltage" and t.arg[0] == DomainKind.PMD_DOMAIN.value:
                out.append(t.arg[1])
            elif t.op == "power_cycle":
                out.append(nominal)
        return out
