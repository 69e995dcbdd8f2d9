"""Initialization and Execution phases: golden pre-pass, supervised runs, resume."""
from __future__ import annotations

import errno
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .. import watchdog as wd
from ..clock import make_clock
from ..dut.device import DeviceInterface, ErrorEvent, SimulatedDevice, digest
from ..errors import CorruptJournal, DeviceError, DeviceUnresponsive, JournalWriteFailure, StorageFull
from ..model import ChipSpec, CoreSelection, DomainKind, Effect, EffectSet
from .config import CampaignConfig
from .journal import Journal, Status
from .logtree import MATCH, MISMATCH, SKIPPED, RawArtifacts, collect_logs
from .planner import FrequencyPlan, RunDescriptor, plan_campaign, reliable_cores_setup

log = logging.getLogger(__name__)

# RNG campaign slot for the nominal pre-pass, far away from real campaign indices
GOLDEN_CAMPAIGN = 0x601DE4

# places where the checkpoint hook fires, in execution order
STAGES = (
    "before-started",
    "after-started",
    "after-setup",
    "after-start-msg",
    "after-benchmark",
    "after-restore",
    "after-collect",
    "after-done",
    "after-completed",
)


@dataclass
class RunRecord:
    run: RunDescriptor
    effects: EffectSet
    exit_code: int | None
    duration_ms: int
    error_events: list[ErrorEvent] = field(default_factory=list)
    verdict: str | None = None
    log_dir: Path | None = None
    power_cycled: bool = False
    plan: FrequencyPlan | None = None
    device_effects: EffectSet | None = None


def grid_info(config: CampaignConfig) -> dict:
    return {
        "v_start_mv": config.v_start_mv,
        "v_floor_mv": config.v_floor_mv,
        "v_step_mv": config.v_step_mv,
        "nominal_mv": config.chip.pmd_nominal_mv,
    }


def resume_campaign(journal: Journal, config: CampaignConfig, spec: ChipSpec | None = None,
                    *, clock=None, fsync: bool = True) -> list[RunDescriptor]:
    """Runs still to execute, after settling any run a crash left open.

    A run journaled STARTED but never COMPLETED is the trace of a crash, so it
    is closed as a system crash (INTERRUPTED, then COMPLETED with SC) rather
    than re-executed. Calling this twice without new runs returns the same list.
    """
    spec = spec or config.chip
    records = journal.recover()
    schedule = plan_campaign(config, spec)
    by_id = {r.run_id: r for r in schedule}
    stray = sorted({rec.run_id for rec in records} - set(by_id))
    if stray:
        raise CorruptJournal(f"journal names runs {stray[:5]} that the config does not plan")
    completed, open_runs = Journal.summarize(records)
    now = clock.now() if clock is not None else 0
    for rid in open_runs:
        run = by_id[rid]
        log.warning("run %d was interrupted; recording it as a system crash", rid)
        journal.append(rid, Status.INTERRUPTED)
        sc = EffectSet.of(Effect.SC)
        art = RawArtifacts(watchdog_events=[(now, "POWER_CYCLE interrupted-run")],
                           recorded_effects=sc, grid=grid_info(config), start_ms=now, end_ms=now)
        collect_logs(run, art, config.output_root, fsync=fsync)
        journal.append(rid, Status.COMPLETED, sc)
        completed[rid] = sc
    return [r for r in schedule if r.run_id not in completed]


class CampaignRunner:
    """Executes a campaign against a device under watchdog protection.

    ``checkpoint(stage, run)`` is called at every entry of ``STAGES``; tests
    raise from it to emulate the harness dying at that point.
    """

    def __init__(self, config: CampaignConfig, device: DeviceInterface | None = None, clock=None, *,
                 checkpoint: Callable[[str, RunDescriptor], None] | None = None, fsync: bool = True):
        self.config = config
        self.chip = config.chip
        self.clock = clock or make_clock(config.virtual_clock)
        if device is None:
            device = SimulatedDevice(
                config.fault_model, self.clock, chip=config.chip, seed=config.seed,
                benchmarks={b.id: b.nominal_duration_ms for b in config.benchmarks},
            )
        self.device = device
        self.fsync = fsync
        self.journal = Journal(config.journal_path, self.clock, fsync=fsync)
        self.watchdog = wd.Watchdog(device, self.clock, ping_interval_ms=config.ping_interval_ms,
                                    timeout_multiplier=config.timeout_multiplier)
        self._checkpoint = checkpoint or (lambda stage, run: None)
        self.goldens: dict[str, bytes] = {}

    # -- initialization -----------------------------------------------------------

    def _ensure_up(self):
        if not self.device.ping():
            log.warning("device unresponsive at start-up; power cycling")
            self.device.power_cycle()
        for _ in range(1_000_000):
            if self.device.ping():
                break
            self.clock.sleep(self.config.ping_interval_ms)
        else:  # pragma: no cover
            raise DeviceUnresponsive("device did not come back after power cycle")
        self._nominal()

    def _nominal(self):
        for pmd in range(self.chip.pmd_count):
            self.device.set_frequency(pmd, self.chip.freq_max_mhz)
        self.device.set_voltage(DomainKind.PMD_DOMAIN, self.chip.pmd_nominal_mv)

    def initialize(self) -> dict[str, bytes]:
        """Nominal-conditions pre-pass: make sure every benchmark has a golden output."""
        self._ensure_up()
        sel = self.config.selections[0]
        for i, bench in enumerate(self.config.benchmarks):
            path = self.config.golden_path(bench)
            if not path.is_file():
                out = self._golden_run(bench.id, sel, i)
                self._store_golden(path, out)
            self.goldens[bench.id] = digest(path.read_text(encoding="utf-8"))
        return self.goldens

    def _golden_run(self, bench_id: str, sel: CoreSelection, index: int) -> str:
        for attempt in range(3):
            self._nominal()
            outcome = self.device.run_benchmark(bench_id, sel, None,
                                                run_key=(GOLDEN_CAMPAIGN, index * 16 + attempt))
            if self.device.ping():
                self.device.read_error_log()
            if outcome.responsive and outcome.exit_code == 0 and outcome.effect_set.is_normal:
                return outcome.stdout
            log.warning("nominal pre-pass of %s was not clean (%s); retrying", bench_id, outcome.effect_set)
            if not outcome.responsive:
                self.device.power_cycle()
                self._ensure_up()
        raise DeviceError(f"benchmark {bench_id} does not run cleanly at nominal conditions")

    def _store_golden(self, path: Path, text: str):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(str(exc)) from exc
            raise JournalWriteFailure(f"cannot store golden output {path}: {exc}") from exc

    # -- execution ------------------------------------------------------------------

    def execute_run(self, run: RunDescriptor) -> RunRecord:
        bench = self.config.benchmark(run.benchmark_id)
        golden = self.goldens[bench.id]
        nominal_mv = self.chip.pmd_nominal_mv
        cp = self._checkpoint

        cp("before-started", run)
        self.journal.append(run.run_id, Status.STARTED)
        cp("after-started", run)

        # a harness that died mid-run may have left that run's errors behind
        stale = self.device.read_error_log()
        if stale:
            log.warning("run %d: discarding %d error-log entries left over from an earlier run",
                        run.run_id, len(stale))

        plan =reliable_cores_setup(run.selection, run.vf.freq_mhz, self.chip)
        for pmd, f in enumerate(plan.pmd_freqs):
            self.device.set_frequency(pmd, f)
        self.device.set_voltage(DomainKind.PMD_DOMAIN, run.vf.voltage_mv)
        cp("after-setup", run)

        mark = len(self.watchdog.events)
        t0 = self.clock.now()
        self.watchdog.send(wd.start(run.run_id, bench.nominal_duration_ms))
        cp("after-start-msg", run)
        outcome = self.device.run_benchmark(bench.id, run.selection, golden,
                                            run_key=(run.campaign_index, run.run_id))
        # a hung benchmark never returns; only the watchdog can end the wait
        finish = t0 + outcome.duration_ms if outcome.responsive else float("inf")
        survived = self.watchdog.run_until(finish)
        cp("after-benchmark", run)

        art = RawArtifacts(grid=grid_info(self.config), start_ms=t0)
        record = RunRecord(run, EffectSet(), None, 0, plan=plan, device_effects=outcome.effect_set)
        if survived:
            try:
                self.device.set_voltage(DomainKind.PMD_DOMAIN, nominal_mv)
                cp("after-restore", run)
                events = self.device.read_error_log()
            except DeviceUnresponsive:
                survived = self.watchdog.run_until(float("inf"))
        if survived:
            if outcome.exit_code == 0:
                verdict = MATCH if outcome.output_digest == golden else MISMATCH
            else:
                verdict = SKIPPED
            flags = set()
            if verdict == MISMATCH:
                flags.add(Effect.SDC)
            if any(e.kind is Effect.CE for e in events):
                flags.add(Effect.CE)
            if any(e.kind is Effect.UE for e in events):
                flags.add(Effect.UE)
            if outcome.exit_code != 0:
                flags.add(Effect.AC)
            record.effects = EffectSet(frozenset(flags))
            record.exit_code = outcome.exit_code
            record.error_events = events
            record.verdict = verdict
            art.stdout, art.stderr, art.exit_code, art.verdict = (
                outcome.stdout, outcome.stderr, outcome.exit_code, verdict)
            art.edac_lines = [e.edac_line() for e in events]
        else:
            self.watchdog.await_resume()
            record.effects = EffectSet.of(Effect.SC)
            record.power_cycled = True
            self.journal.append(run.run_id, Status.INTERRUPTED)

        art.end_ms = self.clock.now()
        art.recorded_effects = record.effects
        art.watchdog_events = list(self.watchdog.events[mark:])
        record.duration_ms = art.end_ms - t0
        record.log_dir = collect_logs(run, art, self.config.output_root, fsync=self.fsync)
        cp("after-collect", run)
        if survived:
            self.watchdog.send(wd.done(run.run_id))
        cp("after-done", run)
        self.journal.append(run.run_id, Status.COMPLETED, record.effects)
        cp("after-completed", run)
        if record.device_effects != record.effects:
            log.warning("run %d: observed %s but the device reported %s",
                        run.run_id, record.effects, record.device_effects)
        return record

    def pending(self) -> list[RunDescriptor]:
        return resume_campaign(self.journal, self.config, self.chip, clock=self.clock, fsync=self.fsync)

    def run(self, limit: int | None = None) -> list[RunRecord]:
        """Initialization + Execution: golden pre-pass, then every outstanding run."""
        self.initialize()
        todo = self.pending()
        if limit is not None:
            todo = todo[:limit]
        self._plan_records(todo)
        records = []
        for run in todo:
            records.append(self.execute_run(run))
        return records

    def _plan_records(self, todo: list[RunDescriptor]):
        seen = {rec.run_id for rec in self.journal.records()}
        self.journal.append_many([r.run_id for r in todo if r.run_id not in seen], Status.PLANNED)
