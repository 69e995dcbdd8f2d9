"""Per-run raw log directories, written durably before a run is journaled COMPLETED.

Layout under ``output_root``::

    <benchmark>/<selection>/<freq>mhz/<voltage>mv/rep<k>/
        meta.json       run descriptor, grid, recorded effects
        output.txt      benchmark stdout         (absent after a system crash)
        stderr.txt
        exit_code.txt                            (absent after a system crash)
        verdict.txt     MATCH | MISMATCH | SKIPPED (absent after a system crash)
        edac.log        one ``EDAC <kind> <location> count=<n>`` line per event
        watchdog.log    ``t=<ms> <event>`` lines
        timings.json
"""
from __future__ import annotations

import errno
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import JournalWriteFailure, StorageFull
from ..model import EffectSet
from .planner import RunDescriptor

MATCH = "MATCH"
MISMATCH = "MISMATCH"
SKIPPED = "SKIPPED"


@dataclass
class RawArtifacts:
    stdout: str | None = None
    stderr: str = ""
    exit_code: int | None = None
    verdict: str | None = None
    edac_lines: list[str] = field(default_factory=list)
    watchdog_events: list[tuple[int, str]] = field(default_factory=list)
    start_ms: int = 0
    end_ms: int = 0
    recorded_effects: EffectSet = EffectSet()
    grid: dict = field(default_factory=dict)


def _write(path: Path, text: str, do_fsync: bool):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.flush()
        if do_fsync:
            os.fsync(fh.fileno())


def _fsync_dir(path: Path):
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


def run_meta(run: RunDescriptor, art: RawArtifacts) -> dict:
    return {
        "run_id": run.run_id,
        "benchmark": run.benchmark_id,
        "selection": run.selection.label,
        "selection_mode": run.selection.mode.value,
        "core_ids": list(run.selection.core_ids),
        "freq_mhz": run.vf.freq_mhz,
        "voltage_mv": run.vf.voltage_mv,
        "campaign_index": run.campaign_index,
        "repeat_index": run.repeat_index,
        "grid": art.grid,
        "recorded_effects": art.recorded_effects.to_token(","),
    }


def collect_logs(run: RunDescriptor, art: RawArtifacts, output_root: str | Path, *,
                 fsync: bool = True) -> Path:
    """Write one run's artifacts under ``output_root`` and fsync them; returns the run dir.

    Any previous directory for the run (from an interrupted attempt) is replaced.
    """
    d = Path(output_root) / run.rel_dir
    try:
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        files = {
            "meta.json": json.dumps(run_meta(run, art), indent=2, sort_keys=True) + "\n",
            "edac.log": "".join(line + "\n" for line in art.edac_lines),
            "watchdog.log": "".join(f"t={t} {ev}\n" for t, ev in art.watchdog_events),
            "timings.json": json.dumps(
                {"start_ms": art.start_ms, "end_ms": art.end_ms, "duration_ms": art.end_ms - art.start_ms},
                sort_keys=True) + "\n",
        }
        if art.stdout is not None:
            files["output.txt"] = art.stdout
            files["stderr.txt"] = art.stderr
        if art.exit_code is not None:
            files["exit_code.txt"] = f"{art.exit_code}\n"
        if art.verdict is not None:
            files["verdict.txt"] = art.verdict + "\n"
        for name, text in files.items():
            _write(d / name, text, fsync)
        if fsync:
            _fsync_dir(d)
            _fsync_dir(d.parent)
    except OSError as exc:
        if exc.errno == errno.ENOSPC:
            raise StorageFull(f"cannot store logs for run {run.run_id}: {exc}") from exc
        raise JournalWriteFailure(f"cannot store logs for run {run.run_id}: {exc}") from exc
    return d
