"""Parsing phase: rebuild each run's effects from its raw log directory."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..dut.device import ErrorEvent
from ..errors import MalformedLogTree
from ..model import Effect, EffectSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunKey:
    benchmark: str
    selection: str
    freq_mhz: int
    voltage_mv: int

    @property
    def group(self) -> tuple[str, str, int]:
        return self.benchmark, self.selection, self.freq_mhz


@dataclass
class ParsedRun:
    run_id: int
    key: RunKey
    repeat_index: int
    campaign_index: int
    effects: EffectSet
    events: list[ErrorEvent] = field(default_factory=list)
    exit_code: int | None = None
    duration_ms: int = 0
    grid: dict = field(default_factory=dict)
    recorded_effects: EffectSet | None = None
    path: Path | None = None
    source: str = ""  # which output root the run came from, for multi-campaign merges

    @property
    def agrees(self) -> bool:
        return self.recorded_effects is None or self.recorded_effects == self.effects


def _read(path: Path) -> str | None:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        return None


def parse_run_logs(run_dir: str | Path) -> ParsedRun:
    """Classify one run purely from its artifacts.

    MISMATCH verdict with exit 0 -> SDC, ``EDAC CE`` lines -> CE, ``EDAC UE``
    lines -> UE, nonzero exit -> AC, a POWER_CYCLE in watchdog.log -> SC.
    """
    d = Path(run_dir)
    meta_text = _read(d / "meta.json")
    if meta_text is None:
        raise MalformedLogTree(f"{d}: no meta.json")
    try:
        meta = json.loads(meta_text)
        key = RunKey(str(meta["benchmark"]), str(meta["selection"]), int(meta["freq_mhz"]),
                     int(meta["voltage_mv"]))
        run_id = int(meta["run_id"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedLogTree(f"{d}: bad meta.json ({exc})") from exc

    flags: set[Effect] = set()
    wd_log = _read(d / "watchdog.log")
    if wd_log is None:
        raise MalformedLogTree(f"{d}: no watchdog.log")
    if any(line.split(" ", 1)[-1].startswith("POWER_CYCLE") for line in wd_log.splitlines()):
        flags.add(Effect.SC)

    events = []
    for n, line in enumerate((_read(d / "edac.log") or "").splitlines(), 1):
        if not line.strip():
            continue
        ev = ErrorEvent.parse(line)
        if ev is None:
            raise MalformedLogTree(f"{d}/edac.log:{n}: unrecognised line {line!r}")
        events.append(ev)
        flags.add(ev.kind)

    exit_text = _read(d / "exit_code.txt")
    verdict = _read(d / "verdict.txt")
    exit_code = None
    if exit_text is not None:
        try:
            exit_code = int(exit_text.strip())
        except ValueError as exc:
            raise MalformedLogTree(f"{d}: bad exit_code.txt") from exc
    elif Effect.SC not in flags:
        raise MalformedLogTree(f"{d}: run neither finished nor crashed (no exit_code.txt)")
    if exit_code is not None:
        if exit_code != 0:
            flags.add(Effect.AC)
        if verdict is None:
            raise MalformedLogTree(f"{d}: no verdict.txt")
        verdict = verdict.strip()
        if verdict not in ("MATCH", "MISMATCH", "SKIPPED"):
            raise MalformedLogTree(f"{d}: unknown verdict {verdict!r}")
        if verdict == "MISMATCH" and exit_code == 0:
            flags.add(Effect.SDC)

    duration = 0
    timings = _read(d / "timings.json")
    if timings:
        try:
            duration = int(json.loads(timings).get("duration_ms", 0))
        except (ValueError, AttributeError):
            pass
    recorded = meta.get("recorded_effects")
    return ParsedRun(
        run_id=run_id,
        key=key,
        repeat_index=int(meta.get("repeat_index", 0)),
        campaign_index=int(meta.get("campaign_index", 0)),
        effects=EffectSet(frozenset(flags)),
        events=events,
        exit_code=exit_code,
        duration_ms=duration,
        grid=dict(meta.get("grid") or {}),
        recorded_effects=None if recorded is None else EffectSet.from_token(recorded, ","),
        path=d,
    )


@dataclass
class ParseResult:
    runs: list[ParsedRun]
    excluded: list[tuple[Path, str]]  # malformed run dirs and why

    @property
    def disagreements(self) -> list[ParsedRun]:
        return [r for r in self.runs if not r.agrees]


def scan_log_tree(output_root: str | Path) -> ParseResult:
    """Parse every run directory under ``output_root``, sorted by run id.

    Malformed directories are excluded and reported, never silently dropped.
    """
    root = Path(output_root)
    runs, excluded = [], []
    for meta in sorted(root.rglob("meta.json")):
        try:
            run = parse_run_logs(meta.parent)
        except MalformedLogTree as exc:
            log.warning("excluding %s: %s", meta.parent, exc)
            excluded.append((meta.parent, str(exc)))
            continue
        run.source = str(root)
        runs.append(run)
    runs.sort(key=lambda r: r.run_id)
    return ParseResult(runs, excluded)
