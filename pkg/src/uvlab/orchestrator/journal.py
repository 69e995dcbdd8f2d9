"""Append-only run journal with a per-record checksum.

One record per line::

    <crc32 hex> <run_id> <status> <effects> <iso8601>

``effects`` is ``-`` for records that carry none, ``NO`` for a clean run,
otherwise a comma list such as ``SDC,CE``. The checksum covers everything
after the first space. A bad or unterminated *last* line is a torn write
from a crash and is dropped on recovery; damage anywhere else is fatal.
"""
from __future__ import annotations

import enum
import errno
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

from ..errors import CorruptJournal, JournalWriteFailure, StorageFull
from ..model import EffectSet


class Status(str, enum.Enum):
    PLANNED = "PLANNED"
    STARTED = "STARTED"
    COMPLETED = "COMPLETED"
    INTERRUPTED = "INTERRUPTED"


@dataclass(frozen=True)
class JournalRecord:
    run_id: int
    status: Status
    effects: EffectSet | None
    timestamp: str

    def body(self) -> str:
        eff = "-" if self.effects is None else self.effects.to_token(",")
        return f"{self.run_id} {self.status.value} {eff} {self.timestamp}"

    def line(self) -> str:
        body = self.body()
        return f"{zlib.crc32(body.encode()):08x} {body}\n"

    @classmethod
    def parse(cls, line: str) -> "JournalRecord":
        crc, sep, body = line.rstrip("\n").partition(" ")
        if not sep or f"{zlib.crc32(body.encode()):08x}" != crc:
            raise ValueError("checksum mismatch")
        run_id, status, eff, ts = body.split(" ")
        effects = None if eff == "-" else EffectSet.from_token(eff, ",")
        return cls(int(run_id), Status(status), effects, ts)


class Journal:
    def __init__(self, path: str | Path, clock=None, *, fsync: bool = True):
        self.path = Path(path)
        self.clock = clock
        self.fsync = fsync

    def _timestamp(self) -> str:
        return self.clock.timestamp() if self.clock is not None else "1970-01-01T00:00:00Z"

    def append(self, run_id: int, status: Status, effects: EffectSet | None = None) -> JournalRecord:
        rec = JournalRecord(run_id, Status(status), effects, self._timestamp())
        self._write([rec])
        return rec

    def append_many(self, run_ids, status: Status) -> None:
        ts = self._timestamp()
        recs = [JournalRecord(rid, Status(status), None, ts) for rid in run_ids]
        if recs:
            self._write(recs)

    def _write(self, recs: list[JournalRecord]) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="ascii") as fh:
                fh.write("".join(r.line() for r in recs))
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(f"journal {self.path}: {exc}") from exc
            raise JournalWriteFailure(f"journal {self.path}: {exc}") from exc

    def _split(self) -> tuple[list[JournalRecord], int | None]:
        """Parsed records plus the byte offset of a torn tail, if any."""
        if not self.path.exists():
            return [], None
        raw = self.path.read_bytes()
        records = []
        offset = 0
        lines = raw.split(b"\n")
        for i, chunk in enumerate(lines):
            last = i == len(lines) - 1
            if last and chunk == b"":
                break
            try:
                if last:  # no trailing newline: write never finished
                    raise ValueError("unterminated record")
                records.append(JournalRecord.parse(chunk.decode("ascii")))
            except (ValueError, UnicodeDecodeError) as exc:
                tail_is_torn = last or (i == len(lines) - 2 and lines[-1] == b"")
                if tail_is_torn:
                    return records, offset
                raise CorruptJournal(f"{self.path}: record {i + 1} unreadable ({exc})") from exc
            offset += len(chunk) + 1
        return records, None

    def records(self) -> list[JournalRecord]:
        return self._split()[0]

    def recover(self) -> list[JournalRecord]:
        """Drop a torn tail left by a crash mid-append and return the valid records."""
        records, torn_at = self._split()
        if torn_at is not None:
            try:
                with open(self.path, "r+b") as fh:
                    fh.truncate(torn_at)
                    fh.flush()
                    if self.fsync:
                        os.fsync(fh.fileno())
            except OSError as exc:
                raise JournalWriteFailure(f"cannot truncate torn journal tail: {exc}") from exc
        self.check(records)
        return records

    @staticmethod
    def check(records: list[JournalRecord]) -> None:
        started: set[int] = set()
        completed: set[int] = set()
        for rec in records:
            if rec.status is Status.STARTED:
                if rec.run_id in completed:
                    raise CorruptJournal(f"run {rec.run_id} STARTED after COMPLETED")
                started.add(rec.run_id)
            elif rec.status is Status.COMPLETED:
                if rec.run_id not in started:
                    raise CorruptJournal(f"run {rec.run_id} COMPLETED without STARTED")
                if rec.run_id in completed:
                    raise CorruptJournal(f"run {rec.run_id} COMPLETED twice")
                if rec.effects is None:
                    raise CorruptJournal(f"run {rec.run_id} COMPLETED without effects")
                completed.add(rec.run_id)

    @staticmethod
    def summarize(records: list[JournalRecord]) -> tuple[dict[int, EffectSet], list[int]]:
        """(completed run -> effects, runs STARTED but never COMPLETED)."""
        completed: dict[int, EffectSet] = {}
        open_runs: list[int] = []
        for rec in records:
            if rec.status is Status.STARTED and rec.run_id not in open_runs:
                open_runs.append(rec.run_id)
            elif rec.status is Status.COMPLETED:
                completed[rec.run_id] = rec.effects
                if rec.run_id in open_runs:
                    open_runs.remove(rec.run_id)
        return completed, open_runs
