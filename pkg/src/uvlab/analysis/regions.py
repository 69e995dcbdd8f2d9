"""Aggregation per voltage level and Safe/Unsafe/Crash region classification."""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..errors import MixedGrids, NonContiguousGrid
from ..model import EFFECTS, ChipSpec, Effect, EffectCounts, SeverityWeights, power_gain, severity
from .parse import ParsedRun, RunKey


@dataclass
class VoltageLevelAggregate:
    key: RunKey
    counts: EffectCounts
    severity: float
    event_totals: dict[str, int] = field(default_factory=dict)  # "CE:L2" -> events
    nominal_mv: int | None = None
    step_mv: int | None = None

    @property
    def n_runs(self) -> int:
        return self.counts.n_runs

    def has(self, effect: Effect) -> bool:
        return self.counts.of(effect) > 0


def aggregate(runs: Iterable[ParsedRun], weights: SeverityWeights = SeverityWeights()) -> list[VoltageLevelAggregate]:
    """Per-run occurrence counts and severity for every (benchmark, selection, freq, voltage).

    Runs from several campaigns simply add up. Sorted by group, then descending voltage.
    """
    by_key: dict[RunKey, list[ParsedRun]] = defaultdict(list)
    grids: dict[tuple, set] = defaultdict(set)
    for r in runs:
        by_key[r.key].append(r)
        grids[r.key.group].add((r.grid.get("v_step_mv"), r.grid.get("nominal_mv")))
    for group, seen in grids.items():
        if len(seen) > 1:
            raise MixedGrids(f"{'/'.join(map(str, group))}: runs come from incompatible grids {sorted(seen, key=str)}")

    out = []
    for key, rs in by_key.items():
        counts = EffectCounts.from_runs([r.effects for r in rs])
        totals: dict[str, int] = defaultdict(int)
        for r in rs:
            for ev in r.events:
                totals[f"{ev.kind.value}:{ev.location.value}"] += ev.count
        step, nominal = next(iter(grids[key.group]))
        out.append(VoltageLevelAggregate(key, counts, severity(counts, weights), dict(sorted(totals.items())),
                                         nominal_mv=nominal, step_mv=step))
    out.sort(key=lambda a: (a.key.benchmark, a.key.selection, a.key.freq_mhz, -a.key.voltage_mv))
    return out


def group_aggregates(aggs: Iterable[VoltageLevelAggregate]) -> dict[tuple, list[VoltageLevelAggregate]]:
    groups: dict[tuple, list[VoltageLevelAggregate]] = defaultdict(list)
    for a in aggs:
        groups[a.key.group].append(a)
    return dict(groups)


class Region(str, enum.Enum):
    SAFE = "SAFE"
    UNSAFE = "UNSAFE"
    CRASH = "CRASH"

    @property
    def letter(self) -> str:
        return self.value[0]


@dataclass
class RegionRow:
    benchmark: str
    selection: str
    freq_mhz: int
    voltages: tuple[int, ...]  # descending
    labels: tuple[Region, ...]
    nominal_mv: int
    step_mv: int
    safe_floor_mv: int | None
    crash_ceiling_mv: int | None
    warnings: list[str] = field(default_factory=list)

    def label_of(self, voltage_mv: int) -> Region:
        return self.labels[self.voltages.index(voltage_mv)]

    @property
    def label_string(self) -> str:
        return "".join(r.letter for r in self.labels)

    @property
    def safe_depth_mv(self) -> int:
        """How far below nominal the Safe region reaches; 0 when it is empty."""
        return 0 if self.safe_floor_mv is None else self.nominal_mv - self.safe_floor_mv

    @property
    def safe_depth_pct(self) -> float:
        return 100.0 * self.safe_depth_mv / self.nominal_mv

    @property
    def unsafe_width_mv(self) -> int:
        """Width of the band labelled UNSAFE: its level count times the grid spacing."""
        return self.step_mv * sum(lab is Region.UNSAFE for lab in self.labels)


def classify_regions(aggs: Sequence[VoltageLevelAggregate], nominal_mv: int | None = None) -> RegionRow:
    """Label each grid voltage of one (benchmark, selection, frequency) group.

    CRASH: at or below the highest voltage with any SC (dominates, even over
    later clean levels, which are reported as warnings). SAFE: the leading run
    of levels with only normal outcomes. Everything in between is UNSAFE.
    """
    if not aggs:
        raise ValueError("no aggregates to classify")
    groups = {a.key.group for a in aggs}
    if len(groups) != 1:
        raise ValueError(f"aggregates span several groups: {sorted(groups)}")
    levels = sorted(aggs, key=lambda a: -a.key.voltage_mv)
    volts = [a.key.voltage_mv for a in levels]
    if len(set(volts)) != len(volts):
        raise ValueError("duplicate voltage levels; aggregate first")
    diffs = {volts[i] - volts[i + 1] for i in range(len(volts) - 1)}
    if len(diffs) > 1:
        raise NonContiguousGrid(f"voltages {volts} are not evenly spaced")
    step = diffs.pop() if diffs else (levels[0].step_mv or 0)
    if levels[0].step_mv and step % levels[0].step_mv:
        raise NonContiguousGrid(f"spacing {step} mV is not a multiple of the {levels[0].step_mv} mV grid step")
    nominal = nominal_mv or levels[0].nominal_mv or volts[0]

    crash_ceiling = next((a.key.voltage_mv for a in levels if a.has(Effect.SC)), None)
    labels = []
    still_safe = True
    warnings = []
    for a in levels:
        v = a.key.voltage_mv
        if crash_ceiling is not None and v <= crash_ceiling:
            labels.append(Region.CRASH)
            if not a.has(Effect.SC):
                warnings.append(f"non-monotone: no system crash at {v} mV below crash ceiling {crash_ceiling} mV")
            continue
        abnormal = any(a.has(e) for e in EFFECTS)
        still_safe = still_safe and not abnormal
        labels.append(Region.SAFE if still_safe else Region.UNSAFE)
    safe = [v for v, lab in zip(volts, labels) if lab is Region.SAFE]
    k = levels[0].key
    return RegionRow(k.benchmark, k.selection, k.freq_mhz, tuple(volts), tuple(labels), nominal, step,
                     min(safe) if safe else None, crash_ceiling, warnings)


def classify_all(aggs: Iterable[VoltageLevelAggregate], nominal_mv: int | None = None) -> list[RegionRow]:
    return [classify_regions(g, nominal_mv) for _, g in sorted(group_aggregates(aggs).items())]


@dataclass(frozen=True)
class PowerGain:
    depth_pct: float
    gain_pct: float
    crash_gain_pct: float | None


def power_gain_report(row: RegionRow, spec: ChipSpec | None = None) -> PowerGain:
    """Voltage reduction and modelled power gain at the safe floor, plus the
    gain that would be available down to the crash ceiling."""
    v_nom = spec.pmd_nominal_mv if spec is not None else row.nominal_mv
    floor = v_nom if row.safe_floor_mv is None else row.safe_floor_mv
    depth = 100.0 * (v_nom - floor) / v_nom
    gain = 100.0 * power_gain(floor, v_nom)
    crash = None if row.crash_ceiling_mv is None else 100.0 * power_gain(row.crash_ceiling_mv, v_nom)
    return PowerGain(depth, gain, crash)
