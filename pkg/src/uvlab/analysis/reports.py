"""CSV reports, region charts and severity heatmaps.

All files are UTF-8 with LF line endings. Floats in severity.csv are written
with ``repr`` so they read back to exactly the computed value.
"""
from __future__ import annotations

import csv
import io
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from ..errors import IoFailure
from ..model import ChipSpec, Effect, SeverityWeights
from .parse import ParsedRun
from .regions import Region, RegionRow, VoltageLevelAggregate, power_gain_report

RUNS_HEADER = ["run_id", "bench", "selection", "freq_mhz", "voltage_mv", "campaign", "repeat",
               "effects", "exit_code", "duration_ms", "ce_events", "ue_events"]
SEVERITY_HEADER = ["bench", "selection", "freq_mhz", "voltage_mv", "N", "SDC", "CE", "UE", "AC", "SC", "severity"]
REGIONS_HEADER = ["bench", "selection", "freq_mhz", "nominal_mv", "safe_floor_mv", "crash_ceiling_mv",
                  "safe_depth_mv", "safe_depth_pct", "unsafe_width_mv", "gain_pct", "crash_gain_pct",
                  "regions", "warnings"]

REGION_FILL = {Region.SAFE: "#4caf50", Region.UNSAFE: "#ffd54f", Region.CRASH: "#9e9e9e"}
_LIGHT = (255, 255, 255)
_DARK = (103, 0, 13)

CELL_W, CELL_H = 34, 22
LEFT, TOP = 150, 40


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def runs_csv(runs: Iterable[ParsedRun]) -> str:
    rows = []
    for r in sorted(runs, key=lambda r: (r.source, r.run_id)):
        ce = sum(e.count for e in r.events if e.kind is Effect.CE)
        ue = sum(e.count for e in r.events if e.kind is Effect.UE)
        rows.append([r.run_id, r.key.benchmark, r.key.selection, r.key.freq_mhz, r.key.voltage_mv,
                     r.campaign_index, r.repeat_index, r.effects.to_token(" "),
                     "" if r.exit_code is None else r.exit_code, r.duration_ms, ce, ue])
    return _csv_text(RUNS_HEADER, rows)


def severity_csv(aggs: Iterable[VoltageLevelAggregate]) -> str:
    rows = []
    for a in aggs:
        c = a.counts
        rows.append([a.key.benchmark, a.key.selection, a.key.freq_mhz, a.key.voltage_mv, c.n_runs,
                     c.sdc, c.ce, c.ue, c.ac, c.sc, repr(float(a.severity))])
    return _csv_text(SEVERITY_HEADER, rows)


def _pct(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


def regions_csv(rows: Iterable[RegionRow], spec: ChipSpec | None = None) -> str:
    out = []
    for row in rows:
        g = power_gain_report(row, spec)
        out.append([row.benchmark, row.selection, row.freq_mhz, row.nominal_mv,
                    "" if row.safe_floor_mv is None else row.safe_floor_mv,
                    "" if row.crash_ceiling_mv is None else row.crash_ceiling_mv,
                    row.safe_depth_mv, _pct(row.safe_depth_pct), row.unsafe_width_mv,
                    _pct(g.gain_pct), _pct(g.crash_gain_pct),
                    " ".join(f"{v}:{lab.letter}" for v, lab in zip(row.voltages, row.labels)),
                    len(row.warnings)])
    return _csv_text(REGIONS_HEADER, out)


def max_severity(weights: SeverityWeights) -> float:
    """Largest possible S_v: every run shows every effect."""
    return sum(weights.vector())


def severity_darkness(s: float, s_max: float) -> float:
    """0 for a clean level, 1 for the worst possible one; non-decreasing in ``s``."""
    if s_max <= 0:
        return 0.0
    return min(1.0, max(0.0, s / s_max)) ** 0.5


def severity_fill(s: float, s_max: float) -> str:
    t = severity_darkness(s, s_max)
    rgb = (round(lo + (hi - lo) * t) for lo, hi in zip(_LIGHT, _DARK))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


@dataclass
class _Grid:
    rows: list[tuple[str, int]]  # (selection, freq)
    voltages: list[int]  # descending


def _grid(keys: Iterable[tuple[str, int, int]]) -> _Grid:
    rows, volts = set(), set()
    for sel, freq, v in keys:
        rows.add((sel, freq))
        volts.add(v)
    return _Grid(sorted(rows, key=lambda r: (-r[1], r[0])), sorted(volts, reverse=True))


def _svg(title: str, grid: _Grid, cells: list[str], legend: list[str]) -> str:
    width = LEFT + CELL_W * len(grid.voltages) + 20
    height = TOP + CELL_H * len(grid.rows) + 90
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f"<title>{escape(title)}</title>",
        f'<text x="{LEFT}" y="16" font-size="13">{escape(title)}</text>',
    ]
    for j, v in enumerate(grid.voltages):
        x = LEFT + j * CELL_W + CELL_W // 2
        head.append(f'<text x="{x}" y="{TOP - 6}" text-anchor="middle">{v}</text>')
    for i, (sel, freq) in enumerate(grid.rows):
        y = TOP + i * CELL_H + CELL_H // 2 + 4
        head.append(f'<text x="{LEFT - 6}" y="{y}" text-anchor="end">{escape(sel)} @ {freq} MHz</text>')
    foot_y = TOP + CELL_H * len(grid.rows) + 14
    foot = [f'<text x="{LEFT}" y="{foot_y}">voltage (mV)</text>', f'<g class="legend" transform="translate({LEFT},{foot_y + 10})">']
    return "\n".join(head + cells + foot + legend + ["</g>", "</svg>", ""])


def region_chart(bench: str, rows: Sequence[RegionRow]) -> str:
    grid = _grid((r.selection, r.freq_mhz, v) for r in rows for v in r.voltages)
    cells = []
    for row in rows:
        i = grid.rows.index((row.selection, row.freq_mhz))
        for v, lab in zip(row.voltages, row.labels):
            j = grid.voltages.index(v)
            cells.append(
                f'<rect x="{LEFT + j * CELL_W}" y="{TOP + i * CELL_H}" width="{CELL_W - 1}" height="{CELL_H - 1}" '
                f'fill="{REGION_FILL[lab]}" data-selection="{escape(row.selection)}" data-freq="{row.freq_mhz}" '
                f'data-voltage="{v}" data-region="{lab.value}"/>'
            )
    legend = []
    for k, reg in enumerate(Region):
        legend.append(f'<rect x="{k * 90}" y="0" width="14" height="14" fill="{REGION_FILL[reg]}"/>'
                      f'<text x="{k * 90 + 18}" y="11">{reg.value}</text>')
    return _svg(f"{bench}: operating regions", grid, cells, legend)


def severity_heatmap(bench: str, aggs: Sequence[VoltageLevelAggregate], weights: SeverityWeights) -> str:
    s_max = max_severity(weights)
    grid = _grid((a.key.selection, a.key.freq_mhz, a.key.voltage_mv) for a in aggs)
    cells = []
    for a in aggs:
        i = grid.rows.index((a.key.selection, a.key.freq_mhz))
        j = grid.voltages.index(a.key.voltage_mv)
        cells.append(
            f'<rect x="{LEFT + j * CELL_W}" y="{TOP + i * CELL_H}" width="{CELL_W - 1}" height="{CELL_H - 1}" '
            f'fill="{severity_fill(a.severity, s_max)}" data-selection="{escape(a.key.selection)}" '
            f'data-freq="{a.key.freq_mhz}" data-voltage="{a.key.voltage_mv}" '
            f'data-severity="{a.severity!r}" data-darkness="{severity_darkness(a.severity, s_max)!r}"/>'
        )
    legend = []
    for k in range(6):
        s = s_max * (k / 5) ** 2
        legend.append(f'<rect x="{k * 60}" y="0" width="14" height="14" fill="{severity_fill(s, s_max)}" stroke="#ccc"/>'
                      f'<text x="{k * 60 + 18}" y="11">{s:.2f}</text>')
    legend.append(f'<text x="0" y="30">severity (darker is less reliable, max {s_max:g})</text>')
    return _svg(f"{bench}: severity", grid, cells, legend)


def _write(path: Path, text: str):
    try:
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _mkdir(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc


def emit_parse_outputs(runs: Sequence[ParsedRun], aggs: Sequence[VoltageLevelAggregate],
                       out_dir: str | Path) -> list[Path]:
    """The parsing-only subset: runs.csv and severity.csv."""
    out = Path(out_dir)
    _mkdir(out)
    _write(out / "runs.csv", runs_csv(runs))
    _write(out / "severity.csv", severity_csv(aggs))
    return [out / "runs.csv", out / "severity.csv"]


def emit_reports(rows: Sequence[RegionRow], aggs: Sequence[VoltageLevelAggregate], out_dir: str | Path, *,
                 runs: Sequence[ParsedRun] = (), weights: SeverityWeights = SeverityWeights(),
                 spec: ChipSpec | None = None) -> list[Path]:
    """Write runs.csv, severity.csv, regions.csv and two SVGs per benchmark; returns the paths."""
    out = Path(out_dir)
    written = emit_parse_outputs(runs, aggs, out)
    _write(out / "regions.csv", regions_csv(rows, spec))
    written.append(out / "regions.csv")

    rows_by_bench: dict[str, list[RegionRow]] = defaultdict(list)
    aggs_by_bench: dict[str, list[VoltageLevelAggregate]] = defaultdict(list)
    for r in rows:
        rows_by_bench[r.benchmark].append(r)
    for a in aggs:
        aggs_by_bench[a.key.benchmark].append(a)
    for bench in sorted(set(rows_by_bench) | set(aggs_by_bench)):
        if rows_by_bench[bench]:
            p = out / f"{bench}-regions.svg"
            _write(p, region_chart(bench, rows_by_bench[bench]))
            written.append(p)
        if aggs_by_bench[bench]:
            p = out / f"{bench}-severity.svg"
            _write(p, severity_heatmap(bench, aggs_by_bench[bench], weights))
            written.append(p)
    return written
