"""Parsing phase: log trees to effect classes, severity, regions and reports."""
from .parse import ParsedRun, ParseResult, RunKey, parse_run_logs, scan_log_tree
from .regions import (
    PowerGain,
    Region,
    RegionRow,
    VoltageLevelAggregate,
    aggregate,
    classify_all,
    classify_regions,
    group_aggregates,
    power_gain_report,
)
from .reports import emit_parse_outputs, emit_reports, severity_darkness, severity_fill

__all__ = [
    "ParsedRun", "ParseResult", "RunKey", "parse_run_logs", "scan_log_tree",
    "PowerGain", "Region", "RegionRow", "VoltageLevelAggregate", "aggregate", "classify_all",
    "classify_regions", "group_aggregates", "power_gain_report",
    "emit_parse_outputs", "emit_reports", "severity_darkness", "severity_fill",
]
