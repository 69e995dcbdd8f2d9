"""Command-line entry point: ``uvlab <command> ...``.

Exit codes: 0 ok, 1 other harness error, 2 usage, 3 config, 4 device, 5 storage.
Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import aggregate, classify_all, emit_reports, scan_log_tree
from .analysis.reports import emit_parse_outputs
from .dut.fault_model import FaultModel, expected_severity, sample_severities
from .errors import ConfigError, DeviceError, StorageError, UvlabError
from .model import CharacterizationSetup, CoreSelection, SeverityWeights, VFPoint, XGENE2, enumerate_vf_grid
from .orchestrator import CampaignConfig, CampaignRunner

log = logging.getLogger("uvlab")

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_CONFIG, EXIT_DEVICE, EXIT_STORAGE = 0, 1, 2, 3, 4, 5
OUTPUT_ENV = "UVLAB_OUTPUT_ROOT"
RESOLVED_CONFIG = "campaign.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, DeviceError):
        return EXIT_DEVICE
    if isinstance(exc, StorageError):
        return EXIT_STORAGE
    return EXIT_OTHER


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, help="override the campaign / sampling seed")
    p.add_argument("--weights", help="severity weights, e.g. sdc=4,ce=1,ue=2,ac=8,sc=16")
    p.add_argument("--virtual-clock", action=argparse.BooleanOptionalAction, default=None,
                   help="simulate time instead of sleeping (default from config)")
    p.add_argument("--output", help=f"output root for init/run/resume (else the config's, else ${OUTPUT_ENV}); "
                                    "report directory for parse/report (default <root>/reports)")
    p.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="uvlab", description="Undervolting characterization harness.")
    parser.add_argument("--version", action="version", version=f"uvlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", parents=[common], help="produce golden outputs at nominal conditions")
    p.add_argument("config")
    p = sub.add_parser("run", parents=[common], help="run a campaign end to end")
    p.add_argument("config")
    p.add_argument("--with-report", action="store_true", help="parse and report once the campaign finishes")
    p.add_argument("--limit", type=int, help="execute at most this many runs (the rest stay pending)")
    p = sub.add_parser("resume", parents=[common], help="continue an interrupted campaign from its journal")
    p.add_argument("config")
    p.add_argument("--with-report", action="store_true")
    p.add_argument("--limit", type=int)
    p = sub.add_parser("parse", parents=[common], help="re-derive effects from a log tree; writes runs/severity CSVs")
    p.add_argument("output_root", nargs="+")
    p = sub.add_parser("report", parents=[common], help="write CSV reports, region charts and heatmaps")
    p.add_argument("output_root", nargs="+")
    p = sub.add_parser("simulate-check", parents=[common],
                       help="compare analytic and sampled severity over a voltage sweep")
    p.add_argument("model_config", help="fault model JSON file, or 'default'")
    p.add_argument("--bench", default="bench")
    p.add_argument("--selection", default="core0")
    p.add_argument("--freq", type=int, default=2400)
    p.add_argument("--v-start", type=int, default=910)
    p.add_argument("--v-floor", type=int, default=865)
    p.add_argument("--step", type=int, default=5)
    p.add_argument("--runs", type=int, default=100_000)
    return parser


# -- helpers ----------------------------------------------------------------------

def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _weights(args, fallback: SeverityWeights | None = None) -> SeverityWeights:
    if args.weights:
        return SeverityWeights.parse(args.weights)
    return fallback or SeverityWeights()


def _load_config(args, env) -> CampaignConfig:
    cfg = CampaignConfig.load(args.config)
    out = args.output or (env.get(OUTPUT_ENV) if "output_root" not in _raw_keys(args.config) else None)
    return cfg.with_overrides(
        seed=args.seed,
        weights=SeverityWeights.parse(args.weights) if args.weights else None,
        virtual_clock=args.virtual_clock,
        output_root=Path(out) if out else None,
    )


def _raw_keys(path) -> set:
    try:
        return set(json.loads(Path(path).read_text()))
    except (OSError, ValueError):
        return set()


def _save_resolved(cfg: CampaignConfig) -> None:
    try:
        cfg.output_root.mkdir(parents=True, exist_ok=True)
        (cfg.output_root / RESOLVED_CONFIG).write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {cfg.output_root / RESOLVED_CONFIG}: {exc}") from exc


def _stored_weights(root: Path) -> SeverityWeights | None:
    p = root / RESOLVED_CONFIG
    if not p.is_file():
        return None
    try:
        return SeverityWeights(**json.loads(p.read_text())["weights"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{p}: unreadable weights ({exc})") from exc


def _parse_roots(roots: Sequence[str]):
    runs, excluded = [], []
    for root in roots:
        if not Path(root).is_dir():
            raise ConfigError(f"output root {root} does not exist")
        res = scan_log_tree(root)
        runs.extend(res.runs)
        excluded.extend(res.excluded)
    return runs, excluded


def _report_dir(args, roots) -> Path:
    return Path(args.output) if args.output else Path(roots[0]) / "reports"


# -- commands -----------------------------------------------------------------------

def cmd_init(args, env) -> int:
    cfg = _load_config(args, env)
    if args.print_config:
        _emit(cfg.to_dict())
        return EXIT_OK
    _save_resolved(cfg)
    runner = CampaignRunner(cfg)
    runner.initialize()
    _emit({"golden": {b.id: str(cfg.golden_path(b)) for b in cfg.benchmarks}})
    return EXIT_OK


def _execute(args, env, *, resume: bool) -> int:
    cfg = _load_config(args, env)
    if args.print_config:
        _emit(cfg.to_dict())
        return EXIT_OK
    if resume and not cfg.journal_path.is_file():
        raise ConfigError(f"nothing to resume: no journal at {cfg.journal_path}")
    _save_resolved(cfg)
    runner = CampaignRunner(cfg)
    records = runner.run(limit=args.limit)
    remaining = len(runner.pending())
    summary = {
        "output_root": str(cfg.output_root),
        "executed": len(records),
        "system_crashes": sum(r.power_cycled for r in records),
        "remaining": remaining,
    }
    if args.with_report:
        summary["reports"] = [str(p) for p in _report(cfg.output_root / "reports", [cfg.output_root], cfg.weights)]
    _emit(summary)
    return EXIT_OK


def _report(out_dir: Path, roots, weights: SeverityWeights) -> list[Path]:
    runs, excluded = _parse_roots(roots)
    for path, why in excluded:
        log.warning("excluded %s: %s", path, why)
    aggs = aggregate(runs, weights)
    rows = classify_all(aggs)
    for row in rows:
        for w in row.warnings:
            log.warning("%s/%s/%d: %s", row.benchmark, row.selection, row.freq_mhz, w)
    return emit_reports(rows, aggs, out_dir, runs=runs, weights=weights)


def cmd_parse(args, env) -> int:
    weights = _weights(args, _stored_weights(Path(args.output_root[0])))
    if args.print_config:
        _emit({"output_roots": args.output_root, "weights": weights.to_dict()})
        return EXIT_OK
    runs, excluded = _parse_roots(args.output_root)
    aggs = aggregate(runs, weights)
    written = emit_parse_outputs(runs, aggs, _report_dir(args, args.output_root))
    disagree = [r.run_id for r in runs if not r.agrees]
    _emit({
        "runs": len(runs),
        "levels": len(aggs),
        "excluded": [{"path": str(p), "reason": why} for p, why in excluded],
        "disagreements": disagree,
        "written": [str(p) for p in written],
    })
    return EXIT_OK


def cmd_report(args, env) -> int:
    weights = _weights(args, _stored_weights(Path(args.output_root[0])))
    out = _report_dir(args, args.output_root)
    if args.print_config:
        _emit({"output_roots": args.output_root, "report_dir": str(out), "weights": weights.to_dict()})
        return EXIT_OK
    _emit({"written": [str(p) for p in _report(out, args.output_root, weights)]})
    return EXIT_OK


def cmd_simulate_check(args, env) -> int:
    model = FaultModel() if args.model_config == "default" else FaultModel.load(args.model_config)
    weights = _weights(args)
    seed = 0 if args.seed is None else args.seed
    sel = CoreSelection.parse(args.selection, XGENE2).validate(XGENE2)
    volts = [p.voltage_mv for p in enumerate_vf_grid(XGENE2, args.v_start, args.v_floor, args.freq, args.step)]
    if args.print_config:
        _emit({"model": model.to_dict(), "weights": weights.to_dict(), "seed": seed, "selection": sel.label,
               "freq_mhz": args.freq, "voltages_mv": volts, "runs": args.runs})
        return EXIT_OK
    if args.runs < 2:
        raise ConfigError("--runs must be at least 2")
    rows = []
    for i, v in enumerate(volts):
        setup = CharacterizationSetup(args.bench, sel, VFPoint(v, args.freq))
        analytic = expected_severity(model, setup, weights)
        s = sample_severities(model, setup, weights, args.runs, seed=seed, campaign=i)
        mean = float(s.mean())
        se = float(s.std(ddof=1) / np.sqrt(len(s)))
        z = 0.0 if se == 0 else (mean - analytic) / se
        rows.append({"voltage_mv": v, "analytic": analytic, "sampled": mean, "stderr": se, "z": z})
    sys.stdout.write(f"{'mV':>5} {'analytic':>10} {'sampled':>10} {'stderr':>9} {'z':>6}\n")
    for r in rows:
        sys.stdout.write(f"{r['voltage_mv']:>5} {r['analytic']:>10.5f} {r['sampled']:>10.5f} "
                         f"{r['stderr']:>9.5f} {r['z']:>6.2f}\n")
    return EXIT_OK


COMMANDS = {
    "init": cmd_init,
    "run": lambda a, e: _execute(a, e, resume=False),
    "resume": lambda a, e: _execute(a, e, resume=True),
    "parse": cmd_parse,
    "report": cmd_report,
    "simulate-check": cmd_simulate_check,
}


def main(argv: Sequence[str] | None = None, env=None) -> int:
    env = os.environ if env is None else env
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, env)
    except (UsageError, UvlabError) as exc:
        code = exit_code_for(exc)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
