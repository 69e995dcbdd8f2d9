"""Campaign configuration (JSON file) and its validation."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from ..dut.fault_model import FaultModel
from ..errors import ConfigError
from ..model import XGENE2, ChipSpec, CoreSelection, SelectionMode, SeverityWeights

_IDENT = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


def check_ident(name: str, what: str = "identifier") -> str:
    if not isinstance(name, str) or not _IDENT.match(name):
        raise ConfigError(f"{what} {name!r} must match {_IDENT.pattern}")
    return name


@dataclass(frozen=True)
class BenchmarkSpec:
    id: str
    command: str = ""
    input: str = ""
    golden_output_path: str = ""
    nominal_duration_ms: int = 1000

    def __post_init__(self):
        check_ident(self.id, "benchmark id")
        if self.nominal_duration_ms <= 0:
            raise ConfigError(f"benchmark {self.id}: nominal_duration_ms must be positive")


def _selection_from(obj, chip: ChipSpec) -> CoreSelection:
    if isinstance(obj, str):
        return CoreSelection.parse(obj, chip).validate(chip)
    try:
        mode = SelectionMode(str(obj["mode"]).upper())
    except (KeyError, ValueError, TypeError):
        raise ConfigError(f"bad core selection {obj!r}") from None
    ids = obj.get("core_ids")
    if ids is None and mode is SelectionMode.ALL_CORES:
        return CoreSelection.all_cores(chip)
    return CoreSelection(mode, tuple(int(i) for i in ids or ())).validate(chip)


def _selection_to(sel: CoreSelection) -> dict:
    return {"mode": sel.mode.value, "core_ids": list(sel.core_ids)}


@dataclass
class CampaignConfig:
    benchmarks: list[BenchmarkSpec]
    v_start_mv: int
    v_floor_mv: int
    v_step_mv: int = 5
    frequencies_mhz: list[int] = field(default_factory=lambda: [2400])
    selections: list[CoreSelection] = field(default_factory=lambda: [CoreSelection.single(0)])
    repeats: int = 1
    seed: int = 0
    output_root: Path = Path("uvlab-out")
    chip: ChipSpec = XGENE2
    fault_model: FaultModel | None = None
    weights: SeverityWeights = SeverityWeights()
    virtual_clock: bool = True
    ping_interval_ms: int = 1000
    timeout_multiplier: float = 2.0

    def __post_init__(self):
        if not self.benchmarks:
            raise ConfigError("campaign needs at least one benchmark")
        ids = [b.id for b in self.benchmarks]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate benchmark ids in {ids}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if not self.frequencies_mhz or not self.selections:
            raise ConfigError("campaign needs at least one frequency and one core selection")
        if self.ping_interval_ms <= 0 or self.timeout_multiplier <= 0:
            raise ConfigError("ping_interval_ms and timeout_multiplier must be positive")
        for sel in self.selections:
            sel.validate(self.chip)
        self.output_root = Path(self.output_root)
        if self.fault_model is None:
            self.fault_model = FaultModel(n_cores=self.chip.n_cores)

    def benchmark(self, bench_id: str) -> BenchmarkSpec:
        for b in self.benchmarks:
            if b.id == bench_id:
                return b
        raise KeyError(bench_id)

    def golden_path(self, bench: BenchmarkSpec | str) -> Path:
        if isinstance(bench, str):
            bench = self.benchmark(bench)
        p = Path(bench.golden_output_path or f"golden/{bench.id}.out")
        return p if p.is_absolute() else self.output_root / p

    @property
    def journal_path(self) -> Path:
        return self.output_root / "journal.log"

    def with_overrides(self, **kw) -> "CampaignConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    # -- JSON -------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "benchmarks": [
                {
                    "id": b.id, "command": b.command, "input": b.input,
                    "golden_output_path": b.golden_output_path,
                    "nominal_duration_ms": b.nominal_duration_ms,
                }
                for b in self.benchmarks
            ],
            "v_start_mv": self.v_start_mv,
            "v_floor_mv": self.v_floor_mv,
            "v_step_mv": self.v_step_mv,
            "frequencies_mhz": list(self.frequencies_mhz),
            "selections": [_selection_to(s) for s in self.selections],
            "repeats": self.repeats,
            "seed": self.seed,
            "output_root": str(self.output_root),
            "chip": self.chip.to_dict(),
            "fault_model": self.fault_model.to_dict(),
            "weights": self.weights.to_dict(),
            "virtual_clock": self.virtual_clock,
            "ping_interval_ms": self.ping_interval_ms,
            "timeout_multiplier": self.timeout_multiplier,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "CampaignConfig":
        base_dir = Path(base_dir or ".")
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown campaign config keys: {sorted(unknown)}")
        try:
            chip = ChipSpec.from_dict(data.pop("chip")) if "chip" in data else XGENE2
            benches = [BenchmarkSpec(**b) for b in data.pop("benchmarks", [])]
            sels = [_selection_from(s, chip) for s in data.pop("selections", ["core0"])]
            model = data.pop("fault_model", None)
            if isinstance(model, str):
                p = Path(model)
                model = FaultModel.load(p if p.is_absolute() else base_dir / p)
            elif isinstance(model, Mapping):
                model = FaultModel.from_dict({"n_cores": chip.n_cores, **model})
            weights = data.pop("weights", None)
            if isinstance(weights, str):
                weights = SeverityWeights.parse(weights)
            elif isinstance(weights, Mapping):
                weights = SeverityWeights(**{k: float(v) for k, v in weights.items()})
            else:
                weights = SeverityWeights()
            out = Path(data.pop("output_root", "uvlab-out"))
            if not out.is_absolute():
                out = base_dir / out
            return cls(benchmarks=benches, selections=sels, chip=chip, fault_model=model,
                       weights=weights, output_root=out, **data)
        except TypeError as exc:
            raise ConfigError(f"bad campaign config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "CampaignConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read campaign config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)
