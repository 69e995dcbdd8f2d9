"""Schedule planning and the reliable-cores frequency plan."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import GridError, InvalidGrid, MissingGolden
from ..model import ChipSpec, CoreSelection, SelectionMode, VFPoint, enumerate_vf_grid
from .config import CampaignConfig


@dataclass(frozen=True)
class RunDescriptor:
    run_id: int
    benchmark_id: str
    selection: CoreSelection
    vf: VFPoint
    campaign_index: int
    repeat_index: int

    @property
    def rel_dir(self) -> str:
        return (f"{self.benchmark_id}/{self.selection.label}/{self.vf.freq_mhz}mhz/"
                f"{self.vf.voltage_mv}mv/rep{self.repeat_index}")


@dataclass(frozen=True)
class FrequencyPlan:
    pmd_freqs: tuple[int, ...]
    # cores that host nothing but the benchmark while it runs
    migrate_cores: frozenset[int]
    # cores free for the harness's own processes; empty for ALL_CORES
    housekeeping_cores: frozenset[int]

    @property
    def deferred_bookkeeping(self) -> bool:
        """True when no core is left for the harness, so its work waits until nominal voltage."""
        return not self.housekeeping_cores


def reliable_cores_setup(selection: CoreSelection, freq_mhz: int, spec: ChipSpec) -> FrequencyPlan:
    selection.validate(spec)
    active = set(selection.pmds(spec))
    freqs = tuple(freq_mhz if p in active else spec.freq_min_mhz for p in range(spec.pmd_count))
    chosen = frozenset(selection.core_ids)
    rest = frozenset(range(spec.n_cores)) - chosen
    if selection.mode is SelectionMode.ALL_CORES:
        rest = frozenset()
    return FrequencyPlan(freqs, chosen, rest)


def plan_campaign(config: CampaignConfig, spec: ChipSpec | None = None, *,
                  require_golden: bool = True) -> list[RunDescriptor]:
    """Full ordered schedule: campaign, then descending voltage, then repeat.

    A campaign is one (benchmark, selection, frequency) combination. Run ids
    are 1-based ordinals, so the schedule is resumable by position.
    """
    spec = spec or config.chip
    try:
        grids = {
            f: enumerate_vf_grid(spec, config.v_start_mv, config.v_floor_mv, f, config.v_step_mv)
            for f in config.frequencies_mhz
        }
    except GridError as exc:
        raise InvalidGrid(str(exc)) from exc
    if require_golden:
        missing = [b.id for b in config.benchmarks if not config.golden_path(b).is_file()]
        if missing:
            raise MissingGolden(f"no golden output for {missing}; run the nominal pre-pass (init) first")
    runs = []
    run_id = 1
    campaign = 0
    for bench in config.benchmarks:
        for sel in config.selections:
            for f in config.frequencies_mhz:
                for vf in grids[f]:
                    for rep in range(config.repeats):
                        runs.append(RunDescriptor(run_id, bench.id, sel, vf, campaign, rep))
                        run_id += 1
                campaign += 1
    return runs
