"""Chip, V/F grid and effect types plus the severity and power-gain math.

Voltages are integer millivolts and frequencies integer megahertz throughout,
so every grid check is exact integer arithmetic.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import (
    AboveNominal,
    EmptyGrid,
    InvalidSelection,
    NonPositiveVoltage,
    OffGridFrequency,
    OffGridVoltage,
    UnscalableDomain,
    VoltageAboveNominal,
    ConfigError,
)


class DomainKind(str, enum.Enum):
    PMD_DOMAIN = "PMD_DOMAIN"
    SOC_DOMAIN = "SOC_DOMAIN"
    STANDBY = "STANDBY"


@dataclass(frozen=True)
class PowerDomain:
    kind: DomainKind
    vdd_nominal_mv: int
    scalable: bool = True

    def __post_init__(self):
        if self.scalable and self.vdd_nominal_mv <= 0:
            raise ConfigError(f"scalable domain {self.kind.value} needs a positive nominal voltage")


@dataclass(frozen=True)
class ChipSpec:
    pmd_count: int = 4
    cores_per_pmd: int = 2
    voltage_step_mv: int = 5
    freq_min_mhz: int = 300
    freq_max_mhz: int = 2400
    freq_step_mhz: int = 300
    domains: tuple[PowerDomain, ...] = (
        PowerDomain(DomainKind.PMD_DOMAIN, 980),
        PowerDomain(DomainKind.SOC_DOMAIN, 950),
        PowerDomain(DomainKind.STANDBY, 0, scalable=False),
    )

    def __post_init__(self):
        if self.pmd_count < 1 or self.cores_per_pmd < 1:
            raise ConfigError("chip needs at least one PMD with at least one core")
        if self.voltage_step_mv <= 0:
            raise ConfigError("voltage_step_mv must be positive")
        if self.freq_step_mhz <= 0 or self.freq_min_mhz <= 0:
            raise ConfigError("frequency grid must be positive")
        span = self.freq_max_mhz - self.freq_min_mhz
        if span < 0 or span % self.freq_step_mhz:
            raise ConfigError("freq_max_mhz must equal freq_min_mhz + k*freq_step_mhz")
        kinds = sorted(d.kind.value for d in self.domains)
        if kinds != sorted(k.value for k in DomainKind):
            raise ConfigError("chip needs exactly one domain of each kind")

    @property
    def n_cores(self) -> int:
        return self.pmd_count * self.cores_per_pmd

    def domain(self, kind: DomainKind | str) -> PowerDomain:
        kind = DomainKind(kind)
        for d in self.domains:
            if d.kind is kind:
                return d
        raise KeyError(kind)

    @property
    def pmd_nominal_mv(self) -> int:
        return self.domain(DomainKind.PMD_DOMAIN).vdd_nominal_mv

    def pmd_of(self, core_id: int) -> int:
        return core_id // self.cores_per_pmd

    def frequencies(self) -> list[int]:
        return list(range(self.freq_min_mhz, self.freq_max_mhz + 1, self.freq_step_mhz))

    def to_dict(self) -> dict:
        return {
            "pmd_count": self.pmd_count,
            "cores_per_pmd": self.cores_per_pmd,
            "voltage_step_mv": self.voltage_step_mv,
            "freq_min_mhz": self.freq_min_mhz,
            "freq_max_mhz": self.freq_max_mhz,
            "freq_step_mhz": self.freq_step_mhz,
            "domains": [
                {"kind": d.kind.value, "vdd_nominal_mv": d.vdd_nominal_mv, "scalable": d.scalable}
                for d in self.domains
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ChipSpec":
        data = dict(data)
        if "domains" in data:
            data["domains"] = tuple(
                PowerDomain(DomainKind(d["kind"]), int(d["vdd_nominal_mv"]), bool(d.get("scalable", True)))
                for d in data["domains"]
            )
        return cls(**data)


XGENE2 = ChipSpec()


@dataclass(frozen=True, order=True)
class VFPoint:
    voltage_mv: int
    freq_mhz: int


class SelectionMode(str, enum.Enum):
    SINGLE_CORE = "SINGLE_CORE"
    PMD_PAIR = "PMD_PAIR"
    ALL_CORES = "ALL_CORES"


@dataclass(frozen=True)
class CoreSelection:
    mode: SelectionMode
    core_ids: tuple[int, ...]

    @classmethod
    def single(cls, core: int) -> "CoreSelection":
        return cls(SelectionMode.SINGLE_CORE, (core,))

    @classmethod
    def pmd_pair(cls, pmd: int, spec: ChipSpec = XGENE2) -> "CoreSelection":
        base = pmd * spec.cores_per_pmd
        return cls(SelectionMode.PMD_PAIR, tuple(range(base, base + spec.cores_per_pmd)))

    @classmethod
    def all_cores(cls, spec: ChipSpec = XGENE2) -> "CoreSelection":
        return cls(SelectionMode.ALL_CORES, tuple(range(spec.n_cores)))

    @classmethod
    def parse(cls, text: str, spec: ChipSpec = XGENE2) -> "CoreSelection":
        """Parse the short labels ``core3``, ``pmd1`` and ``all``."""
        text = text.strip().lower()
        if text == "all":
            return cls.all_cores(spec)
        if text.startswith("core") and text[4:].isdigit():
            return cls.single(int(text[4:]))
        if text.startswith("pmd") and text[3:].isdigit():
            return cls.pmd_pair(int(text[3:]), spec)
        raise InvalidSelection(f"unknown selection label {text!r}")

    @property
    def label(self) -> str:
        if self.mode is SelectionMode.SINGLE_CORE:
            return f"core{self.core_ids[0]}"
        if self.mode is SelectionMode.PMD_PAIR:
            return f"pmd{min(self.core_ids) // max(len(self.core_ids), 1)}"
        return "all"

    def validate(self, spec: ChipSpec) -> "CoreSelection":
        ids = self.core_ids
        if len(set(ids)) != len(ids):
            raise InvalidSelection(f"duplicate core ids in {ids}")
        if any(c < 0 or c >= spec.n_cores for c in ids):
            raise InvalidSelection(f"core ids {ids} out of range for {spec.n_cores} cores")
        if self.mode is SelectionMode.SINGLE_CORE and len(ids) != 1:
            raise InvalidSelection("SINGLE_CORE takes exactly one core")
        if self.mode is SelectionMode.PMD_PAIR:
            pmds = {spec.pmd_of(c) for c in ids}
            if len(ids) != spec.cores_per_pmd or len(pmds) != 1:
                raise InvalidSelection(f"PMD_PAIR must name all cores of one PMD, got {ids}")
        if self.mode is SelectionMode.ALL_CORES and sorted(ids) != list(range(spec.n_cores)):
            raise InvalidSelection("ALL_CORES must list every core")
        return self

    def pmds(self, spec: ChipSpec) -> list[int]:
        return sorted({spec.pmd_of(c) for c in self.core_ids})


class Effect(str, enum.Enum):
    SDC = "SDC"
    CE = "CE"
    UE = "UE"
    AC = "AC"
    SC = "SC"


# canonical order, also the column order of every report
EFFECTS: tuple[Effect, ...] = (Effect.SDC, Effect.CE, Effect.UE, Effect.AC, Effect.SC)


@dataclass(frozen=True)
class EffectSet:
    """Effects one run manifested. An empty set is normal operation (NO)."""

    flags: frozenset[Effect] = frozenset()

    @classmethod
    def of(cls, *effects: Effect | str) -> "EffectSet":
        return cls(frozenset(Effect(e) for e in effects))

    @property
    def is_normal(self) -> bool:
        return not self.flags

    def __contains__(self, effect) -> bool:
        return Effect(effect) in self.flags

    def ordered(self) -> list[Effect]:
        return [e for e in EFFECTS if e in self.flags]

    def to_token(self, sep: str = ",") -> str:
        return sep.join(e.value for e in self.ordered()) or "NO"

    @classmethod
    def from_token(cls, token: str, sep: str = ",") -> "EffectSet":
        token = token.strip()
        if token in ("", "NO", "-"):
            return cls()
        return cls.of(*token.split(sep))

    def __str__(self) -> str:
        return "{" + self.to_token() + "}"


@dataclass(frozen=True)
class SeverityWeights:
    sdc: float = 4.0
    ce: float = 1.0
    ue: float = 2.0
    ac: float = 8.0
    sc: float = 16.0
    no: float = 0.0

    def __post_init__(self):
        import math

        for name in ("sdc", "ce", "ue", "ac", "sc", "no"):
            w = getattr(self, name)
            if not math.isfinite(w) or w < 0:
                raise ConfigError(f"weight {name}={w} must be finite and non-negative")

    def of(self, effect: Effect) -> float:
        return getattr(self, Effect(effect).value.lower())

    def vector(self) -> list[float]:
        return [self.of(e) for e in EFFECTS]

    @classmethod
    def parse(cls, text: str) -> "SeverityWeights":
        """Parse ``sdc=4,ce=1,ue=2,ac=8,sc=16``; omitted keys keep defaults."""
        values = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, val = part.partition("=")
            key = key.strip().lower()
            if key not in ("sdc", "ce", "ue", "ac", "sc", "no") or not val:
                raise ConfigError(f"bad weight spec {part!r}")
            values[key] = float(val)
        return cls(**values)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("sdc", "ce", "ue", "ac", "sc", "no")}


@dataclass(frozen=True)
class EffectCounts:
    """Per-run occurrence counts at one voltage level; each count is in [0, n_runs]."""

    n_runs: int
    sdc: int = 0
    ce: int = 0
    ue: int = 0
    ac: int = 0
    sc: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        for e in EFFECTS:
            c = self.of(e)
            if not 0 <= c <= self.n_runs:
                raise ValueError(f"count {e.value}={c} outside [0, {self.n_runs}]")

    def of(self, effect: Effect) -> int:
        return getattr(self, Effect(effect).value.lower())

    @classmethod
    def from_runs(cls, runs: Sequence[EffectSet]) -> "EffectCounts":
        counts = {e.value.lower(): sum(1 for r in runs if e in r.flags) for e in EFFECTS}
        return cls(n_runs=len(runs), **counts)

    def __add__(self, other: "EffectCounts") -> "EffectCounts":
        return EffectCounts(
            self.n_runs + other.n_runs,
            *(self.of(e) + other.of(e) for e in EFFECTS),
        )


def severity(counts: EffectCounts, weights: SeverityWeights = SeverityWeights()) -> float:
    """Weighted, run-normalised sum of effect occurrences at one voltage level."""
    n = counts.n_runs
    return sum(weights.of(e) * counts.of(e) / n for e in EFFECTS)


def power_gain(v_mv: int, v_nominal_mv: int) -> float:
    """Fractional dynamic-power saving at constant frequency, ``1 - (v/v_nom)**2``."""
    if v_mv <= 0:
        raise NonPositiveVoltage(f"voltage {v_mv} mV must be positive")
    if v_mv > v_nominal_mv:
        raise VoltageAboveNominal(f"{v_mv} mV is above nominal {v_nominal_mv} mV")
    ratio = v_mv / v_nominal_mv
    return 1.0 - ratio * ratio


def validate_voltage(spec: ChipSpec, domain: PowerDomain | DomainKind | str, voltage_mv: int) -> int:
    if not isinstance(domain, PowerDomain):
        domain = spec.domain(domain)
    if not domain.scalable:
        raise UnscalableDomain(f"{domain.kind.value} is not voltage-scalable")
    nominal = domain.vdd_nominal_mv
    if voltage_mv > nominal:
        raise AboveNominal(f"{voltage_mv} mV is above nominal {nominal} mV of {domain.kind.value}")
    if voltage_mv <= 0 or (nominal - voltage_mv) % spec.voltage_step_mv:
        raise OffGridVoltage(
            f"{voltage_mv} mV is not {nominal} mV minus a multiple of {spec.voltage_step_mv} mV"
        )
    return voltage_mv


def validate_frequency(spec: ChipSpec, freq_mhz: int) -> int:
    if (
        freq_mhz < spec.freq_min_mhz
        or freq_mhz > spec.freq_max_mhz
        or (freq_mhz - spec.freq_min_mhz) % spec.freq_step_mhz
    ):
        raise OffGridFrequency(
            f"{freq_mhz} MHz is not on the {spec.freq_min_mhz}..{spec.freq_max_mhz} "
            f"step {spec.freq_step_mhz} MHz grid"
        )
    return freq_mhz


def validate_vf_point(spec: ChipSpec, domain: PowerDomain | DomainKind | str, point: VFPoint) -> VFPoint:
    """Return ``point`` unchanged if it lies on the chip's V/F grid for ``domain``.

    Raises AboveNominal, OffGridVoltage or OffGridFrequency naming the violated grid.
    """
    validate_voltage(spec, domain, point.voltage_mv)
    validate_frequency(spec, point.freq_mhz)
    return point


def enumerate_vf_grid(
    spec: ChipSpec,
    v_start_mv: int,
    v_floor_mv: int,
    freq_mhz: int,
    step_mv: int | None = None,
    domain: DomainKind | str = DomainKind.PMD_DOMAIN,
) -> list[VFPoint]:
    """Descending voltage schedule from ``v_start_mv`` down to (at least) ``v_floor_mv``."""
    step = spec.voltage_step_mv if step_mv is None else step_mv
    if step <= 0 or step % spec.voltage_step_mv:
        raise OffGridVoltage(f"step {step} mV is not a positive multiple of {spec.voltage_step_mv} mV")
    if v_start_mv < v_floor_mv:
        raise EmptyGrid(f"start {v_start_mv} mV is below floor {v_floor_mv} mV")
    validate_voltage(spec, domain, v_start_mv)
    validate_voltage(spec, domain, v_floor_mv)
    validate_frequency(spec, freq_mhz)
    return [VFPoint(v, freq_mhz) for v in range(v_start_mv, v_floor_mv - 1, -step)]



@dataclass(frozen=True)
class CharacterizationSetup:
    """One run configuration: benchmark, cores, V/F point and repeat count."""

    benchmark: str
    selection: CoreSelection
    vf: VFPoint
    repeats: int = 1
