"""Probabilistic onset curves that drive the simulated device.

None of the constants here are measurements of any real chip. They only
reproduce the qualitative ordering seen when undervolting: corrected errors
first, then SDC/UE, then application crashes, finally system crashes, with
a per-core static offset on top.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import kernels
from ..errors import ConfigError
from ..model import EFFECTS, CharacterizationSetup, Effect, SeverityWeights

# (v_th mV at 2400 MHz and stress 1.0, sigma mV)
DEFAULT_CURVES = {
    Effect.CE: (905.0, 6.0),
    Effect.UE: (895.0, 4.0),
    Effect.SDC: (893.0, 4.0),
    Effect.AC: (885.0, 3.0),
    Effect.SC: (875.0, 2.0),
}

# keeps the static-offset stream apart from any campaign's run streams
_OFFSET_CAMPAIGN = 0x5EED0FF5E7


@dataclass(frozen=True)
class EffectCurve:
    v_th_mv: float
    sigma_mv: float

    def __post_init__(self):
        if not self.sigma_mv > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma_mv}")


def _default_curves() -> dict[Effect, EffectCurve]:
    return {e: EffectCurve(*v) for e, v in DEFAULT_CURVES.items()}


def _softplus(x):
    return np.logaddexp(0.0, x)


def smoothed_logistic(a, sigma: float, spread: float):
    """E[logistic((a + n)/sigma)] for n uniform on [-spread, spread]."""
    a = np.asarray(a, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.all(spread <= 1e-6 * sigma):
        # softplus difference cancels catastrophically; the error of ignoring the noise is O((spread/sigma)^2)
        return 1.0 / (1.0 + np.exp(-a / sigma))
    return sigma / (2.0 * spread) * (_softplus((a + spread) / sigma) - _softplus((a - spread) / sigma))


@dataclass
class FaultModel:
    """Per-core, per-effect onset curves.

    The effective onset of effect ``e`` on core ``c`` is::

        v_th(e) + offset(c) + stress_mv_per_unit * (stress(bench) - 1)
                + freq_factor_mv_per_mhz * (f - ref_freq_mhz)

    and each run draws ``u < logistic((onset + noise - v) / sigma_e)`` with
    ``noise`` uniform on ``[-noise_mv, noise_mv]``, independently per run,
    core and effect.
    """

    seed: int = 2018
    n_cores: int = 8
    core_offsets_mv: tuple[float, ...] | None = None
    offset_sigma_mv: float = 5.0
    curves: dict[Effect, EffectCurve] = field(default_factory=_default_curves)
    noise_mv: float = 3.0
    stress: dict[str, float] = field(default_factory=dict)
    stress_mv_per_unit: float = 10.0
    freq_factor_mv_per_mhz: float = 0.02
    ref_freq_mhz: int = 2400
    boot_delay_ms: int = 30_000

    def __post_init__(self):
        missing = set(EFFECTS) - set(self.curves)
        if missing:
            raise ConfigError(f"fault model lacks curves for {sorted(e.value for e in missing)}")
        if self.noise_mv < 0 or self.offset_sigma_mv < 0:
            raise ConfigError("noise_mv and offset_sigma_mv must be non-negative")
        if any(s < 0 for s in self.stress.values()):
            raise ConfigError("stress factors must be >= 0")
        if self.core_offsets_mv is not None:
            self.core_offsets_mv = tuple(float(o) for o in self.core_offsets_mv)
            if len(self.core_offsets_mv) != self.n_cores:
                raise ConfigError(f"need {self.n_cores} core offsets, got {len(self.core_offsets_mv)}")
        self._offsets = self._draw_offsets()

    def _draw_offsets(self) -> np.ndarray:
        if self.core_offsets_mv is not None:
            return np.array(self.core_offsets_mv, dtype=np.float64)
        out = np.empty(self.n_cores)
        for c in range(self.n_cores):
            key = kernels.run_key(self.seed, _OFFSET_CAMPAIGN, c)
            u1 = kernels.uniform_ref(key, 0)
            u2 = kernels.uniform_ref(key, 1)
            # Box-Muller; 1 - u1 keeps the log argument in (0, 1]
            out[c] = self.offset_sigma_mv * math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2 * math.pi * u2)
        return out

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets.copy()

    def sigmas(self) -> np.ndarray:
        return np.array([self.curves[e].sigma_mv for e in EFFECTS])

    def shift_mv(self, benchmark: str, freq_mhz: int) -> float:
        stress = self.stress.get(benchmark, 1.0)
        return self.stress_mv_per_unit * (stress - 1.0) + self.freq_factor_mv_per_mhz * (freq_mhz - self.ref_freq_mhz)

    def threshold(self, effect: Effect, core: int, benchmark: str, freq_mhz: int) -> float:
        return self.curves[Effect(effect)].v_th_mv + self._offsets[core] + self.shift_mv(benchmark, freq_mhz)

    def thresholds(self, cores: Sequence[int], freqs_mhz: Sequence[int], benchmark: str) -> np.ndarray:
        """(len(cores), 5) effective onsets in canonical effect order."""
        base = np.array([self.curves[e].v_th_mv for e in EFFECTS])
        rows = [base + self._offsets[c] + self.shift_mv(benchmark, f) for c, f in zip(cores, freqs_mhz)]
        return np.array(rows, dtype=np.float64).reshape(len(cores), len(EFFECTS))

    def core_probabilities(self, cores, freqs_mhz, benchmark: str, voltage_mv: float) -> np.ndarray:
        """Analytic per-core, per-effect draw probability, noise averaged out."""
        a = self.thresholds(cores, freqs_mhz, benchmark) - voltage_mv
        return smoothed_logistic(a, self.sigmas()[None, :], self.noise_mv)

    def vmin(self, core: int, benchmark: str = "", freq_mhz: int | None = None) -> float:
        """Voltage where the noise-free system-crash probability is one half."""
        f = self.ref_freq_mhz if freq_mhz is None else freq_mhz
        return self.threshold(Effect.SC, core, benchmark, f)

    # -- config file ----------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "n_cores": self.n_cores,
            "offset_sigma_mv": self.offset_sigma_mv,
            "effects": {e.value: {"v_th": c.v_th_mv, "sigma": c.sigma_mv} for e, c in self.curves.items()},
            "noise_mv": self.noise_mv,
            "stress": dict(self.stress),
            "stress_mv_per_unit": self.stress_mv_per_unit,
            "freq_factor": self.freq_factor_mv_per_mhz,
            "ref_freq_mhz": self.ref_freq_mhz,
            "boot_delay_ms": self.boot_delay_ms,
        }
        if self.core_offsets_mv is not None:
            d["core_offsets_mv"] = list(self.core_offsets_mv)
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "FaultModel":
        data = dict(data)
        known = {
            "seed", "n_cores", "core_offsets_mv", "offset_sigma_mv", "effects", "noise_mv",
            "stress", "stress_mv_per_unit", "freq_factor", "ref_freq_mhz", "boot_delay_ms",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown fault model keys: {sorted(unknown)}")
        curves = _default_curves()
        for name, c in data.pop("effects", {}).items():
            try:
                eff = Effect(name.upper())
            except ValueError:
                raise ConfigError(f"unknown effect {name!r} in fault model") from None
            old = curves[eff]
            curves[eff] = EffectCurve(float(c.get("v_th", old.v_th_mv)), float(c.get("sigma", old.sigma_mv)))
        kwargs = {
            "curves": curves,
            "stress": {str(k): float(v) for k, v in data.pop("stress", {}).items()},
        }
        if "freq_factor" in data:
            kwargs["freq_factor_mv_per_mhz"] = float(data.pop("freq_factor"))
        if data.get("core_offsets_mv") is not None:
            data["core_offsets_mv"] = tuple(data["core_offsets_mv"])
        return cls(**data, **kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "FaultModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read fault model {path}: {exc}") from exc


def observed_probabilities(raw: np.ndarray) -> np.ndarray:
    """Map run-level raw draw probabilities to observed-flag probabilities.

    Mirrors ``kernels.observed_effects``: SC hides every other flag (no output,
    and the power cycle wipes the error log) and AC hides SDC. Raw draws are
    independent, so the products are exact.
    """
    sdc, ce, ue, ac, sc = (raw[..., i] for i in range(5))
    alive = 1.0 - sc
    return np.stack([sdc * (1.0 - ac) * alive, ce * alive, ue * alive, ac * alive, sc], axis=-1)


def effect_probabilities(model: FaultModel, setup: CharacterizationSetup) -> np.ndarray:
    """Probability that a run of ``setup`` reports each effect, canonical order."""
    cores = list(setup.selection.core_ids)
    q = model.core_probabilities(cores, [setup.vf.freq_mhz] * len(cores), setup.benchmark, setup.vf.voltage_mv)
    raw = 1.0 - np.prod(1.0 - q, axis=0)
    return observed_probabilities(raw)


def expected_severity(model: FaultModel, setup: CharacterizationSetup,
                      weights: SeverityWeights = SeverityWeights()) -> float:
    """Closed-form E[S_v]: each run adds Bernoulli(p_e)/N to count_e/N, so E = sum W_e p_e."""
    p = effect_probabilities(model, setup)
    return float(np.dot(weights.vector(), p))


def sample_run_flags(model: FaultModel, setup: CharacterizationSetup, n_runs: int,
                     seed: int, campaign: int = 0, first_run_id: int = 1,
                     voltage_mv: float | None = None):
    """Raw per-core draws, shape (n_runs, n_cores, 5), from the same streams the device uses."""
    cores = list(setup.selection.core_ids)
    keys = kernels.run_keys(seed, campaign, np.arange(first_run_id, first_run_id + n_runs))
    thr = model.thresholds(cores, [setup.vf.freq_mhz] * len(cores), setup.benchmark)
    args = kernels.as_kernel_args(cores, thr, model.sigmas())
    v = float(setup.vf.voltage_mv if voltage_mv is None else voltage_mv)
    return kernels.sample_flags(keys, *args, float(model.noise_mv), v)


def sample_severities(model: FaultModel, setup: CharacterizationSetup,
                      weights: SeverityWeights = SeverityWeights(), n_runs: int = 100_000,
                      seed: int = 0, campaign: int = 0) -> np.ndarray:
    """Monte Carlo per-run severities (each run is its own N=1 level)."""
    flags = sample_run_flags(model, setup, n_runs, seed, campaign)
    observed = kernels.observed_effects(flags)
    return kernels.run_severities(observed, np.asarray(weights.vector(), dtype=np.float64))
