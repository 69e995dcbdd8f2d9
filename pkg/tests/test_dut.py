import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import averaged_logistic
from uvlab.clock import VirtualClock
from uvlab.dut import (
    CE_LOCATIONS,
    UE_LOCATIONS,
    ErrorEvent,
    FaultModel,
    SimulatedDevice,
    digest,
    effect_probabilities,
    expected_severity,
    reference_output,
    sample_run_flags,
    sample_severities,
)
from uvlab.dut.fault_model import EffectCurve, observed_probabilities
from uvlab.errors import ConfigError, DeviceUnresponsive, OffGridFrequency, OffGridVoltage, UnknownPmd
from uvlab.model import (
    EFFECTS,
    CharacterizationSetup,
    CoreSelection,
    DomainKind,
    Effect,
    VFPoint,
)

PMD = DomainKind.PMD_DOMAIN
GOLDEN = digest(reference_output("bench"))


def setup_at(v, sel=CoreSelection.single(0), f=2400, bench="bench"):
    return CharacterizationSetup(bench, sel, VFPoint(v, f))


def make_device(seed=11, model=None, **kw):
    clock = VirtualClock()
    return SimulatedDevice(model or FaultModel(), clock, seed=seed, benchmarks={"bench": 1000}, **kw), clock


# -- fault model -------------------------------------------------------------------

def test_default_onset_ordering():
    m = FaultModel()
    th = {e: m.curves[e].v_th_mv for e in EFFECTS}
    assert th[Effect.CE] > th[Effect.UE] >= th[Effect.SDC] > th[Effect.AC] > th[Effect.SC]
    assert abs(th[Effect.UE] - th[Effect.SDC]) <= 5


@given(st.floats(-40, 40), st.floats(0.5, 8), st.floats(0, 6))
def test_noise_averaged_probability_matches_quadrature(a, sigma, spread):
    from uvlab.dut.fault_model import smoothed_logistic

    assert float(smoothed_logistic(a, sigma, spread)) == pytest.approx(averaged_logistic(a, sigma, spread), abs=1e-6)


def test_static_offsets_are_seeded_and_varied():
    a, b = FaultModel(seed=5), FaultModel(seed=5)
    assert np.array_equal(a.offsets, b.offsets)
    assert not np.array_equal(a.offsets, FaultModel(seed=6).offsets)
    vmins = [a.vmin(c) for c in range(8)]
    assert len(set(np.round(vmins, 6))) == 8
    assert max(vmins) - min(vmins) > 5


def test_threshold_shifts():
    m = FaultModel(stress={"heavy": 2.0, "light": 0.5})
    base = m.threshold(Effect.SC, 0, "other", 2400)
    assert m.threshold(Effect.SC, 0, "heavy", 2400) > base > m.threshold(Effect.SC, 0, "light", 2400)
    assert m.threshold(Effect.SC, 0, "other", 1200) < base


def test_fault_model_roundtrip(tmp_path):
    m = FaultModel(seed=3, stress={"mcf": 1.5}, core_offsets_mv=tuple(range(8)), noise_mv=2.0)
    p = tmp_path / "model.json"
    p.write_text(json.dumps(m.to_dict()))
    m2 = FaultModel.load(p)
    assert m2.to_dict() == m.to_dict()
    assert np.array_equal(m2.offsets, np.arange(8.0))


def test_fault_model_file_format():
    m = FaultModel.from_dict({"seed": 1, "effects": {"ce": {"v_th": 910, "sigma": 5}}, "freq_factor": 0.01,
                              "stress": {"mcf": 1.2}, "boot_delay_ms": 5000})
    assert m.curves[Effect.CE] == EffectCurve(910, 5)
    assert m.freq_factor_mv_per_mhz == 0.01 and m.boot_delay_ms == 5000


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"effects": {"XX": {"v_th": 1}}},
    {"effects": {"CE": {"sigma": 0}}},
    {"core_offsets_mv": [1, 2]},
    {"noise_mv": -1},
    {"stress": {"a": -1}},
])
def test_fault_model_rejects(bad):
    with pytest.raises(ConfigError):
        FaultModel.from_dict(bad)


def test_expected_severity_examples():
    clean = FaultModel(curves={e: EffectCurve(100.0, 3.0) for e in EFFECTS})
    assert expected_severity(clean, setup_at(980)) == pytest.approx(0.0, abs=1e-12)
    doomed = FaultModel(curves={e: EffectCurve(100.0 if e is not Effect.SC else 5000.0, 3.0) for e in EFFECTS})
    assert expected_severity(doomed, setup_at(980)) == pytest.approx(16.0, abs=1e-9)


def test_observed_probabilities_precedence():
    raw = np.array([0.5, 0.4, 0.3, 0.2, 0.1])
    p = observed_probabilities(raw)
    assert p.tolist() == pytest.approx([0.5 * 0.8 * 0.9, 0.4 * 0.9, 0.3 * 0.9, 0.2 * 0.9, 0.1])


@pytest.mark.parametrize("v", [900, 885])
@pytest.mark.parametrize("sel", [CoreSelection.single(3), CoreSelection.pmd_pair(2)])
def test_monte_carlo_matches_analytic(v, sel):
    m = FaultModel()
    s = setup_at(v, sel)
    samples = sample_severities(m, s, n_runs=20_000, seed=4)
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    assert abs(samples.mean() - expected_severity(m, s)) < 4 * se


def test_per_effect_frequencies_match_analytic():
    m = FaultModel()
    s = setup_at(890, CoreSelection.single(5))
    from uvlab import kernels

    obs = kernels.observed_effects(sample_run_flags(m, s, 40_000, seed=9)).mean(axis=0)
    p = effect_probabilities(m, s)
    se = np.sqrt(p * (1 - p) / 40_000) + 1e-9
    assert np.all(np.abs(obs - p) < 4 * se)


@given(st.integers(0, 2**20), st.integers(0, 7), st.integers(850, 930))
def test_raw_draws_pathwise_monotone_in_voltage(seed, core, v):
    m = FaultModel()
    s = setup_at(900, CoreSelection.single(core))
    low = sample_run_flags(m, s, 64, seed=seed, voltage_mv=v)
    high = sample_run_flags(m, s, 64, seed=seed, voltage_mv=v + 5)
    assert np.all(high <= low)


def test_analytic_probability_non_increasing():
    m = FaultModel()
    ps = [m.core_probabilities([0], [2400], "b", v)[0] for v in range(820, 990, 5)]
    assert all(np.all(a >= b) for a, b in zip(ps, ps[1:]))


# -- simulated device --------------------------------------------------------------------

def test_set_voltage_examples():
    dev, _ = make_device()
    dev.set_voltage(PMD, 980)
    assert dev.voltage() == 980
    dev.set_voltage(PMD, 900)
    assert dev.voltage() == 900
    with pytest.raises(OffGridVoltage):
        dev.set_voltage(PMD, 901)


def test_set_frequency_examples():
    dev, _ = make_device()
    dev.set_frequency(0, 2400)
    dev.set_frequency(1, 300)
    assert dev.frequencies()[:2] == [2400, 300]
    dev.set_frequency(0, 2400)
    assert dev.frequencies()[:2] == [2400, 300]
    with pytest.raises(UnknownPmd):
        dev.set_frequency(7, 300)
    with pytest.raises(OffGridFrequency):
        dev.set_frequency(0, 1000)


def test_nominal_runs_are_clean():
    dev, clock = make_device(seed=1)
    sel = CoreSelection.single(0)
    abnormal = 0
    for rid in range(10_000):
        out = dev.run_benchmark("bench", sel, GOLDEN, run_key=(0, rid))
        abnormal += not out.effect_set.is_normal
    assert abnormal / 10_000 <= 0.001


def test_deep_undervolt_crashes():
    dev, clock = make_device(seed=2)
    sc = 0
    for rid in range(2_000):
        dev.power_cycle()
        clock.sleep(dev.boot_delay_ms)
        dev.set_voltage(PMD, 800)
        out = dev.run_benchmark("bench", CoreSelection.single(0), GOLDEN, run_key=(0, rid))
        sc += Effect.SC in out.effect_set
    assert sc / 2_000 >= 0.999


def test_outcome_is_deterministic():
    a, _ = make_device(seed=3)
    b, _ = make_device(seed=3)
    for dev in (a, b):
        dev.set_voltage(PMD, 890)
    for rid in range(200):
        oa = a.run_benchmark("bench", CoreSelection.pmd_pair(1), GOLDEN, run_key=(2, rid))
        ob = b.run_benchmark("bench", CoreSelection.pmd_pair(1), GOLDEN, run_key=(2, rid))
        assert oa == ob
        for dev in (a, b):
            dev.power_cycle()
            dev.clock.sleep(dev.boot_delay_ms)
            dev.set_voltage(PMD, 890)


def check_outcome(out, golden=GOLDEN, timeout_ms=2000):
    """The consistency triple every outcome must satisfy."""
    flags = out.effect_set
    if Effect.SC in flags:
        assert (not out.responsive) or out.duration_ms > timeout_ms
    else:
        assert (Effect.AC in flags) == (out.exit_code != 0)
    if Effect.SDC in flags:
        assert out.exit_code == 0 and out.output_digest != golden
    if out.responsive and out.exit_code == 0 and Effect.SDC not in flags:
        assert out.output_digest == golden
    for ev in out.error_events:
        assert ev.kind in (Effect.CE, Effect.UE) and ev.count >= 1
        assert ev.location in (CE_LOCATIONS if ev.kind is Effect.CE else UE_LOCATIONS)
    assert {ev.kind for ev in out.error_events} == {e for e in (Effect.CE, Effect.UE) if e in flags}


@given(st.integers(0, 2**16), st.sampled_from(list(range(860, 930, 5))),
       st.sampled_from([CoreSelection.single(4), CoreSelection.pmd_pair(0), CoreSelection.all_cores()]))
def test_every_outcome_is_consistent(rid, v, sel):
    dev, _ = make_device(seed=5)
    dev.set_voltage(PMD, v)
    check_outcome(dev.run_benchmark("bench", sel, GOLDEN, run_key=(1, rid)))


def test_outcome_consistency_sweep():
    dev, clock = make_device(seed=8)
    seen = set()
    for v in range(920, 855, -5):
        for rid in range(150):
            if not dev.ping():
                dev.power_cycle()
                clock.sleep(dev.boot_delay_ms)
            dev.set_voltage(PMD, v)
            out = dev.run_benchmark("bench", CoreSelection.single(1), GOLDEN, run_key=(v, rid))
            check_outcome(out)
            seen |= out.effect_set.flags
            if not out.responsive:
                clock.sleep(out.hang_after_ms)
                assert not dev.ping()
    assert seen == set(EFFECTS)


def test_error_log_read_and_clear():
    dev, clock = make_device(seed=4)
    assert dev.read_error_log() == []
    dev.set_voltage(PMD, 895)
    for rid in range(500):
        out = dev.run_benchmark("bench", CoreSelection.single(0), GOLDEN, run_key=(0, rid))
        if Effect.CE in out.effect_set and Effect.SC not in out.effect_set:
            events = dev.read_error_log()
            assert any(e.kind is Effect.CE for e in events)
            assert dev.read_error_log() == []
            break
        if not dev.ping() or Effect.SC in out.effect_set:
            dev.power_cycle()
            clock.sleep(dev.boot_delay_ms)
            dev.set_voltage(PMD, 895)
        dev.read_error_log()
    else:
        pytest.fail("no CE run found")


def test_power_cycle():
    dev, clock = make_device(seed=4, model=FaultModel(boot_delay_ms=5000))
    dev.set_voltage(PMD, 850)
    dev.set_frequency(2, 300)
    dev.power_cycle()
    assert not dev.ping()
    with pytest.raises(DeviceUnresponsive):
        dev.read_error_log()
    clock.sleep(4999)
    assert not dev.ping()
    clock.sleep(1)
    assert dev.ping()
    assert dev.voltage() == 980 and dev.voltage(DomainKind.SOC_DOMAIN) == 950
    assert dev.frequencies() == [2400] * 4
    assert dev.read_error_log() == []


def test_hung_device_ignores_everything_but_power():
    dev, clock = make_device(seed=6)
    dev.set_voltage(PMD, 800)
    for rid in range(100):
        out = dev.run_benchmark("bench", CoreSelection.single(0), GOLDEN, run_key=(0, rid))
        if not out.responsive:
            break
    clock.sleep(out.hang_after_ms)
    assert not dev.ping()
    with pytest.raises(DeviceUnresponsive):
        dev.set_voltage(PMD, 980)
    dev.power_cycle()
    clock.sleep(dev.boot_delay_ms)
    assert dev.ping() and dev.voltage() == 980


def test_edac_line_roundtrip():
    for ev in (ErrorEvent(CE_LOCATIONS[0], Effect.CE, 3), ErrorEvent(UE_LOCATIONS[0], Effect.UE, 1)):
        assert ErrorEvent.parse(ev.edac_line()) == ev
    assert ErrorEvent.parse("EDAC CE L9 count=1") is None


def test_voltage_applies_to_every_pmd_jointly():
    dev, _ = make_device(seed=0, model=FaultModel(core_offsets_mv=(0,) * 8, noise_mv=0.0))
    dev.set_voltage(PMD, 860)
    # same offsets and the same voltage: any PMD crashes just as readily
    rates = []
    for sel in (CoreSelection.single(0), CoreSelection.single(7)):
        rates.append(np.mean([Effect.SC in dev.run_benchmark("bench", sel, GOLDEN, run_key=(0, r)).effect_set
                              for r in range(300)]))
    assert all(r > 0.95 for r in rates)


@pytest.mark.parametrize("v", [900, 890, 880])
def test_monte_carlo_z_scores_are_standard_normal(v):
    # fidelity should not hinge on one lucky stream: across many independent
    # streams the standardized error must look like N(0, 1)
    model = FaultModel()
    setup = CharacterizationSetup("bench", CoreSelection.single(0), VFPoint(v, 2400))
    analytic = expected_severity(model, setup)
    zs = []
    for camp in range(200):
        s = sample_severities(model, setup, n_runs=20_000, seed=99, campaign=camp)
        zs.append((s.mean() - analytic) / (s.std(ddof=1) / np.sqrt(len(s))))
    zs = np.array(zs)
    assert abs(zs.mean()) < 0.25  # SE of the mean is 0.07
    assert 0.8 < zs.std() < 1.2
    assert np.mean(np.abs(zs) > 3) < 0.02
