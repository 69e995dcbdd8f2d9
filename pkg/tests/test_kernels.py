import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import splitmix64
from uvlab import kernels
from uvlab._jit import JIT_AVAILABLE

u64 = st.integers(0, 2**64 - 1)


@given(u64)
def test_mix64_matches_reference(z):
    assert kernels.mix64(z) == splitmix64(z)


@given(st.integers(0, 2**31), st.integers(0, 2**20), st.lists(st.integers(0, 2**40), min_size=1, max_size=50))
def test_run_keys_vectorised(seed, campaign, ids):
    vec = kernels.run_keys(seed, campaign, ids)
    assert [int(k) for k in vec] == [kernels.run_key(seed, campaign, i) for i in ids]


@given(u64, st.lists(st.integers(0, 2**21), min_size=1, max_size=40))
def test_uniforms_paths_agree(key, counters):
    c = np.array(counters, dtype=np.int64)
    ref = [kernels.uniform_ref(key, i) for i in counters]
    assert kernels.uniforms_numpy(key, c).tolist() == ref
    if JIT_AVAILABLE:
        assert kernels.uniforms_jit(np.uint64(key), c).tolist() == ref
    assert all(0.0 <= u < 1.0 for u in ref)


def test_uniforms_look_uniform():
    u = kernels.uniforms_numpy(kernels.run_key(1, 2, 3), np.arange(200_000))
    assert abs(u.mean() - 0.5) < 0.005
    hist, _ = np.histogram(u, bins=10, range=(0, 1))
    assert hist.min() > 19_000 and hist.max() < 21_000


def _args(n_cores=3, seed=0):
    rng = np.random.default_rng(seed)
    cores = np.sort(rng.choice(8, n_cores, replace=False)).astype(np.int64)
    thr = rng.uniform(860, 920, size=(n_cores, 5))
    sig = rng.uniform(1, 7, size=5)
    return cores, thr, sig


@pytest.mark.skipif(not JIT_AVAILABLE, reason="numba missing")
@pytest.mark.parametrize("n_cores", [1, 2, 8])
def test_sample_flags_jit_equals_numpy(n_cores):
    cores, thr, sig = _args(n_cores, n_cores)
    keys = kernels.run_keys(7, 1, np.arange(1, 20_001))
    for v in (870.0, 890.0, 905.0):
        a = kernels.sample_flags_jit(keys, cores, thr, sig, 3.0, v)
        b = kernels.sample_flags_numpy(keys, cores, thr, sig, 3.0, v)
        assert np.array_equal(a, b)


def test_sample_flags_matches_scalar_reference():
    cores, thr, sig = _args(2, 5)
    keys = kernels.run_keys(3, 0, np.arange(1, 201))
    v, noise = 890.0, 3.0
    flags = kernels.sample_flags(keys, cores, thr, sig, noise, v)
    for r, key in enumerate(keys):
        for ci, core in enumerate(cores):
            for e in range(5):
                base = int(core) * kernels.SLOTS_PER_CORE
                u = kernels.uniform_ref(int(key), base + e)
                un = kernels.uniform_ref(int(key), base + kernels.NOISE_SLOT + e)
                x = (thr[ci, e] + noise * (2 * un - 1) - v) / sig[e]
                p = 1 / (1 + np.exp(-x))
                assert flags[r, ci, e] == (u < p)


def _observed_reference(raw_any):
    sdc, ce, ue, ac, sc = raw_any
    if sc:
        return [0, 0, 0, 0, 1]
    return [0 if ac else sdc, ce, ue, ac, 0]


flag_tables = st.integers(1, 4).flatmap(
    lambda c: st.lists(st.lists(st.lists(st.integers(0, 1), min_size=5, max_size=5), min_size=c, max_size=c),
                       min_size=1, max_size=30)
)


@given(flag_tables)
def test_observed_effects_precedence(data):
    flags = np.array(data, dtype=np.uint8)
    expected = [_observed_reference(np.max(run, axis=0).tolist()) for run in flags]
    assert kernels.observed_effects_numpy(flags).tolist() == expected
    if JIT_AVAILABLE:
        assert kernels.observed_effects_jit(flags).tolist() == expected


@given(st.lists(st.lists(st.integers(0, 1), min_size=5, max_size=5), min_size=1, max_size=30),
       st.lists(st.floats(0, 50), min_size=5, max_size=5))
def test_run_severities(obs, w):
    o = np.array(obs, dtype=np.uint8)
    w = np.array(w)
    expected = [sum(wi for wi, f in zip(w, row) if f) for row in obs]
    np.testing.assert_allclose(kernels.run_severities_numpy(o, w), expected, rtol=1e-12, atol=1e-12)
    if JIT_AVAILABLE:
        np.testing.assert_allclose(kernels.run_severities_jit(o, w), expected, rtol=1e-12, atol=1e-12)


def test_env_flag_selects_numpy_path():
    code = "from uvlab import kernels; print(kernels.sample_flags is kernels.sample_flags_numpy)"
    env = dict(os.environ, UVLAB_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"
    env["UVLAB_DISABLE_JIT"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == str(not JIT_AVAILABLE)


def test_benchmark_script_runs():
    script = os.path.join(os.path.dirname(__file__), "..", "benchmarks", "bench_kernels.py")
    out = subprocess.run([sys.executable, script, "--runs", "2000", "--repeat", "1"],
                         capture_output=True, text=True, check=True)
    assert "numpy" in out.stdout
    if JIT_AVAILABLE:
        assert "paths agree on the first 10,000 runs: True" in out.stdout
