"""Counter-based RNG and the effect-sampling hot loops.

Every random draw is ``uniform(key, counter)`` where ``key`` is derived from
``(seed, campaign, run_id)`` with splitmix64 mixing, so any run can be
re-sampled in isolation and the stream never depends on call order.

Each kernel exists twice: an ``@njit`` loop and a vectorised numpy version.
They are bit-identical on the integer path; the float path differs at most
by one ulp in ``exp``. ``JIT_ENABLED`` (see ``_jit``) picks the default.
"""
import numpy as np

from ._jit import JIT_ENABLED, njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0

# counter layout inside one run's stream
SLOTS_PER_CORE = 16  # 0..4 effect draws, 8..12 noise draws
NOISE_SLOT = 8
AUX_BASE = 1 << 20  # run-level draws (duration, hang point, locations, ...)
N_EFFECTS = 5

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)


# -- pure-python reference (used for keys and as a test oracle) --------------

def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def run_key(seed: int, campaign: int, run_id: int) -> int:
    k = mix64(seed + GOLDEN)
    k = mix64(k ^ ((campaign + 2 * GOLDEN) & MASK64))
    return mix64(k ^ ((run_id + 3 * GOLDEN) & MASK64))


def uniform_ref(key: int, counter: int) -> float:
    return (mix64(key + (counter + 1) * GOLDEN) >> 11) * INV_2_53


# -- numba kernels -----------------------------------------------------------

@njit
def _mix64_jit(z):
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


@njit
def _uniform_jit(key, counter):
    z = key + np.uint64(counter + 1) * _U_GOLDEN
    return np.float64(_mix64_jit(z) >> _U11) * INV_2_53


@njit
def uniforms_jit(key, counters):
    out = np.empty(counters.shape[0], dtype=np.float64)
    for i in range(counters.shape[0]):
        out[i] = _uniform_jit(key, counters[i])
    return out


@njit
def sample_flags_jit(keys, cores, thresholds, sigmas, noise_mv, voltage_mv):
    n_runs = keys.shape[0]
    n_cores = cores.shape[0]
    flags = np.zeros((n_runs, n_cores, N_EFFECTS), dtype=np.uint8)
    for r in range(n_runs):
        key = keys[r]
        for ci in range(n_cores):
            base = cores[ci] * SLOTS_PER_CORE
            for e in range(N_EFFECTS):
                u = _uniform_jit(key, base + e)
                un = _uniform_jit(key, base + NOISE_SLOT + e)
                x = (thresholds[ci, e] + noise_mv * (2.0 * un - 1.0) - voltage_mv) / sigmas[e]
                p = 1.0 / (1.0 + np.exp(-x))
                if u < p:
                    flags[r, ci, e] = 1
    return flags


@njit
def observed_effects_jit(flags):
    # any-core merge, then SC > AC > SDC precedence; SC also loses CE/UE logs
    n_runs = flags.shape[0]
    out = np.zeros((n_runs, N_EFFECTS), dtype=np.uint8)
    for r in range(n_runs):
        raw = np.zeros(N_EFFECTS, dtype=np.uint8)
        for ci in range(flags.shape[1]):
            for e in range(N_EFFECTS):
                if flags[r, ci, e]:
                    raw[e] = 1
        if raw[4]:
            out[r, 4] = 1
        else:
            out[r, 1] = raw[1]
            out[r, 2] = raw[2]
            if raw[3]:
                out[r, 3] = 1
            else:
                out[r, 0] = raw[0]
    return out


@njit
def run_severities_jit(observed, weights):
    n_runs = observed.shape[0]
    out = np.empty(n_runs, dtype=np.float64)
    for r in range(n_runs):
        s = 0.0
        for e in range(N_EFFECTS):
            if observed[r, e]:
                s += weights[e]
        out[r] = s
    return out


# -- numpy kernels -----------------------------------------------------------

def _mix64_np(z):
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


def _uniform_np(key, counters):
    c = np.asarray(counters, dtype=np.uint64) + np.uint64(1)
    z = np.asarray(key, dtype=np.uint64) + c * _U_GOLDEN
    return (_mix64_np(z) >> _U11).astype(np.float64) * INV_2_53


def uniforms_numpy(key, counters):
    with np.errstate(over="ignore"):
        return _uniform_np(np.uint64(key), np.asarray(counters, dtype=np.int64))


def sample_flags_numpy(keys, cores, thresholds, sigmas, noise_mv, voltage_mv):
    keys = np.asarray(keys, dtype=np.uint64)[:, None, None]
    slots = (np.asarray(cores, dtype=np.int64)[:, None] * SLOTS_PER_CORE + np.arange(N_EFFECTS))
    with np.errstate(over="ignore"):
        u = _uniform_np(keys, slots[None, :, :])
        un = _uniform_np(keys, (slots + NOISE_SLOT)[None, :, :])
        x = (np.asarray(thresholds)[None] + noise_mv * (2.0 * un - 1.0) - voltage_mv) / np.asarray(sigmas)
        p = 1.0 / (1.0 + np.exp(-x))
    return (u < p).astype(np.uint8)


def observed_effects_numpy(flags):
    raw = flags.max(axis=1) if flags.shape[1] else np.zeros((flags.shape[0], N_EFFECTS), np.uint8)
    sc = raw[:, 4].astype(bool)
    ac = raw[:, 3].astype(bool) & ~sc
    out = np.zeros_like(raw)
    out[:, 4] = sc
    out[:, 3] = ac
    out[:, 1] = raw[:, 1] & ~sc
    out[:, 2] = raw[:, 2] & ~sc
    out[:, 0] = raw[:, 0] & ~sc & ~ac
    return out


def run_severities_numpy(observed, weights):
    return observed.astype(np.float64) @ np.asarray(weights, dtype=np.float64)


# -- dispatch ----------------------------------------------------------------

if JIT_ENABLED:
    uniforms = uniforms_jit
    sample_flags = sample_flags_jit
    observed_effects = observed_effects_jit
    run_severities = run_severities_jit
else:
    uniforms = uniforms_numpy
    sample_flags = sample_flags_numpy
    observed_effects = observed_effects_numpy
    run_severities = run_severities_numpy


def run_keys(seed: int, campaign: int, run_ids) -> np.ndarray:
    """Vectorised ``run_key`` over an array of run ids."""
    k = mix64(mix64(seed + GOLDEN) ^ ((campaign + 2 * GOLDEN) & MASK64))
    ids = np.asarray(run_ids, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_np(np.uint64(k) ^ (ids + np.uint64((3 * GOLDEN) & MASK64)))


def as_kernel_args(cores, thresholds, sigmas):
    return (
        np.ascontiguousarray(cores, dtype=np.int64),
        np.ascontiguousarray(thresholds, dtype=np.float64),
        np.ascontiguousarray(sigmas, dtype=np.float64),
    )
