"""numba switch.

Set ``UVLAB_DISABLE_JIT=1`` to force the vectorised numpy kernels; numba is
also skipped when it cannot be imported.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the env
    numba = None

DISABLED_BY_ENV = os.environ.get("UVLAB_DISABLE_JIT", "").strip().lower() not in ("", "0", "false", "no")
JIT_AVAILABLE = numba is not None
JIT_ENABLED = JIT_AVAILABLE and not DISABLED_BY_ENV


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    The decorated function is always compiled if possible so the benchmark can
    compare both paths; ``JIT_ENABLED`` only decides which path callers get.
    """
    if func is None:
        return lambda f: njit(f, **kwargs)
    if not JIT_AVAILABLE:
        return func
    kwargs.setdefault("cache", True)
    return numba.njit(**kwargs)(func)
