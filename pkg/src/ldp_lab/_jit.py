"""Optional numba acceleration.

Hot kernels are written twice: a scalar loop compiled with numba and a
vectorized numpy version.  Setting ``LDP_LAB_DISABLE_NUMBA=1`` (or running
without numba installed) selects the numpy path everywhere.
"""
from __future__ import annotations

import os

try:
    import numba as _numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAVE_NUMBA = False

ENV_DISABLE = "LDP_LAB_DISABLE_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(ENV_DISABLE, "").strip().lower() not in ("", "0", "false", "no")


NUMBA_ENABLED = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        return njit()(args[0])

    def decorator(func):
        if NUMBA_ENABLED:
            return _numba.njit(*args, **kwargs)(func)
        return func

    return decorator


def resolve_backend(backend: str | None = None) -> str:
    """Map ``None`` to the default backend and validate explicit requests."""
    if backend is None:
        return "numba" if NUMBA_ENABLED else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")
    if backend == "numba" and not NUMBA_ENABLED:
        raise RuntimeError(f"numba backend requested but disabled (see {ENV_DISABLE})")
    return backend
