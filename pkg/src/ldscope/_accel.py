"""Backend selection for the integration kernels.

The hot loops come in two flavours: scalar per-node kernels compiled with
numba, and vectorized numpy kernels that advance every node of a batch at
once. ``LDSCOPE_BACKEND=numpy`` forces the fallback even when numba is
importable.
"""
from __future__ import annotations

import os

try:  # pragma: no cover - exercised implicitly
    import numba as _numba
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

BACKENDS = ("numba", "numpy")
ENV_BACKEND = "LDSCOPE_BACKEND"
ENV_WORKERS = "LDSCOPE_WORKERS"


def default_backend() -> str:
    requested = os.environ.get(ENV_BACKEND, "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested not in ("", "numba", "auto"):
        raise ValueError(f"{ENV_BACKEND} must be one of {BACKENDS}, got {requested!r}")
    return "numba" if HAVE_NUMBA else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def default_workers() -> int:
    raw = os.environ.get(ENV_WORKERS)
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{ENV_WORKERS} must be >= 1")
        return n
    return 1


def max_workers() -> int:
    return os.cpu_count() or 1
