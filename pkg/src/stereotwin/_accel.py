"""Backend selection for the hot pixel kernels.

Every kernel ships as a numba ``@njit`` loop and as a vectorised numpy
routine. Numba is used when it imports cleanly, unless the environment
variable ``STEREOTWIN_DISABLE_NUMBA`` is set to a truthy value, in which case
the numpy path runs everywhere. ``use_backend`` switches in-process, which the
benchmarks and the equivalence tests rely on.
"""
from __future__ import annotations

import os
import warnings
from contextlib import contextmanager

ENV_FLAG = "STEREOTWIN_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
    # an old system TBB only disables that threading layer; numba falls back on its own
    warnings.filterwarnings("ignore", message="The TBB threading layer", category=numba.NumbaWarning)
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


if HAVE_NUMBA:
    prange = numba.prange

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

else:  # pragma: no cover
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
