"""Backend selection for the compiled kernels.

The hot kernels are written once in a numba-compatible numpy subset. They run
either compiled with ``numba.njit`` or as plain numpy, chosen at import time by
the ``COMPACTBNN_BACKEND`` environment variable (``numba`` or ``numpy``).
``COMPACTBNN_DISABLE_NUMBA=1`` is accepted as a shorthand for ``numpy``.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

__all__ = ["HAS_NUMBA", "default_backend", "jit_for", "njit"]

HAS_NUMBA = numba is not None
BACKENDS = ("numba", "numpy")


def default_backend():
    if os.environ.get("COMPACTBNN_DISABLE_NUMBA", "").strip() in ("1", "true", "yes"):
        return "numpy"
    name = os.environ.get("COMPACTBNN_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"COMPACTBNN_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        return "numpy"
    return name


def _identity(f=None, **_):
    if f is None:
        return lambda g: g
    return f


def jit_for(backend):
    """Return the decorator used to build kernels for ``backend``."""
    if backend == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return numba.njit(cache=True, nogil=True)
    return _identity


def njit(f=None, **setting):
    """Compile a user-supplied target with numba when available.

    A numba dispatcher is also callable from plain Python, so targets built
    this way work with either backend of :func:`compactbnn.sampler.run_mh`.
    """
    if not HAS_NUMBA:
        return _identity(f)
    if f is None:
        return lambda g: numba.njit(g, **setting)
    return numba.njit(f, **setting)
