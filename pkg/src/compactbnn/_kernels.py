"""Loader for the hot kernels in :mod:`compactbnn._kernelsrc`.

The source is written in the numpy subset numba can compile and is loaded once
per backend, so the compiled and the plain-numpy kernels coexist in one
process. :func:`get` returns the module for a backend; the numba build is
compiled lazily and cached on disk.
"""

import importlib.util
import sys
from pathlib import Path

from ._accel import default_backend

_SRC = Path(__file__).with_name("_kernelsrc.py")


def _load(backend):
    name = f"{__package__}._kernels_{backend}"
    if name in sys.modules:
        return sys.modules[name]
    spec = importlib.util.spec_from_file_location(name, _SRC)
    module = importlib.util.module_from_spec(spec)
    sys.modules[name] = module
    spec.loader.exec_module(module)
    return module


def get(backend=None):
    """Kernel module for ``backend`` (default: from the environment)."""
    return _load(backend or default_backend())


NUMPY = _load("numpy")
REGRESSION = NUMPY.REGRESSION
CLASSIFICATION = NUMPY.CLASSIFICATION
LOG_PROB_FLOOR = NUMPY.LOG_PROB_FLOOR
