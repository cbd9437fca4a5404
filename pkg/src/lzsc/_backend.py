"""Pick the convolution kernels at import time.

The compiled extension is used when it imports; ``LZSC_BACKEND=python``
forces the numpy fallback. ``LZSC_THREADS`` caps the OpenMP pool.
"""
import os

from . import _kernels_py

NAME = "python"
kernels = _kernels_py

if os.environ.get("LZSC_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        NAME = "compiled"


def num_threads():
    value = os.environ.get("LZSC_THREADS")
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


def use(name):
    """Switch backend at runtime ("python" or "compiled"). Used by tests and benchmarks."""
    global kernels, NAME
    if name == "python":
        kernels, NAME = _kernels_py, "python"
    elif name == "compiled":
        from . import _kernels as _compiled

        kernels, NAME = _compiled, "compiled"
    else:
        raise ValueError(f"unknown backend {name!r}")
