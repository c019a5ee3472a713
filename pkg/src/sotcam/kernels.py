"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``SOTCAM_BACKEND=python`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("SOTCAM_BACKEND", "").lower() not in ("python", "fallback"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

ml_discharge = _impl.ml_discharge
llg_run = _impl.llg_run


def get(backend):
    """Return the kernel module for ``backend`` ('cython' or 'python')."""
    if backend == "python":
        return _fallback
    if backend == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
