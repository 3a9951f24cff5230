"""Backend selection for the orbit kernels.

The compiled module is used when it imports; setting DLORENZ_PURE=1 in the
environment forces the pure-Python version.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("DLORENZ_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

orbit = _impl.orbit
lyapunov = _impl.lyapunov
