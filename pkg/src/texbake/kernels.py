"""Backend selection for the hot loops.

The compiled extension is used when importable; set ``TEXBAKE_PURE=1`` to
force the NumPy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("TEXBAKE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

raster_triangles = _impl.raster_triangles
jacobi_fill = _impl.jacobi_fill


def backends():
    """Mapping of available backend name to kernel module."""
    out = {"python": _pykernels}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
