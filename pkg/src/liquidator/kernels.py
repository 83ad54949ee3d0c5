"""Backend selection for the path-stepping kernels.

The compiled module is used when it was built and ``LIQUIDATOR_PURE_PYTHON``
is unset; otherwise the numpy fallback is used. ``BACKEND`` names the choice.
"""

import os

from . import _kernels_py

_force_python = os.environ.get("LIQUIDATOR_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-python backend requested")
    from . import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

linear_paths = _impl.linear_paths
lob_paths = _impl.lob_paths
OUT_COLUMNS = _kernels_py.OUT_COLUMNS


def get_backend(name: str):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
