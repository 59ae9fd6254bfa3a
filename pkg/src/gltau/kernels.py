"""Backend selection for the stepping kernels.

The compiled extension is used when it imports; ``GLTAU_PURE_PYTHON=1``
forces the numpy fallback.  Both expose ``expm_batch``, ``elliptic_combine``,
``expm_update`` and ``euler_update`` with identical signatures.
"""
import os

from . import _kernels_py

if os.environ.get("GLTAU_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
expm_batch = _impl.expm_batch
elliptic_combine = _impl.elliptic_combine
expm_update = _impl.expm_update
euler_update = _impl.euler_update

__all__ = ["BACKEND", "expm_batch", "elliptic_combine", "expm_update", "euler_update", "get_backend"]


def get_backend(name=None):
    """Return the kernel module called ``name`` ("compiled" or "python"), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
