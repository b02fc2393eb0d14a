"""Kernel backend selection.

The compiled extension ``qcs._ckernels`` is used when it is importable;
otherwise the numpy versions in ``qcs._kernels_py`` are used.  Setting the
environment variable ``QCS_PURE_PYTHON=1`` forces the fallback.

``BACKEND`` names the active implementation ("cython" or "python").
"""
import os

from . import _kernels_py

_NAMES = ("quantize_levels", "pack_bits", "unpack_bits", "sparse_matvec", "sparse_rmatvec")


def _load():
    if os.environ.get("QCS_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _kernels_py, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()

quantize_levels = _impl.quantize_levels
pack_bits = _impl.pack_bits
unpack_bits = _impl.unpack_bits
sparse_matvec = _impl.sparse_matvec
sparse_rmatvec = _impl.sparse_rmatvec


def backends():
    """Return every importable backend as a ``{name: module}`` dict."""
    found = {"python": _kernels_py}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found


__all__ = ["BACKEND", "backends", *_NAMES]
