"""Selects the kernel backend at import time.

The compiled extension is used when it imported cleanly; otherwise the
NumPy fallback takes over. Set ``ZOPROX_BACKEND=python`` to force the
fallback (useful for debugging and for benchmarking the two against each
other), or ``ZOPROX_BACKEND=compiled`` to fail loudly when the extension
is missing instead of silently degrading.
"""

import os

from . import _kernels_py

_CHOICES = ("auto", "compiled", "python")


def _select():
    requested = os.environ.get("ZOPROX_BACKEND", "auto").strip().lower() or "auto"
    if requested not in _CHOICES:
        raise ValueError(
            f"ZOPROX_BACKEND must be one of {_CHOICES}, got {requested!r}"
        )
    if requested == "python":
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        if requested == "compiled":
            raise ImportError(
                "ZOPROX_BACKEND=compiled but the zoprox._kernels extension "
                "is not built; reinstall with a working C toolchain"
            ) from None
        return _kernels_py, "python"
    return _kernels, "compiled"


kernels, BACKEND = _select()


def active_backend():
    """Name of the kernel backend in use: ``"compiled"`` or ``"python"``."""
    return BACKEND
