"""Kernel backend selection.

The compiled Cython core is used when it imports; otherwise the numpy
fallback. ``ADMMNET_BACKEND=python`` forces the fallback and
``ADMMNET_BACKEND=cython`` makes a missing extension an error.
"""

import os

from . import _fallback

_choice = os.environ.get("ADMMNET_BACKEND", "auto").lower()
if _choice not in ("auto", "cython", "python"):
    raise ImportError(f"ADMMNET_BACKEND must be auto, cython or python, not {_choice!r}")

kernels = _fallback
name = "python"
if _choice != "python":
    try:
        from . import _kernels
    except ImportError:
        if _choice == "cython":
            raise
    else:
        kernels = _kernels
        name = "cython"

BACKENDS = {"python": _fallback}
if name == "cython":
    BACKENDS["cython"] = kernels


def get(backend=None):
    """Kernel module by name (``None`` means the import-time default)."""
    if backend is None:
        return kernels
    try:
        return BACKENDS[backend]
    except KeyError:
        raise ValueError(f"backend {backend!r} is not available; have {sorted(BACKENDS)}") from None
