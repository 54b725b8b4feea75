"""Select the kernel implementation at import time.

The compiled extension is preferred; setting ``PROPCI_PURE_PYTHON=1``
forces the pure-Python fallback.
"""
import os

kernels = None
if not os.environ.get("PROPCI_PURE_PYTHON"):
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = None
if kernels is None:
    from . import _kernels_py as kernels

COMPILED = bool(getattr(kernels, "COMPILED", False))
