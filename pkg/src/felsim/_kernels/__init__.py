"""Kernel backend selection.

The compiled Cython module is preferred; the pure numpy fallback is used
when the extension is missing. Set FELSIM_KERNELS=pure (or =compiled) to
force a backend at import time.
"""

import os

_requested = os.environ.get("FELSIM_KERNELS", "auto").strip().lower()

if _requested in ("auto", "", "compiled", "cython"):
    try:
        from . import _core as impl
        BACKEND = "compiled"
    except ImportError:
        if _requested in ("compiled", "cython"):
            raise
        from . import _pure as impl
        BACKEND = "pure"
elif _requested in ("pure", "python"):
    from . import _pure as impl
    BACKEND = "pure"
else:
    raise ImportError(f"unrecognized FELSIM_KERNELS value: {_requested!r}")

__all__ = ["impl", "BACKEND"]
