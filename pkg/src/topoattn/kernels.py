"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``TOPOATTN_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from topoattn import _fallback

if os.environ.get("TOPOATTN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from topoattn import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

sharpen_rows = _impl.sharpen_rows
binary_dilate = _impl.binary_dilate
binary_erode = _impl.binary_erode
binary_close = _impl.binary_close

__all__ = ["BACKEND", "sharpen_rows", "binary_dilate", "binary_erode", "binary_close"]
