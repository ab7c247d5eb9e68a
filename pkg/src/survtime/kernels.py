"""Kernel dispatch: compiled extension when built, NumPy fallback otherwise.

Set ``SURVTIME_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("SURVTIME_PURE_PYTHON", "").strip() not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

logrank_scan = _impl.logrank_scan
apply_tree = _impl.apply_tree
concordance_counts = _impl.concordance_counts

__all__ = ["BACKEND", "logrank_scan", "apply_tree", "concordance_counts"]
