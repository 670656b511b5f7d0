"""Search-kernel backend selection.

The compiled Cython kernel (bb_cy) and the pure-Python twin (bb_py)
implement the identical algorithm and must return identical results; the
compiled one is preferred when built. STREAMPLAN_PURE=1 forces the Python
twin, e.g. for benchmarking the two against each other.
"""

import os

from .bb_py import SearchResult

if os.environ.get("STREAMPLAN_PURE"):
    from . import bb_py as _impl
else:
    try:
        from . import bb_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import bb_py as _impl  # type: ignore[no-redef]

search = _impl.search
BACKEND = _impl.BACKEND

__all__ = ["search", "SearchResult", "BACKEND"]
