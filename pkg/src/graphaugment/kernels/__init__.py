"""Combinatorial hot loops with a compiled backend and a pure-Python fallback.

The compiled extension is preferred when importable. Setting the environment
variable ``GRAPHAUGMENT_PURE_PYTHON=1`` forces the fallback, which is also what
runs when the package was installed without a C compiler.
"""

import os

from . import _pykernels as python_backend

try:
    if os.environ.get("GRAPHAUGMENT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

bfs_order = _impl.bfs_order
automorphisms = _impl.automorphisms
find_isomorphism = _impl.find_isomorphism
greedy_matching = _impl.greedy_matching
max_lookback = _impl.max_lookback

__all__ = [
    "BACKEND",
    "automorphisms",
    "bfs_order",
    "compiled_backend",
    "find_isomorphism",
    "greedy_matching",
    "max_lookback",
    "python_backend",
]
