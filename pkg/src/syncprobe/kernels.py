"""Kernel selection: compiled extension when present, pure twins otherwise.

Set SYNCPROBE_PURE=1 to force the pure path (used by the comparison
benchmark and to test both implementations against each other).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("SYNCPROBE_PURE") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

IMPLEMENTATION = _impl.IMPLEMENTATION

simulate_flush_chunk = _impl.simulate_flush_chunk


def _as_u8(s) -> np.ndarray:
    if isinstance(s, np.ndarray):
        return np.ascontiguousarray(s, dtype=np.uint8)
    if isinstance(s, str):
        return np.frombuffer(s.encode("utf-8"), dtype=np.uint8)
    if isinstance(s, (bytes, bytearray)):
        return np.frombuffer(bytes(s), dtype=np.uint8)
    return np.asarray(list(s), dtype=np.uint8)


def lev_distance(a, b) -> int:
    """Levenshtein edit distance (insert/delete/substitute, unit costs)."""
    return int(_impl.lev_distance(_as_u8(a), _as_u8(b)))
