"""Kernel backend selection: compiled Cython kernels with a numpy fallback.

The compiled module is optional; when it is missing the numpy implementation
is used transparently. ``SVDSTREAM_BACKEND=python|compiled|auto`` forces the
choice at import time, and ``set_backend`` switches at runtime (used by the
benchmark to compare both on identical streams).
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_FORCED = os.environ.get("SVDSTREAM_BACKEND", "auto").lower()
if _FORCED not in ("auto", "compiled", "python"):
    raise ValueError(
        f"SVDSTREAM_BACKEND must be auto, compiled or python, got {_FORCED!r}"
    )
if _FORCED == "compiled" and _compiled is None:
    raise ImportError("SVDSTREAM_BACKEND=compiled but svdstream._kernels is not built")

_impl = _compiled if (_compiled is not None and _FORCED != "python") else _kernels_py


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def active_backend() -> str:
    return "compiled" if _impl is _compiled else "python"


def set_backend(name: str) -> None:
    """Switch kernel implementation at runtime: 'compiled', 'python' or 'auto'."""
    global _impl
    if name == "python":
        _impl = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise ValueError("compiled kernels are not built")
        _impl = _compiled
    elif name == "auto":
        _impl = _compiled if _compiled is not None else _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")


def core_svd(core):
    return _impl.core_svd(core)


def row_append(u, s, vt, x, tol, keep):
    return _impl.row_append(u, s, vt, x, tol, keep)


def rank_one(u, s, vt, i, j, delta, keep):
    return _impl.rank_one(u, s, vt, i, j, delta, keep)
