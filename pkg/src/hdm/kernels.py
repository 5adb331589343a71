"""Backend selection for the assembly kernels.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Setting ``HDM_KERNELS=python`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = ["BACKEND", "available_backends", "backend", "build_pattern", "scatter_gram", "scatter_vector"]


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def backend(name: str | None = None):
    """Kernel module for ``name`` (``"cython"`` or ``"python"``), default as selected at import."""
    if name is None:
        name = BACKEND
    if name == "cython":
        if _compiled is None:
            raise ImportError("the compiled kernels are not available")
        return _compiled
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown kernel backend {name!r}")


if os.environ.get("HDM_KERNELS", "").lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def scatter_gram(Rt, stencil, indptr, indices, data, which: str | None = None):
    Rt = np.ascontiguousarray(Rt, dtype=np.float64)
    stencil = np.ascontiguousarray(stencil, dtype=np.int64)
    backend(which).scatter_gram(Rt, stencil, indptr, indices, data)


def scatter_vector(local, stencil, out, which: str | None = None):
    local = np.ascontiguousarray(local, dtype=np.float64)
    stencil = np.ascontiguousarray(stencil, dtype=np.int64)
    backend(which).scatter_vector(local, stencil, out)


def build_pattern(stencils, n: int):
    """Upper-triangular CSR pattern covering all stencil pairs.

    ``stencils`` is an iterable of ``(nb, s)`` index arrays (``-1`` padded).
    Returns ``(indptr, indices)`` as int64 arrays with sorted columns.
    """
    keys = np.empty(0, dtype=np.int64)
    for st in stencils:
        st = np.asarray(st, dtype=np.int64)
        nb, s = st.shape
        ia = np.broadcast_to(st[:, :, None], (nb, s, s))
        ib = np.broadcast_to(st[:, None, :], (nb, s, s))
        keep = (ia >= 0) & (ib >= ia)
        keys = np.union1d(keys, ia[keep] * n + ib[keep])
    rows = keys // n
    indices = (keys % n).astype(np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(rows, minlength=n))
    return indptr, indices
