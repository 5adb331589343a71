"""Pure NumPy implementation of the assembly kernels (fallback backend)."""

from __future__ import annotations

import numpy as np


def scatter_gram(Rt, stencil, indptr, indices, data):
    """Add local Gram matrices into an upper-triangular CSR pattern in place.

    Parameters
    ----------
    Rt : float64 array (nb, s, m)
        Per-cell local operators, one row per stencil entry, already scaled by
        the square roots of the quadrature weights.  The local Gram matrix is
        ``Rt[c] @ Rt[c].T``.
    stencil : int64 array (nb, s)
        Global row index of each local entry, ``-1`` for padding.
    indptr, indices : int64 arrays
        CSR pattern of the upper triangle with sorted column indices.
    data : float64 array
        Values of the pattern, updated in place.
    """
    nb, s, _ = Rt.shape
    if nb == 0:
        return
    L = np.matmul(Rt, Rt.transpose(0, 2, 1))
    ia = np.broadcast_to(stencil[:, :, None], (nb, s, s))
    ib = np.broadcast_to(stencil[:, None, :], (nb, s, s))
    keep = (ia >= 0) & (ib >= ia)
    rows, cols, vals = ia[keep], ib[keep], L[keep]
    pos = _positions(rows, cols, indptr, indices)
    data += np.bincount(pos, weights=vals, minlength=len(data))


def _positions(rows, cols, indptr, indices):
    n = len(indptr) - 1
    row_of = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    keys = row_of * n + indices
    want = rows.astype(np.int64) * n + cols
    pos = np.searchsorted(keys, want)
    if np.any(pos >= len(keys)) or np.any(keys[np.minimum(pos, len(keys) - 1)] != want):
        raise ValueError("local entry outside the sparsity pattern")
    return pos


def scatter_vector(local, stencil, out):
    """Add ``local`` (nb, s) into ``out`` at the stencil positions."""
    keep = stencil >= 0
    out += np.bincount(stencil[keep], weights=local[keep], minlength=len(out))
