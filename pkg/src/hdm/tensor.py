"""Fourth-order tensors acting on d×d matrices.

A tensor ``P`` is stored as its full ``(d, d, d, d)`` coefficient array and acts
by ``(Pξ)_ij = Σ_kl p_ijkl ξ_kl``.  The model problem uses a tensor ``B`` and
``A = BᵀB``, where the transpose is taken for the Frobenius product
``ξ:φ = Σ_ij ξ_ij φ_ij``.

Coefficients are kept exactly as published.  For the identity and the plate
tensor this means ``p_ijkl`` is not invariant under swapping ``k`` and ``l``
(for instance ``b_1221 = 0`` while ``b_1212 = √(1-γ)``).  Both conventions act
identically on symmetric matrices; :meth:`FourthOrderTensor.symmetrised`
returns the minor-symmetric representative when that form is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "FourthOrderTensor",
    "apply_tensor",
    "compose_transpose",
    "double_dot",
    "make_tensor",
    "plate_a_coefficients",
    "sym_basis",
    "sym_mat",
]


def sym_mat(entries) -> np.ndarray:
    """Return ``entries`` as a float symmetric matrix.

    The input must be square with d in {2, 3}.  It is symmetrised as
    ``(ξ + ξᵀ)/2``, so an exactly symmetric input is returned unchanged.
    """
    xi = np.array(entries, dtype=float)
    if xi.ndim != 2 or xi.shape[0] != xi.shape[1] or xi.shape[0] not in (2, 3):
        raise InputError(f"expected a 2x2 or 3x3 matrix, got shape {xi.shape}")
    return 0.5 * (xi + xi.T)


def double_dot(a, b) -> np.ndarray:
    """Frobenius product ``a:b`` over the last two axes."""
    return np.einsum("...ij,...ij->...", a, b)


def sym_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of the symmetric d×d matrices, shape ``(m, d, d)``."""
    basis = []
    for i in range(dim):
        e = np.zeros((dim, dim))
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = e[j, i] = 1.0 / math.sqrt(2.0)
            basis.append(e)
    return np.array(basis)


@dataclass(frozen=True)
class FourthOrderTensor:
    """Immutable fourth-order tensor with coefficients ``coeffs[i, j, k, l]``."""

    coeffs: np.ndarray
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 4 or len(set(c.shape)) != 1 or c.shape[0] not in (2, 3):
            raise InputError(f"coefficients must have shape (d,d,d,d) with d in {{2,3}}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("tensor coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, xi):
        return apply_tensor(self, xi)

    def is_minor_symmetric(self, tol: float = 0.0) -> bool:
        """Check ``p_ijkl = p_jikl = p_ijlk`` up to ``tol``."""
        c = self.coeffs
        return bool(
            np.max(np.abs(c - c.transpose(1, 0, 2, 3)), initial=0.0) <= tol
            and np.max(np.abs(c - c.transpose(0, 1, 3, 2)), initial=0.0) <= tol
        )

    def symmetrised(self) -> "FourthOrderTensor":
        """Minor-symmetric tensor with the same action on symmetric matrices."""
        c = self.coeffs
        s = 0.25 * (c + c.transpose(1, 0, 2, 3) + c.transpose(0, 1, 3, 2) + c.transpose(1, 0, 3, 2))
        return FourthOrderTensor(s, name=f"{self.name}(sym)")

    def sym_matrix(self) -> np.ndarray:
        """Matrix of the map restricted to symmetric inputs, in :func:`sym_basis` coordinates.

        Row index runs over all d² output entries, column index over the
        symmetric basis, so singular values measure ``|Pξ|/|ξ|``.
        """
        basis = sym_basis(self.dim)
        return np.stack([apply_tensor(self, e, check_symmetric=False).ravel() for e in basis], axis=1)

    def min_gain_on_sym(self) -> float:
        """Largest ``C`` with ``|Pξ| ≥ C|ξ|`` for all symmetric ξ."""
        return float(np.linalg.svd(self.sym_matrix(), compute_uv=False).min())


def apply_tensor(T: FourthOrderTensor, xi, check_symmetric: bool = True) -> np.ndarray:
    """Apply ``T`` to one matrix or a stack of matrices (last two axes).

    With ``check_symmetric`` set, inputs must be symmetric to 1e-12 relative,
    matching the contract ``T: S_d → S_d``.  The GR reconstruction applies ``B``
    to non-symmetric matrices and passes ``check_symmetric=False``.
    """
    xi = np.asarray(xi, dtype=float)
    d = T.dim
    if xi.ndim < 2 or xi.shape[-2:] != (d, d):
        raise InputError(f"tensor of dimension {d} cannot act on shape {xi.shape}")
    if check_symmetric:
        asym = np.max(np.abs(xi - np.swapaxes(xi, -1, -2)), initial=0.0)
        if asym > 1e-12 * max(1.0, np.max(np.abs(xi), initial=0.0)):
            raise InputError("apply_tensor expects symmetric matrices")
    return np.einsum("ijkl,...kl->...ij", T.coeffs, xi)


def compose_transpose(B: FourthOrderTensor) -> FourthOrderTensor:
    """Return ``A = BᵀB`` with ``a_ijkl = Σ_mn b_mnij b_mnkl``."""
    if not isinstance(B, FourthOrderTensor):
        raise InputError("compose_transpose expects a FourthOrderTensor")
    a = np.einsum("mnij,mnkl->ijkl", B.coeffs, B.coeffs)
    return FourthOrderTensor(a, name=f"{B.name}^T {B.name}")


def _identity(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    return np.einsum("ik,jl->ijkl", eye, eye)


def make_tensor(kind: str, dim: int = 2, gamma: float | None = None) -> FourthOrderTensor:
    """Build one of the standard tensors.

    ``kind`` is ``"identity"``, ``"laplacian_trace"`` (alias ``"laplacian"``),
    for which ``Bξ = tr(ξ)/√d · Id``, or ``"plate"``, the square root of the
    two-dimensional clamped-plate tensor with Poisson ratio ``γ ∈ (0, 1/2)``.
    """
    if dim not in (2, 3):
        raise InputError(f"dimension must be 2 or 3, got {dim}")
    kind = kind.lower()
    if kind == "identity":
        return FourthOrderTensor(_identity(dim), name="identity")
    if kind in ("laplacian_trace", "laplacian", "trace"):
        eye = np.eye(dim)
        c = np.einsum("ij,kl->ijkl", eye, eye) / math.sqrt(dim)
        return FourthOrderTensor(c, name="laplacian_trace")
    if kind == "plate":
        if dim != 2:
            raise InputError("the plate tensor is defined in two dimensions only")
        if gamma is None or not (0.0 < gamma < 0.5):
            raise InputError(f"plate tensor needs 0 < gamma < 1/2, got {gamma}")
        root = math.sqrt(1.0 - gamma * gamma)
        c = np.zeros((2, 2, 2, 2))
        c[0, 0, 0, 0] = c[1, 1, 1, 1] = math.sqrt((1.0 + root) / 2.0)
        c[0, 0, 1, 1] = c[1, 1, 0, 0] = math.sqrt((1.0 - root) / 2.0)
        c[0, 1, 0, 1] = c[1, 0, 1, 0] = math.sqrt(1.0 - gamma)
        return FourthOrderTensor(c, name=f"plate({gamma:g})")
    raise InputError(f"unknown tensor kind {kind!r}")


def plate_a_coefficients(gamma: float) -> np.ndarray:
    """Published coefficients of the plate tensor ``A`` (nonzeros only).

    ``a_1111 = a_2222 = 1``, ``a_1122 = a_2211 = γ``, ``a_1212 = a_2121 = 1-γ``.
    """
    if not (0.0 < gamma < 0.5):
        raise InputError(f"plate tensor needs 0 < gamma < 1/2, got {gamma}")
    a = np.zeros((2, 2, 2, 2))
    a[0, 0, 0, 0] = a[1, 1, 1, 1] = 1.0
    a[0, 0, 1, 1] = a[1, 1, 0, 0] = gamma
    a[0, 1, 0, 1] = a[1, 0, 1, 0] = 1.0 - gamma
    return a
