"""Sparse symmetric positive-definite systems and generalized Rayleigh quotients.

The matrix of a :class:`SparseSpdSystem` is stored as its upper triangle, so
the full matrix is symmetric by construction.  Factorisation uses SuperLU in
symmetric mode with diagonal pivoting only, which for an SPD matrix is a
Cholesky-type ``LDLᵀ`` elimination; a non-positive pivot is reported as a
breakdown.  Conjugate gradients is the fallback when the direct route runs out
of memory or is explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InputError, NumericalError

__all__ = [
    "SolveInfo",
    "SparseSpdSystem",
    "SpdFactor",
    "attainable_residual",
    "gen_eig_max",
    "residual",
    "solve_spd",
]

RESIDUAL_TOL = 1e-10
#: A solve is rejected only above ``max(RESIDUAL_TOL, FLOOR_FACTOR * attainable)``.
FLOOR_FACTOR = 10.0


class SpdFactor:
    """Sparse ``LDLᵀ``-type factorisation of an SPD matrix with a positivity check."""

    def __init__(self, matrix):
        A = sp.csc_matrix(matrix, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise InputError(f"matrix must be square, got {A.shape}")
        self.matrix = A
        self.n = A.shape[0]
        if self.n == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NumericalError(f"factorisation breakdown: {exc}") from exc
        pivots = self._lu.U.diagonal()
        bad = np.flatnonzero(~(pivots > 0))
        if bad.size:
            original = int(np.argsort(self._lu.perm_c)[bad[0]])
            raise NumericalError(
                f"matrix is not positive definite: pivot {int(bad[0])} "
                f"(row {original}) equals {pivots[bad[0]]:.3e}"
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        return self._lu.solve(b)


class SparseSpdSystem:
    """Symmetric positive-definite system ``A x = b``.

    Parameters
    ----------
    upper : sparse matrix
        Upper triangle of ``A`` including the diagonal.  Entries below the
        diagonal are rejected.
    rhs : array
        Right-hand side; may be two-dimensional for several right-hand sides.
    """

    def __init__(self, upper, rhs):
        U = sp.csr_matrix(upper, dtype=float)
        n = U.shape[0]
        if U.shape != (n, n):
            raise InputError(f"matrix must be square, got {U.shape}")
        if sp.tril(U, k=-1).nnz:
            raise InputError("only the upper triangle may be stored")
        U.sum_duplicates()
        U.sort_indices()
        self.upper = U
        self.rhs = np.asarray(rhs, dtype=float)
        if self.rhs.shape[0] != n:
            raise InputError(f"right-hand side has length {self.rhs.shape[0]}, expected {n}")
        self.n = n
        self._full = None
        self._factor = None

    @classmethod
    def from_full(cls, matrix, rhs) -> "SparseSpdSystem":
        """Build from a full symmetric matrix, keeping its upper triangle."""
        return cls(sp.triu(sp.csr_matrix(matrix)), rhs)

    @property
    def matrix(self) -> sp.csr_matrix:
        """Full symmetric matrix ``U + Uᵀ - diag(U)``."""
        if self._full is None:
            U = self.upper
            full = (U + U.T - sp.diags(U.diagonal())).tocsr()
            full.sort_indices()
            self._full = full
        return self._full

    @property
    def nnz(self) -> int:
        """Stored entries of the full matrix: diagonal once, off-diagonals twice.

        Explicitly stored zeros count, so the fill reflects the sparsity
        pattern rather than the values.
        """
        U = self.upper
        rows = np.repeat(np.arange(self.n), np.diff(U.indptr))
        diag = int(np.count_nonzero(rows == U.indices))
        return 2 * (U.nnz - diag) + diag

    def factor(self) -> SpdFactor:
        """Factorise once and cache; raises :class:`NumericalError` if not PD."""
        if self._factor is None:
            self._factor = SpdFactor(self.matrix)
        return self._factor

    def with_rhs(self, rhs) -> "SparseSpdSystem":
        """Same matrix (and cached factorisation) with another right-hand side."""
        other = SparseSpdSystem.__new__(SparseSpdSystem)
        other.upper, other.n = self.upper, self.n
        other.rhs = np.asarray(rhs, dtype=float)
        if other.rhs.shape[0] != self.n:
            raise InputError(f"right-hand side has length {other.rhs.shape[0]}, expected {self.n}")
        other._full, other._factor = self._full, self._factor
        return other


def residual(A, x, b) -> np.ndarray:
    """``b - Ax`` accumulated in extended precision, rounded to float64."""
    A = sp.csr_matrix(A)
    prod = A.data.astype(np.longdouble) * np.asarray(x, dtype=np.longdouble)[A.indices]
    Ax = np.zeros(A.shape[0], dtype=np.longdouble)
    nonempty = np.diff(A.indptr) > 0
    if prod.size:
        Ax[nonempty] = np.add.reduceat(prod, A.indptr[:-1][nonempty])
    return (np.asarray(b, dtype=np.longdouble) - Ax).astype(float)


def attainable_residual(A, x, b) -> float:
    """Relative residual that rounding ``x`` to float64 alone can produce.

    ``ε ‖ |A| |x| ‖ / ‖b‖``; no double-precision vector can be expected to do
    better than a small multiple of this.
    """
    nb = np.linalg.norm(b)
    floor = np.finfo(float).eps * np.linalg.norm(abs(sp.csr_matrix(A)) @ np.abs(x))
    return float(floor / nb) if nb > 0 else float(floor)


@dataclass(frozen=True)
class SolveInfo:
    """Outcome of :func:`solve_spd`.

    ``relative_residual`` is ``‖b − Ax‖/‖b‖``; ``attainable`` is the float64
    floor from :func:`attainable_residual`; ``within_tol`` says whether the
    residual met :data:`RESIDUAL_TOL`.
    """

    method: str
    relative_residual: float
    attainable: float
    refinement_steps: int

    @property
    def within_tol(self) -> bool:
        return self.relative_residual <= RESIDUAL_TOL


def _relative_residual(A, x, b):
    r = residual(A, x, b)
    nb = np.linalg.norm(b)
    return (np.linalg.norm(r) / nb if nb > 0 else np.linalg.norm(r)), r


def _accept(A, x, b, res, method, steps):
    floor = attainable_residual(A, x, b)
    if res > max(RESIDUAL_TOL, FLOOR_FACTOR * floor):
        raise NumericalError(
            f"{method} solve: relative residual {res:.3e} exceeds {RESIDUAL_TOL:.0e} "
            f"and the float64 floor {floor:.3e}"
        )
    return SolveInfo(method, float(res), floor, steps)


def _solve_cg(A, b, rtol=1e-12, maxiter=None):
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NumericalError(f"non-positive diagonal entry at row {int(np.argmax(diag <= 0))}")
    M = sp.diags(1.0 / diag)
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter or 50 * n, M=M)
    res, _ = _relative_residual(A, x, b)
    if info != 0 and res > RESIDUAL_TOL:
        raise NumericalError(f"conjugate gradients did not converge: relative residual {res:.3e}")
    return x, res


def solve_spd(system: SparseSpdSystem, method: str = "auto", return_info: bool = False):
    """Solve the system, aiming at ``‖b − Ax‖ ≤ 1e-10 ‖b‖``.

    ``method`` is ``"direct"``, ``"cg"`` or ``"auto"`` (direct, then CG when the
    factorisation runs out of memory).  The direct solution gets up to three
    steps of iterative refinement with residuals accumulated in extended
    precision.  On fine meshes of fourth-order problems the bound can lie below
    what any float64 vector attains; the solve is then accepted when the
    residual is within a small factor of that floor, and :class:`SolveInfo`
    (returned with ``return_info=True``) records both numbers.
    """
    A, b = system.matrix, system.rhs
    if method not in ("auto", "direct", "cg"):
        raise InputError(f"unknown solve method {method!r}")
    if system.n == 0 or not np.any(b):
        x = np.zeros_like(b)
        return (x, SolveInfo(method, 0.0, 0.0, 0)) if return_info else x
    if method == "cg":
        x, res = _solve_cg(A, b)
        info = _accept(A, x, b, res, "cg", 0)
        return (x, info) if return_info else x
    try:
        factor = system.factor()
    except MemoryError:
        if method == "direct":
            raise
        x, res = _solve_cg(A, b)
        info = _accept(A, x, b, res, "cg", 0)
        return (x, info) if return_info else x
    x = factor.solve(b)
    res, r = _relative_residual(A, x, b)
    steps = 0
    while res > RESIDUAL_TOL and steps < 3:
        x_new = x + factor.solve(r)
        res_new, r_new = _relative_residual(A, x_new, b)
        steps += 1
        if res_new >= res:
            break
        x, res, r = x_new, res_new, r_new
    info = _accept(A, x, b, res, "direct", steps)
    return (x, info) if return_info else x


def gen_eig_max(M, G, factor: SpdFactor | None = None, tol: float = 1e-10,
                maxiter: int = 10000, seed: int = 0) -> float:
    """Largest eigenvalue of ``M w = λ G w`` by power iteration on ``G⁻¹M``.

    ``M`` must be symmetric positive semi-definite and ``G`` symmetric positive
    definite.  Iteration stops when the Rayleigh quotient changes by less than
    ``tol`` relative.  A prebuilt factorisation of ``G`` may be passed in.
    """
    M = sp.csr_matrix(M, dtype=float)
    G = G.matrix if isinstance(G, SparseSpdSystem) else sp.csr_matrix(G, dtype=float)
    n = G.shape[0]
    if M.shape != (n, n):
        raise InputError(f"shape mismatch: M {M.shape}, G {G.shape}")
    if n == 0:
        raise InputError("empty matrices have no eigenvalues")
    if factor is None:
        factor = SpdFactor(G)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n)
    w /= np.sqrt(w @ (G @ w))
    lam_old = np.nan
    for it in range(maxiter):
        Mw = M @ w
        lam = float(w @ Mw)
        if lam == 0.0 and it > 0:
            return 0.0
        if it > 0 and abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
        z = factor.solve(Mw)
        nz = np.sqrt(max(z @ (G @ z), 0.0))
        if nz == 0.0:
            return 0.0
        w = z / nz
    raise NumericalError(
        f"power iteration did not converge in {maxiter} iterations (last iterates {lam_old:.12g}, {lam:.12g})"
    )
