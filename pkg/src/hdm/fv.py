"""Finite-volume Hessian discretisation on Δ-adapted meshes.

One unknown per cell, with ``u_K = 0`` on every cell that has a boundary face.
The reconstructions are cellwise constant:

* ``Π_D u = u_K`` on ``K``;
* ``∇_K u = (1/|K|) Σ_σ |σ| δ_{K,σ}u (x_σ − x_K)/d_σ``;
* ``Δ_K u = (1/|K|) Σ_σ |σ| δ_{K,σ}u / d_σ`` and ``H_D^B u = (Δ_D u/√d) Id``,

with ``δ_{K,σ}u = u_L − u_K`` on interior faces and zero on boundary faces.
The tensor is fixed to ``B = tr(·)/√d · Id``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .core import CellBlock, DofReport, HessianDiscretisation, localize, stencils_from_pattern
from .errors import ConfigurationError, InputError
from .mesh import PolytopalMesh, validate_delta_adapted
from .tensor import FourthOrderTensor, make_tensor

__all__ = [
    "FvDiscretisation",
    "build_fv_hd",
    "discrete_gradient",
    "discrete_laplacian",
    "fv_inner_product",
]


class NotDeltaAdaptedError(ConfigurationError):
    """Raised by :func:`build_fv_hd`; carries the validation report."""

    def __init__(self, report):
        self.report = report
        super().__init__("mesh is not Δ-adapted\n" + report.summary())


class FvDiscretisation(HessianDiscretisation):
    """Δ-adapted finite-volume Hessian discretisation.

    Attributes
    ----------
    constrained : bool array (n_cells,)
        True for cells with a boundary face.
    dof_of_cell : int array (n_cells,)
        Free-DOF index of each cell, ``-1`` when constrained.
    transmissibility : float array (n_faces,)
        ``|σ|/d_σ``.
    """

    default_convention = "fv_midpoint"

    def __init__(self, mesh: PolytopalMesh, tensor: FourthOrderTensor, report=None):
        self.mesh = mesh
        self.tensor = tensor
        self.report = report
        nc = mesh.n_cells
        self.constrained = mesh.cell_touches_boundary()
        free = ~self.constrained
        self.dof_of_cell = -np.ones(nc, dtype=np.int64)
        self.dof_of_cell[free] = np.arange(free.sum())
        self.free_cells = np.flatnonzero(free)
        self.n_dofs = int(free.sum())
        self.dof_report = DofReport(total=nc, constrained=int(self.constrained.sum()), free=self.n_dofs)
        with np.errstate(divide="ignore"):
            self.transmissibility = mesh.face_measure / mesh.face_d
        self._build_operators()

    def _build_operators(self):
        mesh, n = self.mesh, self.n_dofs
        nc = mesh.n_cells
        inner = mesh.interior_faces
        K, L = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
        dK, dL = self.dof_of_cell[K], self.dof_of_cell[L]
        # Face jumps δ_σ u = u_{K⁺} − u_{K⁻} on interior faces, zero on the boundary.
        rows = np.r_[inner, inner]
        cols = np.r_[dL, dK]
        vals = np.r_[np.ones(len(inner)), -np.ones(len(inner))]
        keep = cols >= 0
        self.jump = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(mesh.n_faces, n))
        # Cell-face incidence: δ_{K,σ} = sign·δ_σ where sign = +1 when K = K⁻.
        owners = np.repeat(np.arange(nc), mesh.cell_nverts)
        faces = mesh.cell_face_idx
        sign = mesh.cell_face_sign
        tr = self.transmissibility[faces]
        tr = np.where(mesh.face_cells[faces, 1] >= 0, tr, 0.0)
        inc = sp.csr_matrix((sign * tr, (owners, faces)), shape=(nc, mesh.n_faces))
        inv_area = sp.diags(1.0 / mesh.cell_measure)
        self.laplacian_op = (inv_area @ inc @ self.jump).tocsr()
        lever = mesh.face_centroid[faces] - mesh.collocation[owners]
        self.gradient_ops = []
        for k in range(2):
            inc_k = sp.csr_matrix((sign * tr * lever[:, k], (owners, faces)), shape=(nc, mesh.n_faces))
            self.gradient_ops.append((inv_area @ inc_k @ self.jump).tocsr())
        fc = self.free_cells
        self.value_op = sp.csr_matrix((np.ones(len(fc)), (fc, np.arange(len(fc)))), shape=(nc, n))
        pattern = abs(self.value_op) + abs(self.laplacian_op) + abs(self.gradient_ops[0]) + abs(self.gradient_ops[1])
        self._cell_pattern = pattern.tocsr()

    # -- discrete operators ------------------------------------------------

    def discrete_gradient(self, u) -> np.ndarray:
        u = self._check(u)
        return np.stack([op @ u for op in self.gradient_ops], 1)

    def discrete_laplacian(self, u) -> np.ndarray:
        return self.laplacian_op @ self._check(u)

    def inner_product(self, u, v) -> float:
        """``[u, v] = Σ_σ |σ| δ_σu δ_σv / d_σ``."""
        du, dv = self.jump @ self._check(u), self.jump @ self._check(v)
        tr = np.where(self.mesh.face_cells[:, 1] >= 0, self.transmissibility, 0.0)
        return float(np.sum(tr * du * dv))

    def cell_values(self, u) -> np.ndarray:
        """Values ``u_K`` on all cells (zero on constrained cells)."""
        return self.value_op @ self._check(u)

    def interpolate(self, fn) -> np.ndarray:
        """DOF vector of ``fn`` sampled at the collocation points of free cells."""
        return np.asarray(fn(self.mesh.collocation[self.free_cells]), dtype=float)

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dofs,):
            raise InputError(f"DOF vector has shape {u.shape}, expected ({self.n_dofs},)")
        return u

    # -- tables ------------------------------------------------------------

    def blocks(self, rule: str = "fine", block_size: int | None = None):
        """One point per cell, the centroid with weight ``|K|``; ``rule`` is irrelevant."""
        mesh, n, d = self.mesh, self.n_dofs, 2
        nc = mesh.n_cells
        block_size = block_size or 65536
        scale = 1.0 / math.sqrt(d)
        for start in range(0, nc, block_size):
            cells = np.arange(start, min(nc, start + block_size))
            stencil = stencils_from_pattern(self._cell_pattern, cells)
            val, lap, gx, gy = localize(
                [self.value_op, self.laplacian_op, self.gradient_ops[0], self.gradient_ops[1]], cells, stencil, n
            )
            nb, s = stencil.shape
            hess = np.zeros((nb, 1, d, d, s))
            hess[:, 0, 0, 0] = hess[:, 0, 1, 1] = scale * lap
            yield CellBlock(
                cells=cells,
                stencil=stencil,
                weights=mesh.cell_measure[cells][:, None],
                points=mesh.cell_centroid[cells][:, None, :],
                pi=val[:, None, :],
                grad=np.stack([gx, gy], 1)[:, None],
                hess=hess,
            )


def build_fv_hd(mesh: PolytopalMesh, tensor: FourthOrderTensor | None = None, tol: float = 1e-10) -> FvDiscretisation:
    """Build the finite-volume Hessian discretisation on a Δ-adapted mesh.

    Raises :class:`~hdm.errors.ConfigurationError` if the mesh fails
    :func:`~hdm.mesh.validate_delta_adapted` or if ``tensor`` is not the
    Laplacian trace tensor.
    """
    expected = make_tensor("laplacian_trace", dim=2)
    if tensor is None:
        tensor = expected
    elif tensor.dim != 2 or not np.allclose(tensor.coeffs, expected.coeffs, rtol=0, atol=1e-14):
        raise ConfigurationError("the finite-volume discretisation is defined only for B = tr(·)/√d Id")
    report = validate_delta_adapted(mesh, tol=tol)
    if not report.is_valid:
        raise NotDeltaAdaptedError(report)
    return FvDiscretisation(mesh, tensor, report)


def discrete_gradient(fv: FvDiscretisation, u) -> np.ndarray:
    """Cellwise constant discrete gradient, shape ``(n_cells, 2)``."""
    return fv.discrete_gradient(u)


def discrete_laplacian(fv: FvDiscretisation, u) -> np.ndarray:
    """Cellwise constant discrete Laplacian, shape ``(n_cells,)``."""
    return fv.discrete_laplacian(u)


def fv_inner_product(fv: FvDiscretisation, u, v) -> float:
    """Discrete ``H¹₀``-type inner product ``[u, v]``."""
    return fv.inner_product(u, v)
