"""Gradient-recovery Hessian discretisation with conforming P1 elements.

Unknowns are the values at interior vertices of a triangulation.  The
reconstructions are

* ``Π_D u = u``, the P1 function;
* ``∇_D u = Q_h∇u``, the oblique projection of the piecewise constant gradient
  onto continuous P1 vector fields, ``Q_h g = Σ_i (∫ψ_i g / c_i) φ_i``, built
  from a dual basis ``ψ_i`` biorthogonal to the hat functions;
* ``H_D^B u = B[∇(Q_h∇u) + 𝔖_h e ⊗ (Q_h∇u − ∇u)]`` with ``𝔖_h`` the
  stabilisation field equal to ``r`` on the three corner subtriangles of each
  cell and ``−3r`` on the middle one.

The dual basis near the boundary is modified so that ψ_i only involves interior
vertices.  ``"relocate"`` moves the dual function of each boundary vertex onto
the closest fully interior triangle; ``"elementwise"`` rebuilds the dual basis
locally in every triangle that has a boundary vertex.

Quadrature works per subtriangle.  The ``"fine"`` rule uses a degree-5 rule on
each of the four subtriangles; the ``"gram"`` rule uses the three edge
midpoints of each subtriangle, which is exact for the products of discrete
fields (the Hessian is linear on each subtriangle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .core import CellBlock, DofReport, HessianDiscretisation, block_size_for, localize, stencils_from_pattern
from .errors import ConfigurationError, InputError
from .mesh import PolytopalMesh
from .tensor import FourthOrderTensor, make_tensor

__all__ = [
    "BiorthDual",
    "GrDiscretisation",
    "P1Space",
    "StabField",
    "STAB_BASE",
    "apply_Qh",
    "build_biorth_dual",
    "build_gr_hd",
    "build_p1_space",
    "build_stab_field",
    "lagrange_interpolate",
    "subtriangle_rule",
]

#: Base values of the stabilisation field on the corner subtriangles and the middle one.
STAB_BASE = np.array([1.0, 1.0, 1.0, -3.0])

#: Reference dual basis ``ψ̂_a = 4λ_a − 1`` in barycentric coefficients (row a).
DUAL_REF = 4.0 * np.eye(3) - np.ones((3, 3))

# Linear dual functions in a cell with two interior vertices a1, a2 (third
# vertex a3 on the boundary): biorthogonal to the two hats and summing to one.
_TWO_INNER = np.array([2.5, -1.5, 0.5])


def _degree5_rule():
    s = math.sqrt(15.0)
    a1, b1 = (9 - 2 * s) / 21, (6 + s) / 21
    a2, b2 = (9 + 2 * s) / 21, (6 - s) / 21
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9 / 40]
    for a, b, w in ((a1, b1, (155 + s) / 1200), (a2, b2, (155 - s) / 1200)):
        pts += [(a, b, b), (b, a, b), (b, b, a)]
        wts += [w] * 3
    return np.array(pts), np.array(wts)


_MIDPOINT_RULE = (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]), np.full(3, 1 / 3))


def subtriangle_rule(rule: str = "fine"):
    """Quadrature on the reference cell split at the edge midpoints.

    Returns ``(bary, weights, sub)``: barycentric coordinates in the parent
    cell ``(q, 3)``, weights summing to one ``(q,)`` and the subtriangle index
    ``(q,)`` (0, 1, 2 for the corners, 3 for the middle).  ``"refined"``
    applies the degree-5 rule on a second midpoint split of every subtriangle;
    it only serves to check that ``"fine"`` resolves the exact solutions.
    """
    if rule in ("fine", "refined"):
        ref, w = _degree5_rule()
    elif rule == "gram":
        ref, w = _MIDPOINT_RULE
    else:
        raise InputError(f"unknown quadrature rule {rule!r}")
    if rule == "refined":
        parts = [np.stack(c) for c in _midpoint_split(np.eye(3))]
        ref = np.concatenate([ref @ P for P in parts])
        w = np.tile(w, 4) / 4
    bary, wts, idx = [], [], []
    for k, corners in enumerate(_midpoint_split(np.eye(3))):
        bary.append(ref @ np.stack(corners))
        wts.append(w / 4)
        idx.append(np.full(len(w), k))
    return np.concatenate(bary), np.concatenate(wts), np.concatenate(idx)


def _midpoint_split(c):
    """Corners of the four subtriangles of the triangle with corners ``c``."""
    m01, m12, m20 = (c[0] + c[1]) / 2, (c[1] + c[2]) / 2, (c[2] + c[0]) / 2
    return [(c[0], m01, m20), (m01, c[1], m12), (m20, m12, c[2]), (m01, m12, m20)]


# -- P1 space ---------------------------------------------------------------


class P1Space:
    """Conforming P1 space on a triangulation, zero on the boundary.

    Attributes
    ----------
    tri : int array (n_cells, 3)
    dof_of_vertex : int array (n_vertices,), ``-1`` on boundary vertices
    interior_vertices : int array (n_dofs,)
    area : float array (n_cells,)
    grad_lambda : float array (n_cells, 3, 2), gradients of the barycentric coordinates
    """

    def __init__(self, mesh: PolytopalMesh):
        if not mesh.is_simplicial or mesh.cell_vertices.shape[1] != 3:
            raise InputError("the P1 space needs a triangulation")
        self.mesh = mesh
        self.tri = np.asarray(mesh.cell_vertices[:, :3], dtype=np.int64)
        bnd = mesh.boundary_vertex
        self.dof_of_vertex = -np.ones(mesh.n_vertices, dtype=np.int64)
        self.interior_vertices = np.flatnonzero(~bnd)
        self.dof_of_vertex[self.interior_vertices] = np.arange(len(self.interior_vertices))
        self.n_dofs = len(self.interior_vertices)
        P = mesh.vertices[self.tri]
        J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)
        self.area = 0.5 * np.abs(np.linalg.det(J))
        Jinv = np.linalg.inv(J)
        gl = np.empty((mesh.n_cells, 3, 2))
        gl[:, 1], gl[:, 2] = Jinv[:, 0], Jinv[:, 1]
        gl[:, 0] = -gl[:, 1] - gl[:, 2]
        self.grad_lambda = gl
        self.corner_dofs = self.dof_of_vertex[self.tri]

    @property
    def n_cells(self) -> int:
        return len(self.tri)

    def corner_operator(self) -> sp.csr_matrix:
        """``(3·n_cells, n_dofs)`` map from DOFs to per-cell vertex values."""
        d = self.corner_dofs.ravel()
        keep = d >= 0
        return sp.csr_matrix(
            (np.ones(keep.sum()), (np.flatnonzero(keep), d[keep])), shape=(3 * self.n_cells, self.n_dofs)
        )

    def gradient_operators(self) -> list:
        """Cellwise constant gradient components, two ``(n_cells, n_dofs)`` matrices."""
        d = self.corner_dofs.ravel()
        keep = d >= 0
        rows = np.repeat(np.arange(self.n_cells), 3)[keep]
        return [
            sp.csr_matrix((self.grad_lambda[:, :, k].ravel()[keep], (rows, d[keep])), shape=(self.n_cells, self.n_dofs))
            for k in range(2)
        ]

    def full_values(self, u) -> np.ndarray:
        """Vertex values on all vertices (zero on the boundary)."""
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_dofs:
            raise InputError(f"DOF vector has length {u.shape[0]}, expected {self.n_dofs}")
        out = np.zeros((self.mesh.n_vertices,) + u.shape[1:])
        out[self.interior_vertices] = u
        return out

    def locate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Containing cell and barycentric coordinates of points ``(..., 2)``."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        tree = cKDTree(self.mesh.cell_centroid)
        k = min(12, self.n_cells)
        _, cand = tree.query(flat, k=k)
        cand = np.atleast_2d(cand).reshape(len(flat), k)
        P = self.mesh.vertices[self.tri]
        best_cell = np.zeros(len(flat), dtype=np.int64)
        best_bary = np.zeros((len(flat), 3))
        best_min = np.full(len(flat), -np.inf)
        for j in range(k):
            c = cand[:, j]
            A = np.stack([P[c, 1] - P[c, 0], P[c, 2] - P[c, 0]], axis=2)
            l12 = np.linalg.solve(A, (flat - P[c, 0])[..., None])[..., 0]
            bary = np.column_stack([1 - l12.sum(1), l12])
            worst = bary.min(1)
            better = worst > best_min + 1e-14
            best_cell[better], best_bary[better], best_min[better] = c[better], bary[better], worst[better]
        if np.any(best_min < -1e-10):
            raise InputError("points outside the mesh")
        return best_cell.reshape(x.shape[:-1]), best_bary.reshape(x.shape[:-1] + (3,))

    def evaluate(self, u, x) -> np.ndarray:
        """Value of the P1 function with DOFs ``u`` at points ``x``."""
        cells, bary = self.locate(x)
        vals = self.full_values(u)[self.tri[cells]]
        return np.einsum("...a,...a->...", bary, vals)


def build_p1_space(mesh: PolytopalMesh) -> P1Space:
    """P1 space with one DOF per interior vertex."""
    return P1Space(mesh)


def lagrange_interpolate(space: P1Space, fn) -> np.ndarray:
    """Values of ``fn`` at the interior vertices."""
    return np.asarray(fn(space.mesh.vertices[space.interior_vertices]), dtype=float)


# -- dual basis -------------------------------------------------------------


@dataclass
class BiorthDual:
    """Dual basis ``ψ_i|_K = Σ_b D[i, 3K+b] λ_b`` and the constants ``c_i = ∫ψ_i φ_i``."""

    space: P1Space
    strategy: str
    D: sp.csr_matrix
    c: np.ndarray

    def cell_mass(self) -> sp.csr_matrix:
        """Block-diagonal ``∫_K λ_a λ_b`` over all cells, ``(3nc, 3nc)``."""
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        return sp.kron(sp.diags(self.space.area), local, format="csr")

    def biorthogonality_matrix(self) -> sp.csr_matrix:
        """``[∫ψ_i φ_j]_{ij}``; diagonal for a valid dual basis."""
        return (self.D @ self.cell_mass() @ self.space.corner_operator()).tocsr()

    def psi_sums(self) -> np.ndarray:
        """Per cell, the barycentric coefficients of ``Σ_i ψ_i``, shape ``(nc, 3)``."""
        return np.asarray(self.D.sum(axis=0)).reshape(-1, 3)

    def unmodified_cells(self) -> np.ndarray:
        """Cells whose three vertices are interior and whose dual functions are the reference ones."""
        space = self.space
        inner = np.all(space.corner_dofs >= 0, axis=1)
        Dc = self.D.tocsc()
        ok = np.zeros(space.n_cells, dtype=bool)
        for K in np.flatnonzero(inner):
            block = Dc[:, 3 * K : 3 * K + 3].toarray()[space.corner_dofs[K]]
            ok[K] = np.allclose(block, DUAL_REF, atol=1e-12)
        return ok

    def recovery_operator(self) -> sp.csr_matrix:
        """``(n_dofs, n_cells)`` map of cellwise constants ``g`` to ``(∫ψ_i g)/c_i``."""
        nc = self.space.n_cells
        Ib = sp.diags(np.repeat(self.space.area / 3.0, 3))
        Sum = sp.csr_matrix((np.ones(3 * nc), (np.arange(3 * nc), np.repeat(np.arange(nc), 3))), shape=(3 * nc, nc))
        return (sp.diags(1.0 / self.c) @ self.D @ Ib @ Sum).tocsr()


def _relocation(space: P1Space) -> sp.csr_matrix:
    """``(n_vertices, n_dofs)`` matrix mapping each vertex dual function to interior ones."""
    mesh = space.mesh
    nv, n = mesh.n_vertices, space.n_dofs
    inner = np.flatnonzero(np.all(space.corner_dofs >= 0, axis=1))
    if len(inner) == 0:
        raise ConfigurationError("relocation needs at least one triangle with only interior vertices; refine the mesh")
    rows = list(space.interior_vertices)
    cols = list(range(n))
    vals = [1.0] * n
    bnd = np.flatnonzero(mesh.boundary_vertex)
    cent = mesh.cell_centroid[inner]
    tree = cKDTree(cent)
    k = min(8, len(inner))
    dist, cand = tree.query(mesh.vertices[bnd], k=k)
    dist, cand = dist.reshape(len(bnd), k), cand.reshape(len(bnd), k)
    for v, dv, cv in zip(bnd, dist, cand):
        ties = cv[dv <= dv[0] * (1 + 1e-12) + 1e-15]
        K = inner[ties.min()]
        P = mesh.vertices[space.tri[K]]
        alpha = np.linalg.solve(np.vstack([P.T, np.ones(3)]), np.r_[mesh.vertices[v], 1.0])
        rows += [v] * 3
        cols += list(space.corner_dofs[K])
        vals += list(alpha)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nv, n))


def _dual_relocate(space: P1Space) -> sp.csr_matrix:
    nc, nv = space.n_cells, space.mesh.n_vertices
    incidence = sp.csr_matrix((np.ones(3 * nc), (space.tri.ravel(), np.arange(3 * nc))), shape=(nv, 3 * nc))
    ref = sp.kron(sp.eye(nc), DUAL_REF, format="csr")
    return (_relocation(space).T @ incidence @ ref).tocsr()


def _dual_elementwise(space: P1Space) -> sp.csr_matrix:
    mesh = space.mesh
    cd = space.corner_dofs
    rows, cols, vals = [], [], []

    def put(dof, K, coeffs):
        rows.extend([dof] * 3)
        cols.extend(3 * K + np.arange(3))
        vals.extend(coeffs)

    neighbours = [[] for _ in range(space.n_cells)]
    for a, b in mesh.face_cells[mesh.interior_faces]:
        neighbours[a].append(b)
        neighbours[b].append(a)
    for K in range(space.n_cells):
        inner = [a for a in range(3) if cd[K, a] >= 0]
        if len(inner) == 3:
            for a in range(3):
                put(cd[K, a], K, DUAL_REF[a])
        elif len(inner) == 2:
            a1, a2 = inner
            a3 = 3 - a1 - a2
            co = np.empty(3)
            co[[a1, a2, a3]] = _TWO_INNER
            put(cd[K, a1], K, co)
            put(cd[K, a2], K, 1.0 - co)
        elif len(inner) == 1:
            put(cd[K, inner[0]], K, np.ones(3))
        else:
            cand = [d for L in sorted(neighbours[K]) for d in cd[L] if d >= 0]
            if not cand:
                raise ConfigurationError(f"cell {K} has no interior vertex in any edge neighbour; refine the mesh")
            put(min(cand), K, np.ones(3))
    return sp.csr_matrix((vals, (rows, cols)), shape=(space.n_dofs, 3 * space.n_cells))


def build_biorth_dual(space: P1Space, strategy: str = "relocate", tol: float = 1e-12) -> BiorthDual:
    """Dual basis with the given boundary modification, checked for biorthogonality."""
    if strategy == "relocate":
        D = _dual_relocate(space)
    elif strategy == "elementwise":
        D = _dual_elementwise(space)
    else:
        raise InputError(f"unknown boundary strategy {strategy!r}; use 'relocate' or 'elementwise'")
    dual = BiorthDual(space, strategy, D, np.zeros(space.n_dofs))
    bio = dual.biorthogonality_matrix()
    c = bio.diagonal()
    scale = np.abs(c).max(initial=0.0)
    if space.n_dofs and np.any(np.abs(c) <= tol * scale):
        raise ConfigurationError("dual basis has a vanishing constant c_i")
    off = (bio - sp.diags(c)).tocoo()
    if off.nnz and np.abs(off.data).max() > tol * max(scale, 1.0):
        raise ConfigurationError("dual basis is not biorthogonal to the hat functions")
    dual.c = c
    return dual


def apply_Qh(dual: BiorthDual, g) -> np.ndarray:
    """Coefficients ``(∫ψ_i g)/c_i`` of ``Q_h g`` at the interior vertices.

    ``g`` may be cellwise constant ``(n_cells,)`` or ``(n_cells, k)``, piecewise
    linear given at the cell corners ``(n_cells, 3)`` or ``(n_cells, 3, k)``,
    or a callable on points ``(..., 2)`` integrated with the fine rule.
    """
    space = dual.space
    nc = space.n_cells
    if callable(g):
        bary, w, _ = subtriangle_rule("fine")
        P = space.mesh.vertices[space.tri]
        X = np.einsum("qa,kad->kqd", bary, P)
        vals = np.asarray(g(X), dtype=float)
        extra = vals.shape[2:]
        mom = np.einsum("q,qb,kq...->kb...", w, bary, vals) * space.area.reshape((-1, 1) + (1,) * len(extra))
        return (dual.D @ mom.reshape(3 * nc, -1) / dual.c[:, None]).reshape((space.n_dofs,) + extra)
    g = np.asarray(g, dtype=float)
    if g.shape[0] != nc:
        raise InputError(f"field has {g.shape[0]} rows, expected one per cell ({nc})")
    if g.ndim >= 2 and g.shape[1] == 3 and g.ndim in (2, 3):
        flat = g.reshape(3 * nc, -1)
        out = dual.D @ (dual.cell_mass() @ flat) / dual.c[:, None]
        return out.reshape((space.n_dofs,) + g.shape[2:])
    flat = g.reshape(nc, -1)
    out = dual.recovery_operator() @ flat
    return out.reshape((space.n_dofs,) + g.shape[1:])


# -- stabilisation ----------------------------------------------------------


@dataclass(frozen=True)
class StabField:
    """Piecewise constant field on the four subtriangles of every cell."""

    mesh: PolytopalMesh
    r: float
    values: np.ndarray  # (n_cells, 4)

    def moments(self) -> np.ndarray:
        """``∫_K 𝔖_h ℓ`` for ``ℓ = 1, x, y``; shape ``(n_cells, 3)``, zero by design."""
        tri = np.asarray(self.mesh.cell_vertices[:, :3])
        P = self.mesh.vertices[tri]
        area = self.mesh.cell_measure
        out = np.zeros((len(tri), 3))
        for k, corners in enumerate(_midpoint_split(np.eye(3))):
            centroid = np.einsum("a,kad->kd", np.mean(corners, axis=0), P)
            part = self.values[:, k] * area / 4
            out[:, 0] += part
            out[:, 1:] += part[:, None] * centroid
        return out


def build_stab_field(mesh: PolytopalMesh, r: float = 1.0) -> StabField:
    """Stabilisation field with values ``r·(1, 1, 1, −3)`` on each cell."""
    if not r > 0:
        raise InputError(f"stabilisation factor must be positive, got {r}")
    if not mesh.is_simplicial:
        raise InputError("the stabilisation field needs a triangulation")
    values = np.tile(r * STAB_BASE, (mesh.n_cells, 1))
    values.flags.writeable = False
    return StabField(mesh, float(r), values)


# -- the discretisation -----------------------------------------------------


class GrDiscretisation(HessianDiscretisation):
    """Gradient-recovery Hessian discretisation.

    Besides the generic tables, ``hess_report`` holds ``B[∇(Q_h∇u)]``, the
    reconstructed Hessian without the stabilisation term, which is the quantity
    reported as the Hessian error.
    """

    default_convention = "quadrature"

    def __init__(self, space: P1Space, dual: BiorthDual, stab: StabField, tensor: FourthOrderTensor, e):
        self.space, self.dual, self.stab = space, dual, stab
        self.mesh = space.mesh
        self.tensor = tensor
        self.e = np.asarray(e, dtype=float)
        self.r = stab.r
        self.strategy = dual.strategy
        self.n_dofs = space.n_dofs
        nv = self.mesh.n_vertices
        self.dof_report = DofReport(total=nv, constrained=nv - self.n_dofs, free=self.n_dofs)
        self._build_operators()

    def _build_operators(self):
        space, nc = self.space, self.space.n_cells
        Sd = space.corner_operator()
        self.cell_grad = space.gradient_operators()
        R = self.dual.recovery_operator()
        self.recovered = [(R @ G).tocsr() for G in self.cell_grad]  # Q_h∇u at interior vertices
        sel = [sp.csr_matrix((np.ones(nc), (np.arange(nc), 3 * np.arange(nc) + a)), shape=(nc, 3 * nc)) for a in range(3)]
        corner = [(s @ Sd).tocsr() for s in sel]
        self.corner_values = corner
        # Q_h∇u at the corners of each cell: gA[i][a]
        self.corner_recovered = [[(corner[a] @ q).tocsr() for a in range(3)] for q in self.recovered]
        gl = space.grad_lambda
        self.hess_cell = [
            [sum(sp.diags(gl[:, a, j]) @ self.corner_recovered[i][a] for a in range(3)).tocsr() for j in range(2)]
            for i in range(2)
        ]
        ops = corner + [m for row in self.corner_recovered for m in row] + self.cell_grad
        ops += [m for row in self.hess_cell for m in row]
        self._ops = ops
        pattern = sum(abs(op) for op in ops)
        self._cell_pattern = sp.csr_matrix(pattern)

    def interpolate(self, fn) -> np.ndarray:
        return lagrange_interpolate(self.space, fn)

    def recovered_gradient(self, u) -> np.ndarray:
        """``Q_h∇u`` at the interior vertices, shape ``(n_dofs, 2)``."""
        u = np.asarray(u, dtype=float)
        return np.stack([q @ u for q in self.recovered], axis=1)

    def blocks(self, rule: str = "fine", block_size: int | None = None):
        bary, w, sub = subtriangle_rule(rule)
        q = len(w)
        mesh, n, nc = self.mesh, self.n_dofs, self.space.n_cells
        P = mesh.vertices[self.space.tri]
        Bc = self.tensor.coeffs
        stab = self.stab.values[:, sub]  # (nc, q)
        if block_size is None:
            max_s = int(np.diff(self._cell_pattern.indptr).max(initial=1))
            block_size = block_size_for(q, 2, max_s)
        for start in range(0, nc, block_size):
            cells = np.arange(start, min(nc, start + block_size))
            stencil = stencils_from_pattern(self._cell_pattern, cells)
            loc = localize(self._ops, cells, stencil, n)
            uA, gA, Gc, M = loc[0:3], loc[3:9].reshape(2, 3, *loc.shape[1:]), loc[9:11], loc[11:15]
            nb, s = stencil.shape
            pi = np.einsum("qa,acs->cqs", bary, uA)
            grad = np.einsum("qa,iacs->cqis", bary, gA)
            Mloc = M.reshape(2, 2, nb, s).transpose(2, 0, 1, 3)  # (nb, 2, 2, s)
            wgap = grad - Gc.transpose(1, 0, 2)[:, None]  # (nb, q, 2, s)
            raw = Mloc[:, None] + np.einsum("cq,i,cqjs->cqijs", stab[cells], self.e, wgap)
            hess = np.einsum("ijkl,cqkls->cqijs", Bc, raw)
            report = np.einsum("ijkl,ckls->cijs", Bc, Mloc)
            report = np.broadcast_to(report[:, None], hess.shape)
            area = self.space.area[cells]
            yield CellBlock(
                cells=cells,
                stencil=stencil,
                weights=area[:, None] * w[None, :],
                points=np.einsum("qa,cad->cqd", bary, P[cells]),
                pi=pi,
                grad=grad,
                hess=hess,
                hess_report=report,
            )


def build_gr_hd(
    mesh: PolytopalMesh,
    B: FourthOrderTensor | None = None,
    strategy: str = "relocate",
    r: float = 1.0,
    e=(1 / math.sqrt(2), 1 / math.sqrt(2)),
) -> GrDiscretisation:
    """Build the gradient-recovery Hessian discretisation.

    ``B`` defaults to the identity tensor and must be coercive on symmetric
    matrices.  ``e`` is the unit direction that turns the scalar stabilisation
    field into the vector multiplying ``Q_h∇u − ∇u``.
    """
    if B is None:
        B = make_tensor("identity", dim=2)
    if B.dim != 2:
        raise ConfigurationError("the gradient-recovery discretisation is implemented in two dimensions")
    gain = B.min_gain_on_sym()
    if gain <= 1e-12:
        raise ConfigurationError(
            f"tensor {B.name!r} is not coercive on symmetric matrices (smallest gain {gain:.3e})"
        )
    e = np.asarray(e, dtype=float)
    if e.shape != (2,) or not np.isclose(np.linalg.norm(e), 1.0):
        raise InputError("e must be a unit vector in the plane")
    space = build_p1_space(mesh)
    dual = build_biorth_dual(space, strategy)
    stab = build_stab_field(mesh, r)
    return GrDiscretisation(space, dual, stab, B, e)
