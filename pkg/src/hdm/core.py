"""Generic Hessian discretisation machinery.

A Hessian discretisation exposes, cell by cell, dense local tables that give
the reconstructed function ``Π_D u``, gradient ``∇_D u`` and Hessian
``H_D^B u`` at quadrature points as linear maps of the DOF values on a local
stencil.  Everything else (assembly of the scheme, error norms, the accuracy
indicators and convergence studies) is written once against those tables.

Tables are produced in blocks of cells so memory stays bounded on fine meshes.
Two quadrature rules may be offered: ``"gram"`` must integrate products of
discrete fields exactly, ``"fine"`` is used whenever a smooth function enters.
"""

from __future__ import annotations

import csv
import io
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigurationError, InputError, NumericalError
from .linalg import SparseSpdSystem, SpdFactor, gen_eig_max, solve_spd
from .tensor import FourthOrderTensor, apply_tensor

__all__ = [
    "CSV_HEADER",
    "CellBlock",
    "ConvergenceReport",
    "DofReport",
    "ErrorNorms",
    "EstimateCheck",
    "ExactFields",
    "HessianDiscretisation",
    "LevelResult",
    "assemble",
    "check_error_estimate",
    "coercivity_constant",
    "compute_errors",
    "convergence_study",
    "error_norms",
    "gram_matrices",
    "interpolation_error",
    "limit_conformity",
    "load_vector",
    "localize",
    "orders",
    "solve_scheme",
    "stencils_from_pattern",
]

# The assembled matrix stores every structural coupling of the cell stencils,
# whatever its value, so the reported fill does not depend on summation order
# (some couplings cancel to rounding level, sometimes to an exact zero).  A
# positive DROP_TOL removes off-diagonal entries with
# |a_ij| <= DROP_TOL * sqrt(a_ii a_jj).
DROP_TOL = 0.0


@dataclass(frozen=True)
class DofReport:
    """Counts of discrete unknowns: all entities, constrained ones, free ones."""

    total: int
    constrained: int
    free: int


@dataclass(frozen=True)
class ExactFields:
    """Exact solution data.  Callables take points of shape ``(..., d)``."""

    u: Callable
    grad: Callable
    hess: Callable
    lap: Callable
    f: Callable
    name: str = "exact"


@dataclass
class CellBlock:
    """Local tables for a block of ``nb`` cells with ``q`` points and stencil size ``s``.

    ``stencil`` holds free-DOF indices with ``-1`` padding.  ``pi`` has shape
    ``(nb, q, s)``, ``grad`` ``(nb, q, d, s)`` and ``hess`` ``(nb, q, d, d, s)``.
    ``hess_report`` is the Hessian used for reported errors; it defaults to
    ``hess``.
    """

    cells: np.ndarray
    stencil: np.ndarray
    weights: np.ndarray
    points: np.ndarray
    pi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    hess_report: np.ndarray | None = None

    def __post_init__(self):
        if self.hess_report is None:
            self.hess_report = self.hess

    def local(self, u: np.ndarray) -> np.ndarray:
        """Gather DOF values on the stencil, zero on padding."""
        ext = np.append(np.asarray(u, dtype=float), 0.0)
        return ext[self.stencil]


class HessianDiscretisation(ABC):
    """Abstract Hessian discretisation ``(X_D,0, Π_D, ∇_D, H_D^B)``.

    Subclasses set ``mesh``, ``tensor``, ``n_dofs``, ``dof_report`` and implement
    :meth:`blocks`.
    """

    mesh = None
    tensor: FourthOrderTensor
    n_dofs: int
    dof_report: DofReport
    default_convention: str = "quadrature"

    @property
    def dim(self) -> int:
        return self.tensor.dim

    @abstractmethod
    def blocks(self, rule: str = "fine", block_size: int | None = None) -> Iterator[CellBlock]:
        """Yield the cell tables in ascending cell order."""

    def interpolate(self, fn: Callable) -> np.ndarray:  # pragma: no cover - optional
        raise NotImplementedError

    @property
    def h(self) -> float:
        return self.mesh.h

    def gram_pattern(self):
        """Upper CSR pattern of all stencil couplings (cached)."""
        pat = getattr(self, "_pattern", None)
        if pat is None:
            pat = kernels.build_pattern((b.stencil for b in self.blocks(rule="gram")), self.n_dofs)
            self._pattern = pat
        return pat

    def check_quadrature(self, rule: str = "fine", rtol: float = 1e-13) -> None:
        """Check positive weights summing to each cell measure."""
        for blk in self.blocks(rule=rule):
            if np.any(blk.weights <= 0):
                raise ConfigurationError("quadrature weights must be positive")
            meas = self.mesh.cell_measure[blk.cells]
            if np.max(np.abs(blk.weights.sum(1) - meas) / meas) > rtol:
                raise ConfigurationError("quadrature weights do not sum to the cell measures")


def block_size_for(q: int, d: int, s: int, budget: int = 4_000_000) -> int:
    """Number of cells per block so one Hessian table holds about ``budget`` reals."""
    return max(1, budget // max(1, q * d * d * s))


def stencils_from_pattern(pattern: sp.csr_matrix, cells: np.ndarray) -> np.ndarray:
    """Padded stencils (sorted, ``-1`` padding) from the rows ``cells`` of a pattern."""
    sub = sp.csr_matrix(pattern[cells])
    sub.sum_duplicates()
    sub.sort_indices()
    counts = np.diff(sub.indptr)
    s = max(int(counts.max(initial=0)), 1)
    st = -np.ones((len(cells), s), dtype=np.int64)
    slot = np.arange(sub.nnz) - np.repeat(sub.indptr[:-1], counts)
    st[np.repeat(np.arange(len(cells)), counts), slot] = sub.indices
    return st


def localize(ops, cells: np.ndarray, stencil: np.ndarray, n: int) -> np.ndarray:
    """Dense local rows of sparse cell operators.

    ``ops`` is a list of ``(n_cells, n)`` sparse matrices; the result has shape
    ``(len(ops), nb, s)`` with entry ``[k, c, a]`` the coefficient of DOF
    ``stencil[c, a]`` in row ``cells[c]`` of ``ops[k]``.
    """
    nb, s = stencil.shape
    sentinel = np.where(stencil >= 0, stencil, n)
    flat_keys = (np.arange(nb, dtype=np.int64)[:, None] * (n + 1) + sentinel).ravel()
    out = np.zeros((len(ops), nb * s))
    for k, op in enumerate(ops):
        sub = sp.coo_matrix(sp.csr_matrix(op)[cells])
        if sub.nnz == 0:
            continue
        want = sub.row.astype(np.int64) * (n + 1) + sub.col
        pos = np.searchsorted(flat_keys, want)
        if np.any(pos >= len(flat_keys)) or np.any(flat_keys[np.minimum(pos, len(flat_keys) - 1)] != want):
            raise ValueError("operator entry outside the cell stencil")
        np.add.at(out[k], pos, sub.data)
    return out.reshape(len(ops), nb, s)


# -- assembly ---------------------------------------------------------------


def _rows(blk: CellBlock, name: str) -> np.ndarray:
    """Weighted local operator for one field, shaped ``(nb, s, rows)``."""
    sw = np.sqrt(blk.weights)
    if name == "hess":
        R = blk.hess * sw[:, :, None, None, None]
    elif name == "grad":
        R = blk.grad * sw[:, :, None, None]
    elif name == "pi":
        R = blk.pi * sw[:, :, None]
    else:
        raise InputError(f"unknown field {name!r}")
    nb, s = R.shape[0], R.shape[-1]
    return np.ascontiguousarray(np.moveaxis(R.reshape(nb, -1, s), 2, 1))


def _finalise_upper(indptr, indices, data, n) -> sp.csr_matrix:
    U = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(n, n))
    if DROP_TOL > 0:
        diag = U.diagonal()
        rows = np.repeat(np.arange(n), np.diff(U.indptr))
        scale = np.sqrt(np.abs(diag[rows] * diag[U.indices]))
        small = (rows != U.indices) & (np.abs(U.data) <= DROP_TOL * scale)
        U.data[small] = 0.0
        U.eliminate_zeros()
    return U


def gram_upper(hd: HessianDiscretisation, fields=("hess",), backend: str | None = None) -> dict:
    """Upper triangles of the Gram matrices of the requested fields."""
    indptr, indices = hd.gram_pattern()
    data = {name: np.zeros(len(indices)) for name in fields}
    for blk in hd.blocks(rule="gram"):
        for name in fields:
            kernels.scatter_gram(_rows(blk, name), blk.stencil, indptr, indices, data[name], which=backend)
    return {name: _finalise_upper(indptr, indices, data[name], hd.n_dofs) for name in fields}


def gram_matrices(hd: HessianDiscretisation) -> dict:
    """Full Gram matrices ``G`` (of ``H_D^B``), ``M_pi`` and ``M_grad`` on free DOFs."""
    ups = gram_upper(hd, ("hess", "pi", "grad"))
    full = {k: (U + U.T - sp.diags(U.diagonal())).tocsr() for k, U in ups.items()}
    return {"G": full["hess"], "M_pi": full["pi"], "M_grad": full["grad"]}


def load_vector(hd: HessianDiscretisation, f: Callable) -> np.ndarray:
    """``b_i = ∫ f Π_D φ_i`` with the fine rule."""
    b = np.zeros(hd.n_dofs)
    for blk in hd.blocks(rule="fine"):
        fx = np.asarray(f(blk.points), dtype=float)
        local = np.einsum("cq,cqs->cs", blk.weights * fx, blk.pi)
        kernels.scatter_vector(local, blk.stencil, b)
    return b


def assemble(hd: HessianDiscretisation, f: Callable, backend: str | None = None) -> SparseSpdSystem:
    """Assemble the Hessian scheme on the free DOFs and check positive definiteness."""
    if hd.n_dofs == 0:
        raise ConfigurationError("the discretisation has no free degrees of freedom")
    U = gram_upper(hd, ("hess",), backend=backend)["hess"]
    system = SparseSpdSystem(U, load_vector(hd, f))
    try:
        system.factor()
    except NumericalError as exc:
        raise ConfigurationError(f"Hessian Gram matrix is not positive definite: {exc}") from exc
    return system


def solve_scheme(hd: HessianDiscretisation, f: Callable):
    """Assemble and solve; returns ``(system, u)``."""
    system = assemble(hd, f)
    return system, solve_spd(system)


# -- errors -----------------------------------------------------------------


@dataclass(frozen=True)
class ErrorNorms:
    """Absolute error norms and the norms of the exact fields."""

    abs_u: float
    abs_grad: float
    abs_hess: float
    norm_u: float
    norm_grad: float
    norm_hess: float

    @staticmethod
    def _ratio(err, ref, label):
        if ref > 0:
            return err / ref
        if err == 0:
            return 0.0
        raise InputError(f"relative {label} error undefined: exact field has zero norm")

    @property
    def relative(self):
        return (
            self._ratio(self.abs_u, self.norm_u, "function"),
            self._ratio(self.abs_grad, self.norm_grad, "gradient"),
            self._ratio(self.abs_hess, self.norm_hess, "Hessian"),
        )


def error_norms(hd: HessianDiscretisation, u: np.ndarray, exact: ExactFields,
                convention: str | None = None, hessian: str = "report", rule: str = "fine") -> ErrorNorms:
    """Absolute L² errors of the reconstructions against ``exact``.

    ``convention="quadrature"`` integrates with the fine cell rule.
    ``convention="fv_midpoint"`` needs one point per cell: ``ū`` is sampled at
    the collocation point ``x_K`` and the derivatives at the cell centroid.
    ``hessian`` selects the reported Hessian (``"report"``) or the full
    ``H_D^B`` used in the scheme (``"full"``).  ``rule`` names the cell
    quadrature passed to :meth:`HessianDiscretisation.blocks`.
    """
    convention = convention or hd.default_convention
    if convention not in ("quadrature", "fv_midpoint"):
        raise InputError(f"unknown error convention {convention!r}")
    if hessian not in ("report", "full"):
        raise InputError(f"unknown Hessian selection {hessian!r}")
    u = np.asarray(u, dtype=float)
    if u.shape != (hd.n_dofs,):
        raise InputError(f"DOF vector has shape {u.shape}, expected ({hd.n_dofs},)")
    B = hd.tensor
    acc = np.zeros(6)
    for blk in hd.blocks(rule=rule):
        w = blk.weights
        ul = blk.local(u)
        uh = np.einsum("cqs,cs->cq", blk.pi, ul)
        gh = np.einsum("cqds,cs->cqd", blk.grad, ul)
        table = blk.hess_report if hessian == "report" else blk.hess
        hh = np.einsum("cqdes,cs->cqde", table, ul)
        x = blk.points
        if convention == "fv_midpoint":
            if x.shape[1] != 1:
                raise InputError("the fv_midpoint convention needs one point per cell")
            xu = hd.mesh.collocation[blk.cells][:, None, :]
        else:
            xu = x
        ue, ge = exact.u(xu), exact.grad(x)
        he = apply_tensor(B, exact.hess(x), check_symmetric=False)
        acc += [
            np.sum(w * (uh - ue) ** 2),
            np.sum(w * np.sum((gh - ge) ** 2, -1)),
            np.sum(w * np.sum((hh - he) ** 2, (-1, -2))),
            np.sum(w * ue**2),
            np.sum(w * np.sum(ge**2, -1)),
            np.sum(w * np.sum(he**2, (-1, -2))),
        ]
    return ErrorNorms(*np.sqrt(acc))


def compute_errors(hd: HessianDiscretisation, u: np.ndarray, exact: ExactFields,
                   convention: str | None = None):
    """Relative errors ``(err_u, err_grad, err_hess)``."""
    return error_norms(hd, u, exact, convention).relative


# -- indicators -------------------------------------------------------------


def coercivity_constant(hd: HessianDiscretisation, grams: dict | None = None,
                        factor: SpdFactor | None = None) -> float:
    """``C_D^B = max(√λ_max(M_Π, G), √λ_max(M_∇, G))`` on the free DOFs."""
    if hd.n_dofs == 0:
        raise ConfigurationError("the discretisation has no free degrees of freedom")
    grams = grams or gram_matrices(hd)
    factor = factor or SpdFactor(grams["G"])
    lam_pi = gen_eig_max(grams["M_pi"], grams["G"], factor=factor)
    lam_grad = gen_eig_max(grams["M_grad"], grams["G"], factor=factor)
    return math.sqrt(max(lam_pi, lam_grad, 0.0))


def conformity_functional(hd: HessianDiscretisation, xi: Callable, divdiv: Callable) -> np.ndarray:
    """Vector of ``l(φ_i) = ∫ divdiv·Π_D φ_i − Bξ : H_D^B φ_i``."""
    B = hd.tensor
    vec = np.zeros(hd.n_dofs)
    for blk in hd.blocks(rule="fine"):
        x = blk.points
        dd = np.asarray(divdiv(x), dtype=float)
        bxi = apply_tensor(B, xi(x), check_symmetric=False)
        local = np.einsum("cq,cqs->cs", blk.weights * dd, blk.pi)
        local -= np.einsum("cq,cqde,cqdes->cs", blk.weights, bxi, blk.hess)
        kernels.scatter_vector(local, blk.stencil, vec)
    return vec


def limit_conformity(hd: HessianDiscretisation, xi: Callable, divdiv: Callable,
                     factor: SpdFactor | None = None) -> float:
    """``W_D^B(ξ) = √(lᵀ G⁻¹ l)``, the exact maximiser of ``|l(w)|/‖H_D^B w‖``.

    ``divdiv`` must return ``H:Aξ``.
    """
    if factor is None:
        factor = SpdFactor(gram_matrices(hd)["G"])
    vec = conformity_functional(hd, xi, divdiv)
    z = factor.solve(vec)
    return math.sqrt(max(float(vec @ z), 0.0))


def interpolation_error(hd: HessianDiscretisation, exact: ExactFields, grams: dict | None = None):
    """Upper bound of ``S_D^B(ū)`` and the DOF vector attaining it.

    Minimises ``‖Π_D w − ū‖² + ‖∇_D w − ∇ū‖² + ‖H_D^B w − H^B ū‖²`` with one SPD
    solve, then returns the sum of the three norms at the minimiser.  This is
    at most ``√3`` times the exact minimum of the sum of norms and never below it.
    """
    grams = grams or gram_matrices(hd)
    B = hd.tensor
    rhs = np.zeros(hd.n_dofs)
    for blk in hd.blocks(rule="fine"):
        x, w = blk.points, blk.weights
        he = apply_tensor(B, exact.hess(x), check_symmetric=False)
        local = np.einsum("cq,cqs->cs", w * exact.u(x), blk.pi)
        local += np.einsum("cq,cqd,cqds->cs", w, exact.grad(x), blk.grad)
        local += np.einsum("cq,cqde,cqdes->cs", w, he, blk.hess)
        kernels.scatter_vector(local, blk.stencil, rhs)
    K = (grams["G"] + grams["M_pi"] + grams["M_grad"]).tocsr()
    wvec = SpdFactor(K).solve(rhs) if np.any(rhs) else np.zeros(hd.n_dofs)
    e = error_norms(hd, wvec, exact, convention="quadrature", hessian="full")
    return e.abs_u + e.abs_grad + e.abs_hess, wvec


@dataclass(frozen=True)
class EstimateCheck:
    """Both sides of ``‖H_D^B u_D − H^B ū‖ ≤ W_D^B(Hū) + 2 S_D^B(ū)``."""

    lhs: float
    W: float
    S: float
    C: float | None = None

    @property
    def rhs(self) -> float:
        return self.W + 2.0 * self.S

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-10) + 1e-300


def check_error_estimate(hd: HessianDiscretisation, exact: ExactFields, u: np.ndarray | None = None,
                         with_coercivity: bool = False) -> EstimateCheck:
    """Evaluate both sides of the Hessian error estimate.

    All integrals use the same rules as the scheme, so the inequality is exact
    up to rounding.
    """
    grams = gram_matrices(hd)
    factor = SpdFactor(grams["G"])
    if u is None:
        b = load_vector(hd, exact.f)
        u = factor.solve(b) if np.any(b) else np.zeros(hd.n_dofs)
    lhs = error_norms(hd, u, exact, convention="quadrature", hessian="full").abs_hess
    W = limit_conformity(hd, exact.hess, exact.f, factor=factor)
    S, _ = interpolation_error(hd, exact, grams=grams)
    C = coercivity_constant(hd, grams=grams, factor=factor) if with_coercivity else None
    return EstimateCheck(lhs=lhs, W=W, S=S, C=C)


# -- convergence studies ----------------------------------------------------


CSV_HEADER = ["h", "nu_total", "nu_free", "nnz", "err_u", "order_u", "err_grad", "order_grad", "err_hess", "order_hess"]


@dataclass(frozen=True)
class LevelResult:
    h: float
    nu_total: int
    nu_free: int
    nnz: int
    err_u: float
    err_grad: float
    err_hess: float
    residual: float = float("nan")  # relative solve residual, not serialised


def orders(h: Iterable[float], err: Iterable[float]) -> np.ndarray:
    """Orders ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})``; NaN for the first row or equal ``h``."""
    h = np.asarray(list(h), dtype=float)
    err = np.asarray(list(err), dtype=float)
    out = np.full(len(h), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(1, len(h)):
            dh = math.log(h[i - 1] / h[i]) if h[i - 1] > 0 and h[i] > 0 else 0.0
            if dh != 0.0 and err[i - 1] > 0 and err[i] > 0:
                out[i] = math.log(err[i - 1] / err[i]) / dh
    return out


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and math.isnan(x):
        return ""
    return f"{float(x):.17g}"


@dataclass
class ConvergenceReport:
    """Per-level results of a convergence study."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def order(self, name: str) -> np.ndarray:
        """Orders for ``"u"``, ``"grad"`` or ``"hess"``."""
        return orders(self.column("h"), self.column(f"err_{name}"))

    def table(self) -> list[list]:
        ou, og, oh = self.order("u"), self.order("grad"), self.order("hess")
        return [
            [r.h, r.nu_total, r.nu_free, r.nnz, r.err_u, ou[i], r.err_grad, og[i], r.err_hess, oh[i]]
            for i, r in enumerate(self.rows)
        ]

    def to_csv(self, target=None) -> str:
        """CSV text; also written to ``target`` (path or file object) if given."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.table():
            writer.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
        if target is not None:
            if hasattr(target, "write"):
                target.write(text)
            else:
                with open(target, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "ConvergenceReport":
        """Parse CSV text, a path or a file object produced by :meth:`to_csv`."""
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != CSV_HEADER:
            raise InputError(f"unexpected CSV header {header}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(LevelResult(
                h=float(rec[0]), nu_total=int(rec[1]), nu_free=int(rec[2]), nnz=int(rec[3]),
                err_u=float(rec[4]), err_grad=float(rec[6]), err_hess=float(rec[8]),
            ))
        return cls(rows=rows)

    def format(self) -> str:
        """Human-readable table."""
        head = f"{'h':>10} {'nu':>7} {'free':>7} {'nnz':>8} {'err_u':>11} {'ord':>7} {'err_grad':>11} {'ord':>7} {'err_hess':>11} {'ord':>7}"
        lines = [head]
        for row in self.table():
            h, nt, nf, nnz, eu, ou, eg, og, eh, oh = row
            o = lambda v: "      -" if math.isnan(v) else f"{v:7.4f}"  # noqa: E731
            lines.append(f"{h:10.6f} {nt:7d} {nf:7d} {nnz:8d} {eu:11.6f} {o(ou)} {eg:11.6f} {o(og)} {eh:11.6f} {o(oh)}")
        return "\n".join(lines)


def convergence_study(factory: Callable, levels: Iterable, exact: ExactFields,
                      convention: str | None = None, meta: dict | None = None) -> ConvergenceReport:
    """Solve on each level produced by ``factory(level)`` and tabulate errors."""
    levels = list(levels)
    if len(levels) < 2:
        raise InputError("a convergence study needs at least two levels")
    report = ConvergenceReport(meta=dict(meta or {}))
    for level in levels:
        hd = factory(level)
        system = assemble(hd, exact.f)
        u, info = solve_spd(system, return_info=True)
        eu, eg, eh = compute_errors(hd, u, exact, convention)
        report.rows.append(LevelResult(
            h=hd.h, nu_total=hd.dof_report.total, nu_free=hd.dof_report.free,
            nnz=system.nnz, err_u=eu, err_grad=eg, err_hess=eh, residual=info.relative_residual,
        ))
    return report
