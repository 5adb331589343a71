import math

import numpy as np
import pytest
import scipy.linalg as sla

from hdm.core import (
    CSV_HEADER,
    CellBlock,
    ConvergenceReport,
    ExactFields,
    HessianDiscretisation,
    LevelResult,
    assemble,
    check_error_estimate,
    coercivity_constant,
    compute_errors,
    convergence_study,
    error_norms,
    gram_matrices,
    interpolation_error,
    orders,
)
from hdm.errors import InputError
from hdm.fv import build_fv_hd
from hdm.gr import build_gr_hd
from hdm.linalg import solve_spd
from hdm.mesh import gen_diagonal_triangulation, gen_square_grid
from hdm.problems import manufactured_problem

ZERO = ExactFields(
    u=lambda x: np.zeros(x.shape[:-1]),
    grad=lambda x: np.zeros(x.shape),
    hess=lambda x: np.zeros(x.shape + (2,)),
    lap=lambda x: np.zeros(x.shape[:-1]),
    f=lambda x: np.zeros(x.shape[:-1]),
    name="zero",
)


class ScaledHessian(HessianDiscretisation):
    """Wrapper multiplying the Hessian reconstruction by a constant."""

    def __init__(self, base, c):
        self.base, self.c = base, c
        self.mesh, self.tensor = base.mesh, base.tensor
        self.n_dofs, self.dof_report = base.n_dofs, base.dof_report

    def blocks(self, rule="fine", block_size=None):
        for b in self.base.blocks(rule, block_size):
            yield CellBlock(b.cells, b.stencil, b.weights, b.points, b.pi, b.grad, self.c * b.hess)


def dense_coercivity(hd):
    g = gram_matrices(hd)
    G = g["G"].toarray()
    lam = max(sla.eigh(g[k].toarray(), G, eigvals_only=True).max() for k in ("M_pi", "M_grad"))
    return math.sqrt(lam)


@pytest.fixture(params=["fv", "gr"])
def small_hd(request, fv8, gr8):
    return fv8 if request.param == "fv" else gr8


class TestAssembly:
    def test_zero_source(self, small_hd):
        system = assemble(small_hd, ZERO.f)
        assert not system.rhs.any()
        assert not solve_spd(system).any()

    def test_fv_free_dimension(self):
        assert assemble(build_fv_hd(gen_square_grid(4)), ZERO.f).n == 4

    def test_symmetric(self, small_hd):
        A = assemble(small_hd, ZERO.f).matrix
        assert (A != A.T).nnz == 0

    def test_gram_is_hessian_gram(self, small_hd, rng):
        u = rng.standard_normal(small_hd.n_dofs)
        G = assemble(small_hd, ZERO.f).matrix
        direct = 0.0
        for blk in small_hd.blocks(rule="fine"):
            H = np.einsum("cqdes,cs->cqde", blk.hess, blk.local(u))
            direct += np.sum(blk.weights * np.sum(H**2, (-1, -2)))
        assert u @ (G @ u) == pytest.approx(direct, rel=1e-12)

    def test_galerkin_orthogonality(self, small_hd, rng):
        ex = manufactured_problem("ex2").exact
        system = assemble(small_hd, ex.f)
        u = solve_spd(system)
        r = system.matrix @ u - system.rhs
        nb = np.linalg.norm(system.rhs)
        for _ in range(20):
            v = rng.standard_normal(small_hd.n_dofs)
            assert abs(r @ v) <= 1e-9 * nb * np.linalg.norm(v)

    @pytest.mark.parametrize("c", [-2.0, 0.5, 7.0])
    def test_linearity(self, small_hd, c):
        f = manufactured_problem("ex3").exact.f
        u = solve_spd(assemble(small_hd, f))
        uc = solve_spd(assemble(small_hd, lambda x: c * f(x)))
        np.testing.assert_allclose(uc, c * u, rtol=1e-12, atol=1e-12 * np.abs(u).max() * abs(c))

    def test_deterministic(self, small_hd):
        f = manufactured_problem("ex1").exact.f
        a, b = assemble(small_hd, f), assemble(small_hd, f)
        np.testing.assert_array_equal(a.upper.data, b.upper.data)
        np.testing.assert_array_equal(a.rhs, b.rhs)


class TestErrors:
    def test_exact_zero(self, small_hd):
        assert compute_errors(small_hd, np.zeros(small_hd.n_dofs), ZERO) == (0.0, 0.0, 0.0)

    def test_zero_exact_nonzero_discrete(self, small_hd):
        with pytest.raises(InputError, match="zero norm"):
            compute_errors(small_hd, np.ones(small_hd.n_dofs), ZERO)

    def test_bad_convention(self, small_hd):
        ex = manufactured_problem("ex1").exact
        with pytest.raises(InputError):
            compute_errors(small_hd, np.zeros(small_hd.n_dofs), ex, convention="trapezoid")

    def test_midpoint_needs_one_point(self, gr8):
        ex = manufactured_problem("ex1").exact
        with pytest.raises(InputError):
            compute_errors(gr8, np.zeros(gr8.n_dofs), ex, convention="fv_midpoint")

    def test_dof_shape(self, small_hd):
        with pytest.raises(InputError):
            compute_errors(small_hd, np.zeros(small_hd.n_dofs + 1), manufactured_problem("ex1").exact)

    def test_zero_solution_has_unit_relative_error(self, small_hd):
        ex = manufactured_problem("ex1").exact
        eu, eg, eh = compute_errors(small_hd, np.zeros(small_hd.n_dofs), ex, convention="quadrature")
        assert eu == pytest.approx(1.0) and eg == pytest.approx(1.0) and eh == pytest.approx(1.0)

    def test_fv_midpoint_convention(self, fv8, rng):
        """Function error samples ū at x_K; the Hessian error compares Δ_D u with Δū at the centroid."""
        ex = manufactured_problem("ex2").exact
        u = rng.standard_normal(fv8.n_dofs)
        e = error_norms(fv8, u, ex)
        m = fv8.mesh
        area = m.cell_measure
        ue = ex.u(m.collocation)
        assert e.abs_u == pytest.approx(math.sqrt(np.sum(area * (fv8.cell_values(u) - ue) ** 2)), rel=1e-13)
        lap = ex.lap(m.cell_centroid)
        assert e.abs_hess == pytest.approx(math.sqrt(np.sum(area * (fv8.discrete_laplacian(u) - lap) ** 2)),
                                           rel=1e-12)
        assert e.norm_hess == pytest.approx(math.sqrt(np.sum(area * lap**2)), rel=1e-13)


class TestIndicators:
    @pytest.mark.parametrize("n", [4, 6, 8])
    def test_fv_coercivity_dense(self, n):
        hd = build_fv_hd(gen_square_grid(n))
        assert hd.n_dofs <= 50
        assert coercivity_constant(hd) == pytest.approx(dense_coercivity(hd), rel=1e-8)

    @pytest.mark.parametrize("r", [0.1, 1.0, 10.0])
    @pytest.mark.parametrize("strategy", ["relocate", "elementwise"])
    def test_gr_coercivity_dense(self, diag8, r, strategy):
        hd = build_gr_hd(diag8, r=r, strategy=strategy)
        assert hd.n_dofs <= 50
        assert coercivity_constant(hd) == pytest.approx(dense_coercivity(hd), rel=1e-8)

    @pytest.mark.parametrize("c", [0.5, 4.0])
    def test_coercivity_homogeneity(self, small_hd, c):
        assert coercivity_constant(ScaledHessian(small_hd, c)) == pytest.approx(coercivity_constant(small_hd) / c,
                                                                                rel=1e-8)

    def test_interpolation_error_zero(self, small_hd):
        S, w = interpolation_error(small_hd, ZERO)
        assert S == 0.0 and not w.any()

    def test_interpolation_error_minimality(self, small_hd, rng):
        ex = manufactured_problem("ex1").exact
        S, w = interpolation_error(small_hd, ex)

        def norms(v):
            e = error_norms(small_hd, v, ex, convention="quadrature", hessian="full")
            return np.array([e.abs_u, e.abs_grad, e.abs_hess])

        at_min = norms(w)
        assert S == pytest.approx(at_min.sum(), rel=1e-12)
        scale = np.abs(w).max()
        for k in range(100):
            v = w + scale * 10.0 ** rng.uniform(-4, 0) * rng.standard_normal(small_hd.n_dofs)
            other = norms(v)
            assert (at_min**2).sum() <= (other**2).sum() * (1 + 1e-12)
            assert S <= math.sqrt(3) * other.sum() * (1 + 1e-12)

    @pytest.mark.parametrize("pid", ["ex1", "ex2", "ex3"])
    def test_error_estimate_holds(self, small_hd, pid):
        chk = check_error_estimate(small_hd, manufactured_problem(pid).exact)
        assert chk.holds
        assert chk.lhs > 0 and chk.W >= 0 and chk.S > 0

    def test_error_estimate_zero_problem(self, small_hd):
        chk = check_error_estimate(small_hd, ZERO, with_coercivity=True)
        assert chk.lhs == 0.0 and chk.rhs == 0.0 and chk.holds
        assert chk.C > 0

    def test_limit_conformity_zero_for_constant_xi(self, fv8):
        """Face jumps telescope, so a constant ξ has no conformity defect."""
        from hdm.core import limit_conformity

        xi = lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2))  # noqa: E731
        W = limit_conformity(fv8, xi, lambda x: np.zeros(x.shape[:-1]))
        assert W <= 1e-12


class TestReports:
    def rows(self):
        return [LevelResult(0.5 / 2**k, 16 * 4**k, 4 * 4**k, 10 * 4**k, 0.1 / 4**k, 0.2 / 2**k, 0.3 / 4**k)
                for k in range(4)]

    def test_orders(self):
        rep = ConvergenceReport(self.rows())
        np.testing.assert_allclose(rep.order("u")[1:], 2.0, rtol=1e-12)
        np.testing.assert_allclose(rep.order("grad")[1:], 1.0, rtol=1e-12)
        assert math.isnan(rep.order("hess")[0])

    def test_repeated_level_gives_nan(self):
        assert np.isnan(orders([0.1, 0.1], [1.0, 0.5])).all()

    def test_csv_round_trip(self, tmp_path):
        rep = ConvergenceReport(self.rows())
        text = rep.to_csv(tmp_path / "r.csv")
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        assert text.splitlines()[1].split(",")[5] == ""
        back = ConvergenceReport.from_csv(tmp_path / "r.csv")
        assert back.rows == rep.rows
        assert ConvergenceReport.from_csv(text).rows == rep.rows

    def test_csv_bad_header(self):
        with pytest.raises(InputError):
            ConvergenceReport.from_csv("a,b\n1,2\n")

    def test_format(self):
        text = ConvergenceReport(self.rows()).format()
        assert "2.0000" in text and len(text.splitlines()) == 5

    def test_study_needs_two_levels(self):
        with pytest.raises(InputError):
            convergence_study(lambda n: build_fv_hd(gen_square_grid(n)), [4], manufactured_problem("ex1").exact)

    def test_study(self):
        rep = convergence_study(lambda n: build_fv_hd(gen_square_grid(n)), [8, 16, 32],
                                manufactured_problem("ex1").exact)
        assert [r.nu_total for r in rep.rows] == [64, 256, 1024]
        assert rep.order("u")[-1] == pytest.approx(2.0, abs=0.05)
        assert all(r.residual <= 1e-10 for r in rep.rows)

    def test_study_gr(self):
        rep = convergence_study(lambda n: build_gr_hd(gen_diagonal_triangulation(n, "centroid")), [4, 8],
                                manufactured_problem("ex1").exact)
        assert [r.nu_free for r in rep.rows] == [9, 49]
        assert rep.rows[0].nnz == 79
