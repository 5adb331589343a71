import math

import numpy as np
import pytest
import scipy.linalg as sla

from hdm.core import assemble, coercivity_constant, gram_matrices, limit_conformity
from hdm.errors import ConfigurationError
from hdm.fv import NotDeltaAdaptedError, build_fv_hd, discrete_gradient, discrete_laplacian, fv_inner_product
from hdm.mesh import gen_diagonal_triangulation, gen_square_grid
from hdm.tensor import make_tensor


def deep_cells(fv):
    """Free cells whose neighbours are all free."""
    mesh = fv.mesh
    out = []
    for k in fv.free_cells:
        nb = mesh.face_cells[mesh.cell_faces(k)].ravel()
        nb = nb[(nb >= 0) & (nb != k)]
        if np.all(~fv.constrained[nb]):
            out.append(k)
    return np.array(out)


def integral_pi_lap(fv, u, v):
    return float(np.sum(fv.mesh.cell_measure * fv.cell_values(u) * fv.discrete_laplacian(v)))


class TestBuild:
    def test_free_dofs(self):
        fv = build_fv_hd(gen_square_grid(4))
        assert fv.dof_report.total == 16
        assert fv.n_dofs == fv.dof_report.free == 4
        assert fv.dof_report.constrained == 12

    def test_no_free_dofs_refused(self):
        fv = build_fv_hd(gen_square_grid(2))
        assert fv.n_dofs == 0
        with pytest.raises(ConfigurationError):
            assemble(fv, lambda x: np.ones(x.shape[:-1]))

    def test_not_delta_adapted(self):
        with pytest.raises(NotDeltaAdaptedError) as info:
            build_fv_hd(gen_diagonal_triangulation(4, "circumcenter"))
        assert not info.value.report.is_valid
        assert "INVALID" in str(info.value)

    def test_only_trace_tensor(self):
        with pytest.raises(ConfigurationError):
            build_fv_hd(gen_square_grid(4), make_tensor("identity"))

    def test_quadrature(self, fv8):
        fv8.check_quadrature()


class TestOperators:
    def test_zero(self, fv8):
        u = np.zeros(fv8.n_dofs)
        assert not discrete_gradient(fv8, u).any()
        assert not discrete_laplacian(fv8, u).any()

    @pytest.mark.parametrize("g, c", [((1.0, 0.0), 0.0), ((0.3, -2.0), 1.5)])
    def test_affine_exactness(self, fv8, g, c):
        u = fv8.interpolate(lambda x: x @ np.array(g) + c)
        deep = deep_cells(fv8)
        assert len(deep) == 16
        np.testing.assert_allclose(fv8.discrete_gradient(u)[deep], np.tile(g, (len(deep), 1)), rtol=0, atol=1e-13)
        np.testing.assert_allclose(fv8.discrete_laplacian(u)[deep], 0.0, atol=1e-12)

    def test_laplacian_of_x_squared(self, fv8):
        u = fv8.interpolate(lambda x: x[..., 0] ** 2)
        deep = deep_cells(fv8)
        np.testing.assert_allclose(fv8.discrete_laplacian(u)[deep], 2.0, rtol=1e-12)

    def test_indicator_cell(self):
        n = 6
        fv = build_fv_hd(gen_square_grid(n))
        mesh, h = fv.mesh, 1.0 / n
        K = 2 * n + 2
        u = np.zeros(fv.n_dofs)
        u[fv.dof_of_cell[K]] = 1.0
        grad = fv.discrete_gradient(u)
        lap = fv.discrete_laplacian(u)
        np.testing.assert_allclose(grad[K], 0.0, atol=1e-12)
        assert lap[K] == pytest.approx(-4 / h**2)
        for s in mesh.cell_faces(K):
            L = [c for c in mesh.face_cells[s] if c != K][0]
            expected = (mesh.collocation[K] - mesh.collocation[L]) / (2 * h * h)
            np.testing.assert_allclose(grad[L], expected, rtol=1e-12, atol=1e-12)
            assert lap[L] == pytest.approx(1 / h**2)

    def test_hessian_norm_equals_laplacian_norm(self, fv8, rng):
        u = rng.standard_normal(fv8.n_dofs)
        G = gram_matrices(fv8)["G"]
        lap = fv8.discrete_laplacian(u)
        assert u @ (G @ u) == pytest.approx(np.sum(fv8.mesh.cell_measure * lap**2), rel=1e-12)


class TestInnerProduct:
    @pytest.mark.parametrize("n", [5, 8])
    def test_duality(self, n, rng):
        fv = build_fv_hd(gen_square_grid(n))
        for _ in range(50):
            u, v = rng.standard_normal((2, fv.n_dofs))
            ip = fv_inner_product(fv, u, v)
            assert -integral_pi_lap(fv, u, v) == pytest.approx(ip, rel=1e-12, abs=1e-12 * abs(ip) + 1e-300)

    def test_symmetric(self, fv8, rng):
        u, v = rng.standard_normal((2, fv8.n_dofs))
        assert fv8.inner_product(u, v) == fv8.inner_product(v, u)

    def test_positive_definite(self, fv8, rng):
        assert fv8.inner_product(np.zeros(fv8.n_dofs), np.zeros(fv8.n_dofs)) == 0.0
        for _ in range(20):
            u = rng.standard_normal(fv8.n_dofs)
            assert fv8.inner_product(u, u) > 0

    def test_poincare_chain(self, fv8, rng):
        diam2 = 2.0
        area = fv8.mesh.cell_measure
        for _ in range(50):
            u = rng.standard_normal(fv8.n_dofs)
            norm_u = math.sqrt(np.sum(area * fv8.cell_values(u) ** 2))
            norm_lap = math.sqrt(np.sum(area * fv8.discrete_laplacian(u) ** 2))
            assert norm_u <= diam2 * norm_lap


class TestIndicators:
    def test_coercivity_against_dense(self):
        fv = build_fv_hd(gen_square_grid(4))
        g = gram_matrices(fv)
        G = g["G"].toarray()
        lam = max(sla.eigh(g[k].toarray(), G, eigvals_only=True).max() for k in ("M_pi", "M_grad"))
        assert coercivity_constant(fv) == pytest.approx(math.sqrt(lam), rel=1e-8)

    def test_coercivity_bounded(self):
        theta = 2 * math.sqrt(2)
        bound = 2.0 + math.sqrt(2) * theta * math.sqrt(2)
        values = [coercivity_constant(build_fv_hd(gen_square_grid(n))) for n in (8, 16, 32, 64)]
        assert all(0 < c <= bound for c in values)
        assert max(values) / min(values) < 1.2

    def test_constant_xi_conformity(self, fv8):
        xi = np.array([[1.0, 0.4], [0.4, -2.5]])
        W = limit_conformity(
            fv8,
            lambda x: np.broadcast_to(xi, x.shape[:-1] + (2, 2)),
            lambda x: np.zeros(x.shape[:-1]),
        )
        assert W <= 1e-12
