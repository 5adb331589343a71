import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from hdm.errors import InputError, NumericalError
from hdm.linalg import (
    RESIDUAL_TOL,
    SparseSpdSystem,
    SpdFactor,
    attainable_residual,
    gen_eig_max,
    residual,
    solve_spd,
)


def random_spd(rng, n, density=1.0):
    L = np.tril(rng.standard_normal((n, n)))
    if density < 1.0:
        L *= np.tril(rng.random((n, n)) < density)
    np.fill_diagonal(L, 1.0 + np.abs(rng.standard_normal(n)))
    return L @ L.T


def laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


class TestSystem:
    def test_upper_only(self):
        with pytest.raises(InputError):
            SparseSpdSystem(sp.csr_matrix(np.ones((2, 2))), np.ones(2))

    def test_rhs_length(self):
        with pytest.raises(InputError):
            SparseSpdSystem(sp.eye(3), np.ones(2))

    def test_matrix_symmetric_by_storage(self, rng):
        A = random_spd(rng, 6)
        s = SparseSpdSystem.from_full(A, np.ones(6))
        full = s.matrix.toarray()
        np.testing.assert_array_equal(full, full.T)
        np.testing.assert_allclose(full, A, rtol=1e-15, atol=1e-15)

    def test_nnz_full_convention(self):
        s = SparseSpdSystem.from_full(laplacian_1d(5), np.ones(5))
        assert s.nnz == 5 + 2 * 4

    def test_nnz_counts_stored_zeros(self):
        U = sp.csr_matrix((np.array([1.0, 0.0, 1.0]), np.array([0, 1, 1]), np.array([0, 2, 3])), shape=(2, 2))
        assert SparseSpdSystem(U, np.ones(2)).nnz == 4

    def test_with_rhs_shares_factor(self, rng):
        s = SparseSpdSystem.from_full(random_spd(rng, 5), np.ones(5))
        f = s.factor()
        t = s.with_rhs(np.arange(5.0))
        assert t.factor() is f
        np.testing.assert_allclose(s.matrix @ solve_spd(t), np.arange(5.0), atol=1e-12)


class TestSolve:
    def test_zero_rhs(self):
        s = SparseSpdSystem(sp.eye(4), np.zeros(4))
        np.testing.assert_array_equal(solve_spd(s), np.zeros(4))

    def test_one_by_one(self):
        s = SparseSpdSystem(sp.csr_matrix([[2.0]]), np.array([4.0]))
        assert solve_spd(s)[0] == pytest.approx(2.0, rel=1e-15)

    @pytest.mark.parametrize("n", [3, 10, 40])
    @pytest.mark.parametrize("method", ["direct", "cg", "auto"])
    def test_random_against_dense(self, rng, n, method):
        A = random_spd(rng, n, density=0.5)
        A += n * np.eye(n)  # keep CG well conditioned
        b = rng.standard_normal(n)
        x, info = solve_spd(SparseSpdSystem.from_full(A, b), method=method, return_info=True)
        oracle = sla.cho_solve(sla.cho_factor(A), b)
        assert np.linalg.norm(x - oracle) <= 1e-9
        assert info.relative_residual <= RESIDUAL_TOL
        assert info.within_tol

    def test_refinement_reaches_tolerance(self):
        n = 400
        A = laplacian_1d(n)
        b = np.ones(n)
        x, info = solve_spd(SparseSpdSystem.from_full(A, b), return_info=True)
        assert np.linalg.norm(residual(A, x, b)) <= RESIDUAL_TOL * np.linalg.norm(b)
        assert info.method == "direct"

    def test_indefinite_pivot_reported(self):
        A = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NumericalError, match="pivot"):
            solve_spd(SparseSpdSystem.from_full(A, np.ones(2)))

    def test_cg_non_convergence(self):
        from hdm.linalg import _solve_cg

        A = laplacian_1d(50)
        with pytest.raises(NumericalError, match="did not converge"):
            _solve_cg(A, np.ones(50), maxiter=2)

    def test_unknown_method(self):
        with pytest.raises(InputError):
            solve_spd(SparseSpdSystem(sp.eye(2), np.ones(2)), method="qr")


class TestResidual:
    def test_extended_precision(self):
        A = sp.csr_matrix(np.array([[1.0, 1.0], [0.0, 1.0]]))
        x = np.array([1e16, 1.0])
        r = residual(A, x, np.array([1e16 + 2.0, 1.0]))
        np.testing.assert_array_equal(r, [1.0, 0.0])

    def test_attainable_floor(self):
        A = sp.eye(3, format="csr")
        x = np.ones(3)
        assert attainable_residual(A, x, x) == pytest.approx(np.finfo(float).eps)

    def test_empty_rows(self):
        A = sp.csr_matrix((3, 3))
        np.testing.assert_array_equal(residual(A, np.ones(3), np.ones(3)), np.ones(3))


class TestGenEigMax:
    def test_same_matrix(self, rng):
        G = random_spd(rng, 6)
        assert gen_eig_max(G, G) == pytest.approx(1.0, rel=1e-10)

    def test_scaled_identity(self):
        assert gen_eig_max(2 * sp.eye(5), sp.eye(5)) == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((8, 8))
        M = a @ a.T
        G = random_spd(rng, 8)
        oracle = sla.eigh(M, G, eigvals_only=True).max()
        assert gen_eig_max(M, G, tol=1e-14) == pytest.approx(oracle, rel=1e-8)

    @pytest.mark.parametrize("c", [0.5, 3.0])
    def test_scaling(self, rng, c):
        a = rng.standard_normal((8, 8))
        M = a @ a.T
        G = random_spd(rng, 8)
        lam = gen_eig_max(M, G, tol=1e-14)
        assert gen_eig_max(c * M, G, tol=1e-14) == pytest.approx(c * lam, rel=1e-10)

    def test_zero_matrix(self):
        assert gen_eig_max(sp.csr_matrix((4, 4)), sp.eye(4)) == 0.0

    def test_prebuilt_factor(self, rng):
        G = random_spd(rng, 5)
        assert gen_eig_max(2 * G, G, factor=SpdFactor(G)) == pytest.approx(2.0, rel=1e-10)

    def test_non_convergence(self):
        M = np.diag([1.0, 1.0 - 1e-9, 0.5])
        with pytest.raises(NumericalError, match="last iterates"):
            gen_eig_max(M, np.eye(3), tol=1e-16, maxiter=3)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            gen_eig_max(sp.eye(3), sp.eye(4))
