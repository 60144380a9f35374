import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_stable, seeds
from renreduce.errors import DefectiveMatrixError, InstabilityError, NonFiniteError, RankError, ShapeError
from renreduce.numerics import (
    gen_eig,
    orthonormalize,
    solve_discrete_lyapunov,
    spectral_radius,
    sym_eig_min,
)


class TestSymEigMin:
    def test_diagonal(self):
        assert sym_eig_min(np.diag([2.0, 3.0])) == pytest.approx(2.0)

    def test_two_by_two_closed_form(self):
        M = np.array([[0.75, -0.25], [-0.25, 1.99]])
        t, d = np.trace(M), np.linalg.det(M)
        expected = (t - np.sqrt(t * t - 4 * d)) / 2
        assert expected == pytest.approx(0.7015, abs=5e-5)
        assert sym_eig_min(M) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("n", [1, 3, 17])
    def test_identity(self, n):
        assert sym_eig_min(np.eye(n)) == pytest.approx(1.0)

    def test_uses_symmetric_part(self):
        M = np.array([[1.0, 4.0], [0.0, 1.0]])
        assert sym_eig_min(M) == pytest.approx(-1.0)

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            sym_eig_min(np.ones((2, 3)))

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(NonFiniteError):
            sym_eig_min(np.array([[1.0, bad], [bad, 1.0]]))


class TestGenEig:
    def test_diagonal(self):
        res = gen_eig(np.diag([0.5, -0.3]))
        np.testing.assert_allclose(res.eigenvalues, [-0.3, 0.5])
        np.testing.assert_allclose(np.abs(res.right_eigenvectors), np.eye(2)[:, ::-1], atol=1e-15)

    def test_rotation_pair(self):
        res = gen_eig(np.array([[0.0, 1.0], [-0.25, 0.0]]))
        np.testing.assert_allclose(res.eigenvalues, [-0.5j, 0.5j], atol=1e-15)
        X = res.right_eigenvectors
        np.testing.assert_array_equal(X[:, 1], np.conj(X[:, 0]))

    def test_scalar(self):
        res = gen_eig(np.array([[0.9]]))
        assert res.eigenvalues[0] == 0.9
        assert res.right_eigenvectors[0, 0] == 1.0

    def test_defective_reports_gap(self):
        with pytest.raises(DefectiveMatrixError) as exc:
            gen_eig(np.array([[0.5, 1.0], [0.0, 0.5]]))
        assert exc.value.gap < exc.value.threshold

    def test_size_cap(self):
        with pytest.raises(ShapeError):
            gen_eig(np.eye(3) * np.arange(3), max_size=2)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, n=st.integers(1, 12))
    def test_decomposition_property(self, seed, n):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((n, n))
        res = gen_eig(M)
        lam, X = res.eigenvalues, res.right_eigenvectors
        np.testing.assert_allclose(M @ X, X * lam, atol=1e-9 * max(1.0, np.abs(M).max()) * n)
        np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1.0, rtol=1e-12)
        # ordering: real part non-decreasing
        assert np.all(np.diff(lam.real) >= -1e-12)
        # largest entry real and positive
        idx = np.argmax(np.abs(X), axis=0)
        lead = X[idx, np.arange(n)]
        assert np.all(np.abs(lead.imag) <= 1e-12)
        assert np.all(lead.real > 0)


class TestOrthonormalize:
    def test_scaled_identity(self):
        Q, rank = orthonormalize(np.diag([2.0, 3.0]))
        assert rank == 2
        np.testing.assert_allclose(Q, np.eye(2))

    def test_duplicate_direction(self):
        Q, rank = orthonormalize(np.array([[1.0, 2.0], [0.0, 0.0]]))
        assert rank == 1
        np.testing.assert_allclose(Q, [[1.0], [0.0]])

    def test_zero_matrix(self):
        with pytest.raises(RankError) as exc:
            orthonormalize(np.zeros((3, 2)))
        assert exc.value.rank == 0

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, rows=st.integers(1, 20), cols=st.integers(1, 20))
    def test_orthonormal_columns_span_input(self, seed, rows, cols):
        cols = min(rows, cols)
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((rows, cols))
        Q, rank = orthonormalize(M)
        assert rank == np.linalg.matrix_rank(M)
        np.testing.assert_allclose(Q.T @ Q, np.eye(rank), atol=1e-12)
        np.testing.assert_allclose(Q @ (Q.T @ M), M, atol=1e-10 * np.linalg.norm(M))


class TestLyapunov:
    def test_scalar(self):
        X = solve_discrete_lyapunov(np.array([[0.5]]), np.array([[1.0]]))
        assert X[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-14)

    def test_nilpotent(self):
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        np.testing.assert_array_equal(solve_discrete_lyapunov(np.zeros((2, 2)), Q), Q)

    def test_decoupled(self):
        X = solve_discrete_lyapunov(np.diag([0.5, 0.2]), np.eye(2))
        np.testing.assert_allclose(X, np.diag([4 / 3, 25 / 24]), rtol=1e-14)

    def test_unstable(self):
        with pytest.raises(InstabilityError) as exc:
            solve_discrete_lyapunov(np.diag([1.0, 0.2]), np.eye(2))
        assert exc.value.radius == pytest.approx(1.0)

    def test_unstable_fast_path_detects_divergence(self):
        with pytest.raises(InstabilityError):
            solve_discrete_lyapunov(np.diag([1.5, 0.2]), np.eye(2), check_stability=False)

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, n=st.integers(1, 15))
    def test_matches_scipy(self, seed, n):
        from scipy.linalg import solve_discrete_lyapunov as ref

        rng = np.random.default_rng(seed)
        A = random_stable(rng, n, 0.95)
        G = rng.standard_normal((n, n))
        Q = G @ G.T
        X = solve_discrete_lyapunov(A, Q)
        np.testing.assert_allclose(X, ref(A, Q), rtol=1e-8, atol=1e-10 * np.linalg.norm(X))
        np.testing.assert_allclose(X, X.T)
        np.testing.assert_allclose(A @ X @ A.T + Q, X, atol=1e-9 * np.linalg.norm(X))


def test_spectral_radius():
    assert spectral_radius(np.array([[0.0, 1.0], [-0.25, 0.0]])) == pytest.approx(0.5)
