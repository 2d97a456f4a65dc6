import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cutdg.linalg import (ConvergenceError, SparseSym, cg_solve, condition_number,
                          dense_eigenvalues, extremal_eigs)

P3 = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])


def _random_psd(n, rng, kernel=False):
    """``Q diag(lam) Q^T`` with a spread spectrum; optionally one planted zero."""
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = 10.0 ** rng.uniform(-2, 2, n)
    if kernel:
        lam[0] = 0.0
    A = (Q * lam) @ Q.T
    A = 0.5 * (A + A.T)
    return A, (Q[:, 0] if kernel else None)


class TestSparseSym:
    @given(st.integers(1, 50), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_apply_matches_dense(self, n, seed):
        rng = np.random.default_rng(seed)
        B = sp.random(n, n, density=0.2, random_state=seed).toarray()
        A = B + B.T
        x = rng.normal(size=n)
        S = SparseSym(A)
        assert np.abs(S @ x - A @ x).max() <= 1e-13 * max(1.0, np.abs(A).sum(axis=1).max() * np.abs(x).max())
        assert_allclose(S.diag, np.diag(A))
        assert_allclose(S.to_dense(), A)

    def test_rejects_unsymmetric(self):
        with pytest.raises(ValueError):
            SparseSym(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            SparseSym(np.ones((2, 3)))


class TestCG:
    def test_identity(self, rng):
        b = rng.normal(size=7)
        assert_allclose(cg_solve(sp.identity(7, format="csr"), b), b, rtol=1e-14)

    def test_diagonal(self):
        A = SparseSym(np.diag([1.0, 2.0, 4.0]))
        for pc in ("none", "jacobi"):
            assert_allclose(cg_solve(A, np.array([1.0, 2.0, 4.0]), precond=pc), 1.0, rtol=1e-12)

    def test_deflated_path_laplacian(self):
        b = np.array([1.0, 0.0, -1.0])
        x = cg_solve(SparseSym(P3), b, deflate=np.ones(3))
        assert_allclose(x, np.linalg.pinv(P3) @ b, atol=1e-12)
        assert abs(x.sum()) <= 1e-12
        # hand pseudo-inverse: P3^+ = [[5,-1,-4],[-1,2,-1],[-4,-1,5]] / 9
        assert_allclose(x, np.array([[5, -1, -4], [-1, 2, -1], [-4, -1, 5]]) @ b / 9, atol=1e-12)

    def test_random_spd(self, rng):
        A, _ = _random_psd(60, rng)
        b = rng.normal(size=60)
        for pc in ("none", "jacobi"):
            x = cg_solve(SparseSym(A), b, precond=pc, tol=1e-12)
            assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)

    def test_callable_operator_and_preconditioner(self, rng):
        A, _ = _random_psd(30, rng)
        b = rng.normal(size=30)
        Ainv = np.linalg.inv(A)
        x = cg_solve(lambda v: A @ v, b, precond=lambda r: Ainv @ r)
        assert_allclose(A @ x, b, atol=1e-9)

    def test_nonconvergence(self, rng):
        A, _ = _random_psd(40, rng)
        with pytest.raises(ConvergenceError) as info:
            cg_solve(SparseSym(A), rng.normal(size=40), max_iter=2)
        assert info.value.residual > 1e-10 and "did not converge" in str(info.value)

    def test_breakdown_on_indefinite(self):
        with pytest.raises(ConvergenceError):
            cg_solve(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))

    def test_bad_preconditioner(self):
        with pytest.raises(ValueError):
            cg_solve(SparseSym(np.diag([1.0, 0.0])), np.ones(2), precond="jacobi")
        with pytest.raises(ValueError):
            cg_solve(SparseSym(np.eye(2)), np.ones(2), precond="ilu")


class TestExtremalEigs:
    @pytest.mark.parametrize("method", ["dense", "lanczos"])
    def test_fixtures(self, method):
        assert_allclose(extremal_eigs(np.eye(4), method=method), (1.0, 1.0), rtol=1e-8)
        assert_allclose(extremal_eigs(np.diag([0.0, 1.0, 3.0]), np.array([1.0, 0, 0]),
                                      method=method), (3.0, 1.0), rtol=1e-8)
        assert_allclose(extremal_eigs(P3, np.ones(3), method=method), (3.0, 1.0), rtol=1e-8)

    @pytest.mark.parametrize("kernel", [False, True])
    def test_random_against_numpy(self, kernel):
        rng = np.random.default_rng(7 if kernel else 3)
        for _ in range(20):
            n = int(rng.integers(10, 201))
            A, v = _random_psd(n, rng, kernel)
            w = np.linalg.eigvalsh(A)
            if kernel:
                w = w[np.argsort(np.abs(w))][1:]
            want = (np.abs(w).max(), np.abs(w).min())
            for method in ("dense", "lanczos"):
                got = extremal_eigs(A, v, method=method)
                assert_allclose(got, want, rtol=1e-5)

    def test_dense_deflation_drops_one_value(self):
        w = dense_eigenvalues(SparseSym(P3), np.ones(3) / np.sqrt(3))
        assert_allclose(np.sort(w), [1.0, 3.0], atol=1e-14)

    def test_extra_kernel_is_skipped(self, rng):
        # two planted zeros but only one deflated: the other is filtered as zero
        Q, _ = np.linalg.qr(rng.normal(size=(40, 40)))
        lam = np.r_[0.0, 0.0, np.linspace(1, 5, 38)]
        A = (Q * lam) @ Q.T
        A = 0.5 * (A + A.T)
        for method in ("dense", "lanczos"):
            assert_allclose(extremal_eigs(A, Q[:, 0], method=method), (5.0, 1.0), rtol=1e-6)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            extremal_eigs(np.eye(2), method="power")


class TestConditionNumber:
    def test_fixtures(self):
        assert condition_number(np.eye(5)) == pytest.approx(1.0, rel=1e-12)
        assert condition_number(np.diag([1.0, 2.0, 4.0])) == pytest.approx(4.0, rel=1e-12)
        assert condition_number(P3, np.ones(3)) == pytest.approx(3.0, rel=1e-12)

    def test_permutation_invariance(self, rng):
        for kernel in (False, True):
            A, v = _random_psd(80, rng, kernel)
            perm = rng.permutation(80)
            Ap = A[perm][:, perm]
            vp = None if v is None else v[perm]
            for pc in ("none", "jacobi"):
                k1 = condition_number(A, v, precond=pc)
                k2 = condition_number(Ap, vp, precond=pc)
                assert k2 == pytest.approx(k1, rel=1e-8)

    def test_jacobi_bound(self, rng):
        for _ in range(10):
            n = int(rng.integers(5, 60))
            A, _ = _random_psd(n, rng)
            assert condition_number(A, precond="jacobi") <= n * condition_number(A)

    def test_jacobi_of_diagonal_is_one(self):
        assert condition_number(np.diag([1.0, 10.0, 1e4]), precond="jacobi") == pytest.approx(1.0)

    def test_at_least_one(self, rng):
        A, v = _random_psd(30, rng, kernel=True)
        assert condition_number(A, v) >= 1.0

    def test_unknown_preconditioner(self):
        with pytest.raises(ValueError):
            condition_number(np.eye(2), precond="amg")
