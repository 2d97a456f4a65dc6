"""Sparse symmetric operators: CG, Lanczos extremal eigenvalues, condition numbers."""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_THRESHOLD = 3000
# eigenvalues below this fraction of lambda_max count as zero
ZERO_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Iteration failure; ``x`` holds the last iterate when the stall was benign."""

    def __init__(self, message: str, residual: float, history: list | None = None,
                 x: np.ndarray | None = None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []
        self.x = x


class SparseSym:
    """Symmetric matrix in compressed-row storage with a cached diagonal."""

    def __init__(self, matrix, check: bool = True):
        A = sp.csr_matrix(matrix, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        A.sum_duplicates()
        A.sort_indices()
        if check and A.nnz:
            asym = abs(A - A.T).max()
            scale = abs(A).max()
            if asym > 1e-12 * scale:
                raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
        self.csr = A
        self.n = A.shape[0]
        self.diag = A.diagonal()

    @classmethod
    def wrap(cls, A) -> "SparseSym":
        return A if isinstance(A, cls) else cls(A)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x

    __matmul__ = apply

    @property
    def shape(self):
        return (self.n, self.n)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def scaled(self, d: np.ndarray) -> "SparseSym":
        """``diag(d) A diag(d)``."""
        D = sp.diags(d)
        return SparseSym(D @ self.csr @ D, check=False)

    def permuted(self, perm: np.ndarray) -> "SparseSym":
        return SparseSym(self.csr[perm][:, perm], check=False)


def _unit(v: np.ndarray | None) -> np.ndarray | None:
    if v is None:
        return None
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def cg_solve(A, b: np.ndarray, precond="none", tol: float = 1e-10,
             max_iter: int | None = None, x0: np.ndarray | None = None,
             deflate: np.ndarray | None = None, diag: np.ndarray | None = None) -> np.ndarray:
    """Preconditioned conjugate gradients for ``A x = b``.

    ``A`` is a :class:`SparseSym`, anything supporting ``@``, or a callable.
    ``precond`` is ``"none"``, ``"jacobi"`` (diagonal taken from ``A`` or
    ``diag``) or a callable applying an approximate inverse.  With ``deflate`` the iteration runs on the orthogonal
    complement of that vector, which may span the kernel of ``A``.

    Convergence is confirmed on the true residual.  If that check fails twice
    without the true residual halving in between, the iteration has hit the
    rounding floor; a :class:`ConvergenceError` carrying the iterate is raised.
    """
    apply = A if callable(A) and not hasattr(A, "__matmul__") else (lambda x: A @ x)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    max_iter = 20 * n if max_iter is None else max_iter
    v = _unit(deflate)

    def project(x):
        return x if v is None else x - (v @ x) * v

    if callable(precond):
        minv = precond
    elif precond == "jacobi":
        d = diag
        if d is None:
            d = A.diag if isinstance(A, SparseSym) else (A.diagonal() if sp.issparse(A) else None)
        if d is None:
            raise ValueError("Jacobi preconditioning needs a diagonal")
        if np.any(d <= 0):
            raise ValueError("Jacobi preconditioning needs a positive diagonal")
        dinv = 1.0 / d
        minv = lambda r: r * dinv  # noqa: E731
    elif precond in ("none", None):
        minv = None
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")

    b = project(b)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else project(np.array(x0, dtype=float))
    if bnorm == 0.0:
        return x
    r = b - apply(x) if x0 is not None else b.copy()
    z = project(minv(r)) if minv is not None else r.copy()
    p = z.copy()
    rz = r @ z
    history = []
    last_true = np.inf
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        pAp = p @ Ap
        if pAp <= 0.0:
            raise ConvergenceError(f"CG breakdown at iteration {it} (p^T A p = {pAp:.3e})",
                                   float(np.linalg.norm(r) / bnorm), history)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if it % 50 == 0:
            history.append((it, rel))
        if rel <= tol:
            # guard against drift of the recursive residual
            r = b - project(apply(x))
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol:
                return project(x)
            if rel > 0.5 * last_true:
                raise ConvergenceError(
                    f"CG stagnated at relative residual {rel:.3e} after {it} iterations "
                    f"(tolerance {tol:g})", float(rel), history, project(x))
            last_true = rel
            # restart from the true residual
            z = project(minv(r)) if minv is not None else r.copy()
            p = z.copy()
            rz = r @ z
            continue
        z = project(minv(r)) if minv is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (relative residual {rel:.3e}; "
        f"trace {history[-5:]})", float(rel), history)


def _householder_deflate(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Restriction of symmetric ``A`` to the orthogonal complement of ``v``."""
    v = _unit(v)
    e = np.zeros_like(v)
    e[0] = 1.0
    w = v - e if v[0] <= 0 else v + e
    w /= np.linalg.norm(w)
    H = np.eye(len(v)) - 2.0 * np.outer(w, w)
    B = H @ A @ H
    return 0.5 * (B[1:, 1:] + B[1:, 1:].T)


def dense_eigenvalues(A, deflate: np.ndarray | None = None) -> np.ndarray:
    """All eigenvalues of ``A`` (restricted to ``deflate``'s complement), ascending."""
    M = A.to_dense() if isinstance(A, SparseSym) else (A.toarray() if sp.issparse(A) else np.asarray(A, float))
    if deflate is not None:
        M = _householder_deflate(M, np.asarray(deflate, float))
    return scipy.linalg.eigvalsh(M)


def _lanczos_max(apply, n: int, project, rng, tol: float, max_iter: int):
    """Eigenvalue of largest modulus of a symmetric operator (Lanczos, full reorthogonalization)."""
    k_max = min(max_iter, n)
    Q = np.zeros((n, k_max))
    alpha = np.zeros(k_max)
    beta = np.zeros(k_max)
    q = project(rng.standard_normal(n))
    q /= np.linalg.norm(q)
    theta, resid = 0.0, np.inf
    for j in range(k_max):
        Q[:, j] = q
        w = project(apply(q))
        alpha[j] = q @ w
        w -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
        w -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
        beta[j] = np.linalg.norm(w)
        m = j + 1
        if m == 1:
            vals, vecs = np.array([alpha[0]]), np.ones((1, 1))
        else:
            vals, vecs = scipy.linalg.eigh_tridiagonal(alpha[:m], beta[:m - 1])
        i = int(np.argmax(np.abs(vals)))
        theta = vals[i]
        resid = abs(beta[j] * vecs[-1, i])
        if resid <= tol * abs(theta) or beta[j] <= 1e-14 * max(abs(theta), 1e-300) or m == n:
            return theta, resid
        q = w / beta[j]
    raise ConvergenceError(
        f"Lanczos did not converge in {k_max} iterations (Ritz value {theta:.6e}, "
        f"residual {resid:.3e})", float(resid))


def _bordered_solver(A: SparseSym, v: np.ndarray | None):
    """Solve ``A x = b`` on the complement of ``v`` (the pseudo-inverse action)."""
    if v is None:
        lu = spla.splu(A.csr.tocsc())
        return lu.solve
    n = A.n
    col = sp.csc_matrix(v.reshape(-1, 1))
    K = sp.bmat([[A.csr, col], [col.T, None]], format="csc")
    lu = spla.splu(K)

    def solve(b):
        rhs = np.zeros(n + 1)
        rhs[:n] = b - (v @ b) * v
        return lu.solve(rhs)[:n]

    return solve


def _smallest_nonzero_sliced(A: SparseSym, v: np.ndarray | None, lam_max: float,
                             tol: float) -> float:
    """Smallest eigenvalue above the zero threshold when ``A`` has extra null modes.

    Runs shift-invert on ``A + eps I`` (``eps`` at the threshold) and widens
    the block of wanted eigenvalues until one clears the threshold.
    """
    n = A.n
    eps = ZERO_TOL * lam_max
    lu = spla.splu((A.csr + eps * sp.identity(n, format="csr")).tocsc())
    project = (lambda x: x) if v is None else (lambda x: x - (v @ x) * v)
    op = spla.LinearOperator((n, n), matvec=lambda x: project(lu.solve(project(np.ravel(x)))),
                             dtype=float)
    k = 8
    while True:
        k = min(k, n - 2)
        mu = spla.eigsh(op, k=k, which="LA", tol=tol, return_eigenvectors=False)
        lam = 1.0 / mu[mu > 0] - eps
        good = lam[lam > ZERO_TOL * lam_max]
        if good.size:
            return float(good.min())
        if k >= n - 2:
            raise ConvergenceError("no nonzero eigenvalue found", float("nan"))
        k *= 2


def extremal_eigs(A, deflate: np.ndarray | None = None, method: str = "auto",
                  tol: float = 1e-8, max_iter: int = 500, seed: int = 0) -> tuple[float, float]:
    """``(lambda_max, lambda_min_nonzero)`` in modulus of a symmetric PSD matrix.

    ``deflate`` spans the known kernel, which is factored out.  Any further
    eigenvalues below ``ZERO_TOL * lambda_max`` are treated as zero and
    skipped.  ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up
    to 3000 unknowns).
    """
    A = SparseSym.wrap(A)
    v = _unit(deflate)
    if method == "auto":
        method = "dense" if A.n <= DENSE_THRESHOLD else "lanczos"
    if method == "dense":
        mags = np.abs(dense_eigenvalues(A, v))
        lam_max = float(mags.max())
        nonzero = mags[mags > ZERO_TOL * lam_max]
        if nonzero.size == 0:
            raise ConvergenceError("matrix has no nonzero eigenvalue", 0.0)
        return lam_max, float(nonzero.min())
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")

    project = (lambda x: x) if v is None else (lambda x: x - (v @ x) * v)
    rng = np.random.default_rng(seed)
    lam_max, _ = _lanczos_max(A.apply, A.n, project, rng, tol, max_iter)
    lam_max = abs(lam_max)
    solve = _bordered_solver(A, v)
    mu, _ = _lanczos_max(solve, A.n, project, rng, tol, max_iter)
    lam_min = 1.0 / abs(mu)
    if lam_min <= ZERO_TOL * lam_max:
        lam_min = _smallest_nonzero_sliced(A, v, lam_max, tol)
    return float(lam_max), float(lam_min)


def condition_number(A, deflate: np.ndarray | None = None, precond: str = "none",
                     method: str = "auto", **kw) -> float:
    """Ratio of extreme nonzero eigenvalues, optionally of ``D^-1/2 A D^-1/2``."""
    A = SparseSym.wrap(A)
    v = None if deflate is None else np.asarray(deflate, float)
    if precond == "jacobi":
        d = np.sqrt(A.diag)
        A = A.scaled(1.0 / d)
        if v is not None:
            v = v * d
    elif precond not in ("none", None):
        raise ValueError(f"unknown preconditioner {precond!r}")
    lmax, lmin = extremal_eigs(A, v, method=method, **kw)
    return lmax / lmin
