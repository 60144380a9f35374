"""Dense linear-algebra kernels used throughout the package.

Everything here is a pure function of its inputs. Eigen-decompositions are
backed by LAPACK through numpy; the Lyapunov solver and the orthonormalization
are implemented directly so their stopping and rank rules are explicit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DefectiveMatrixError,
    InstabilityError,
    NonFiniteError,
    RankError,
    ShapeError,
)

GEN_EIG_MAX_SIZE = 512
DISTINCT_TOL = 1e-8
ORTH_DROP_TOL = 1e-10
SMITH_TOL = 1e-14
SMITH_MAX_DOUBLINGS = 200


@dataclass(frozen=True, eq=False)
class GenEigResult:
    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray


def _as_square(M, name="M"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return M


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def sym_eig_min(M):
    """Smallest eigenvalue of ``(M + M.T) / 2``."""
    M = _as_square(M).astype(float)
    if M.shape[0] == 0:
        raise ShapeError("empty matrix")
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def is_positive_definite(M, margin=0.0):
    return sym_eig_min(M) > margin


def spectral_radius(A):
    A = _as_square(A, "A")
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _min_gap(lam):
    if lam.size < 2:
        return np.inf
    diff = np.abs(lam[:, None] - lam[None, :])
    diff[np.diag_indices_from(diff)] = np.inf
    return float(diff.min())


def gen_eig(M, *, max_size=GEN_EIG_MAX_SIZE, distinct_tol=DISTINCT_TOL):
    """Eigendecomposition of a real, non-defective square matrix.

    Eigenvalues are ordered by real part, then by magnitude of the imaginary
    part, so complex-conjugate pairs sit next to each other (negative imaginary
    part first). Each eigenvector has unit norm and its largest-magnitude entry
    is made real and positive; the partner of a complex pair is stored as the
    exact conjugate.

    Raises
    ------
    DefectiveMatrixError
        If two eigenvalues are closer than ``distinct_tol * ||M||_F``.
    """
    M = _as_square(M).astype(float)
    n = M.shape[0]
    if n > max_size:
        raise ShapeError(f"gen_eig is capped at size {max_size}, got {n}")
    lam, X = np.linalg.eig(M)
    lam = lam.astype(complex)
    X = X.astype(complex)

    order = np.lexsort((lam.imag, np.abs(lam.imag), lam.real))
    lam = lam[order]
    X = X[:, order]

    threshold = distinct_tol * max(np.linalg.norm(M), np.finfo(float).tiny)
    gap = _min_gap(lam)
    if gap < threshold:
        raise DefectiveMatrixError(gap, threshold)

    X = X / np.linalg.norm(X, axis=0)
    k = 0
    while k < n:
        x = X[:, k]
        j = int(np.argmax(np.abs(x)))
        X[:, k] = x * (abs(x[j]) / x[j])
        if lam[k].imag != 0.0 and k + 1 < n and lam[k + 1] == np.conj(lam[k]):
            X[:, k + 1] = np.conj(X[:, k])
            k += 2
        else:
            if lam[k].imag == 0.0:
                X[:, k] = X[:, k].real
            k += 1
    return GenEigResult(lam, X)


def orthonormalize(M, drop_tol=ORTH_DROP_TOL):
    """Orthonormal basis of ``col(M)`` by Gram-Schmidt with reorthogonalization.

    Columns whose residual after projecting out the current basis falls below
    ``drop_tol * ||M||_F`` are dropped.

    Returns
    -------
    Q : ndarray
        ``rows x rank`` with orthonormal columns.
    rank : int
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("M has non-finite entries")
    rows, cols = M.shape
    if rows < cols:
        raise ShapeError(f"need rows >= cols, got {M.shape}")
    scale = np.linalg.norm(M)
    if scale == 0.0:
        raise RankError("zero matrix has rank 0", rank=0)
    threshold = drop_tol * scale
    basis = []
    for j in range(cols):
        v = M[:, j].copy()
        for _ in range(2):
            for q in basis:
                v -= (q @ v) * q
        nv = np.linalg.norm(v)
        if nv >= threshold:
            basis.append(v / nv)
    if not basis:
        raise RankError("matrix is numerically rank 0", rank=0)
    return np.column_stack(basis), len(basis)


def solve_discrete_lyapunov(A, Q, *, tol=SMITH_TOL, max_doublings=SMITH_MAX_DOUBLINGS,
                            check_stability=True):
    """Solve ``X = A X A^T + Q`` with the squared Smith iteration.

    ``X_{k+1} = X_k + A_k X_k A_k^T``, ``A_{k+1} = A_k^2``, starting from
    ``X_0 = Q``; stops once the update is below ``tol`` relative to ``X``.

    With ``check_stability=False`` the eigenvalue test is skipped and
    instability is only detected through divergence of the iteration; use it
    when the caller already knows ``A`` is Schur stable.
    """
    A = _as_square(A, "A").astype(float)
    Q = _as_square(Q, "Q").astype(float)
    if A.shape != Q.shape:
        raise ShapeError(f"A {A.shape} and Q {Q.shape} differ in size")
    if check_stability:
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise InstabilityError(rho)
    X = symmetrize(Q)
    Ak = A.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_doublings):
            update = Ak @ X @ Ak.T
            X = X + update
            Ak = Ak @ Ak
            xn = np.linalg.norm(X)
            if not np.isfinite(xn):
                raise InstabilityError(np.nan)
            if np.linalg.norm(update) <= tol * max(xn, np.finfo(float).tiny):
                break
        else:
            if not check_stability:
                raise InstabilityError(np.nan)
    return symmetrize(X)
