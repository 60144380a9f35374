"""LTI component of a REN: transfer functions, h2 norms and optimality checks."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .errors import ShapeError, ShiftAtPoleError, UnboundedH2Error
from .numerics import gen_eig, solve_discrete_lyapunov

log = logging.getLogger(__name__)

MIRROR_FLOOR = 1e-8
OPTIMALITY_TOL = 1e-6
H2_CANCEL_RATIO = 1e-4
H2_TAIL_RATIO = 1e-10
H2_MAX_MARKOV = 5000


@dataclass(frozen=True, eq=False)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], B.shape[1]):
            raise ShapeError(f"inconsistent state-space shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        for name, val in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]


def extract_lti(model):
    """Map ``(w, u) -> (v, y)`` of the REN's linear block; biases are dropped."""
    return LtiSystem(
        A=model.A,
        B=np.hstack([model.B1, model.B2]),
        C=np.vstack([model.C1, model.C2]),
        D=np.block([[model.D11, model.D12], [model.D21, model.D22]]),
    )


def split_lti(sys, q, m):
    """Inverse of :func:`extract_lti` for the weight blocks."""
    return {
        "A": sys.A,
        "B1": sys.B[:, :q], "B2": sys.B[:, q:q + m],
        "C1": sys.C[:q], "C2": sys.C[q:],
        "D11": sys.D[:q, :q], "D12": sys.D[:q, q:],
        "D21": sys.D[q:, :q], "D22": sys.D[q:, q:],
    }


def _resolvent_solve(A, z, rhs):
    M = z * np.eye(A.shape[0]) - A
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("error", spla.LinAlgWarning)
        try:
            X = spla.solve(M, rhs)
        except (np.linalg.LinAlgError, spla.LinAlgWarning, ValueError):
            raise ShiftAtPoleError(z) from None
    # scipy's diagonal fast path divides by zero instead of raising
    if not np.all(np.isfinite(X)):
        raise ShiftAtPoleError(z)
    return X


def transfer_eval(sys, z):
    """``H(z) = C (zI - A)^{-1} B + D``."""
    if sys.n == 0:
        return sys.D.astype(complex)
    return sys.C @ _resolvent_solve(sys.A, complex(z), sys.B.astype(complex)) + sys.D


def transfer_deriv(sys, z):
    """``H'(z) = -C (zI - A)^{-2} B``."""
    if sys.n == 0:
        return np.zeros_like(sys.D, dtype=complex)
    z = complex(z)
    X = _resolvent_solve(sys.A, z, sys.B.astype(complex))
    return -sys.C @ _resolvent_solve(sys.A, z, X)


def transfer_apply(sys, z, r):
    """``H(z) r`` for a single direction, with one vector solve."""
    r = np.asarray(r, dtype=complex)
    if sys.n == 0:
        return sys.D @ r
    try:
        x = np.linalg.solve(complex(z) * np.eye(sys.n) - sys.A, sys.B @ r)
    except np.linalg.LinAlgError:
        raise ShiftAtPoleError(z) from None
    if not np.all(np.isfinite(x)):
        raise ShiftAtPoleError(z)
    return sys.C @ x + sys.D @ r


def controllability_gramian(sys, check_stability=True):
    return solve_discrete_lyapunov(sys.A, sys.B @ sys.B.T, check_stability=check_stability)


def observability_gramian(sys, check_stability=True):
    return solve_discrete_lyapunov(sys.A.T, sys.C.T @ sys.C, check_stability=check_stability)


def h2_norm(sys):
    """h2 norm of the strictly proper part ``C (zI - A)^{-1} B``."""
    if sys.n == 0:
        return 0.0
    X = controllability_gramian(sys)
    return float(np.sqrt(max(np.trace(sys.C @ X @ sys.C.T), 0.0)))


def error_system(full, red):
    if full.D.shape != red.D.shape:
        raise ShapeError("systems have different input/output dimensions")
    scale = max(np.abs(full.D).max(initial=0.0), 1.0)
    if np.abs(full.D - red.D).max(initial=0.0) > 1e-12 * scale:
        raise UnboundedH2Error("feedthrough matrices differ; the error is not in h2")
    n, r = full.n, red.n
    Ae = np.zeros((n + r, n + r))
    Ae[:n, :n] = full.A
    Ae[n:, n:] = red.A
    return LtiSystem(Ae, np.vstack([full.B, red.B]), np.hstack([full.C, -red.C]),
                     np.zeros_like(full.D))


def h2_error(full, red, *, gramian="controllability", check_stability=True):
    """``||H - H_red||_h2`` via a Gramian of the error system.

    ``gramian="observability"`` uses the dual Lyapunov equation instead; both
    give the same value up to rounding.
    """
    err = error_system(full, red)
    n = full.n
    if gramian == "controllability":
        X = controllability_gramian(err, check_stability)

        def tail(F, G):
            F1, F2 = F[:, :n], F[:, n:]
            return (np.trace(F @ X @ F.T),
                    np.trace(F1 @ X[:n, :n] @ F1.T) + np.trace(F2 @ X[n:, n:] @ F2.T))
    elif gramian == "observability":
        Y = observability_gramian(err, check_stability)

        def tail(F, G):
            G1, G2 = G[:n], G[n:]
            return (np.trace(G.T @ Y @ G),
                    np.trace(G1.T @ Y[:n, :n] @ G1) + np.trace(G2.T @ Y[n:, n:] @ G2))
    else:
        raise ValueError(f"unknown gramian {gramian!r}")
    # scale is the sum of the two systems' squared norms, free of cancellation
    val, scale = tail(err.C, err.B)
    if val < H2_CANCEL_RATIO * scale:
        val = _h2_sq_markov(err, tail, scale)
    return float(np.sqrt(max(val, 0.0)))


def _h2_sq_markov(err, tail, scale):
    """``sum_k ||C A^k B||_F^2`` for ``k < K`` plus the Gramian tail from ``K``.

    The Gramian trace subtracts terms of size ``||H||^2``, which limits the
    relative accuracy of a small error to about ``sqrt(eps)``. Summing the
    Markov-parameter differences directly avoids that cancellation; only the
    tail still comes from the Gramian, and ``K`` grows until the tail's
    uncancelled block terms are negligible against ``scale``.
    """
    F, G = err.C.copy(), err.B.copy()      # C A^k and A^k B
    head = 0.0
    for _ in range(H2_MAX_MARKOV):
        rest, size = tail(F, G)
        if abs(size) <= H2_TAIL_RATIO * scale:
            break
        head += np.sum((F @ err.B) ** 2)
        F, G = F @ err.A, err.A @ G
    return head + rest


def _rel(diff, ref, floor):
    return float(np.linalg.norm(diff) / max(np.linalg.norm(ref), floor, np.finfo(float).tiny))


def interpolation_residuals(full, red, data):
    """Relative mismatch ``|H(t_k) r_k - H_red(t_k) r_k| / |H(t_k) r_k|`` per k."""
    out = np.empty(len(data.shifts))
    for k, (tau, r) in enumerate(zip(data.shifts, data.directions.T)):
        lhs = transfer_apply(full, tau, r)
        rhs = transfer_apply(red, tau, r)
        floor = 1e-12 * np.linalg.norm(lhs)
        out[k] = _rel(lhs - rhs, lhs, floor)
    return out


@dataclass
class OptimalityReport:
    """Residuals of the necessary h2-optimality conditions at mirrored poles.

    ``b_residuals`` are the right-tangential conditions that the one-sided
    iteration enforces at a fixed point; ``c_residuals`` and
    ``deriv_residuals`` are reported for information only.
    """

    poles: np.ndarray
    mirror_points: np.ndarray
    b_residuals: np.ndarray
    c_residuals: np.ndarray
    deriv_residuals: np.ndarray
    excluded: list
    tol: float

    @property
    def b_ok(self):
        return bool(np.all(self.b_residuals <= self.tol))

    @property
    def c_ok(self):
        return bool(np.all(self.c_residuals <= self.tol))

    @property
    def deriv_ok(self):
        return bool(np.all(self.deriv_residuals <= self.tol))

    def summary(self):
        def mx(a):
            return float(a.max()) if a.size else 0.0
        return {
            "b_max": mx(self.b_residuals), "c_max": mx(self.c_residuals),
            "deriv_max": mx(self.deriv_residuals), "b_ok": self.b_ok,
            "c_ok": self.c_ok, "deriv_ok": self.deriv_ok, "tol": self.tol,
            "excluded": list(self.excluded),
        }


def check_optimality(full, red, tol=OPTIMALITY_TOL):
    eig = gen_eig(red.A)
    lam, X = eig.eigenvalues, eig.right_eigenvectors
    Bh = np.linalg.solve(X, red.B.astype(complex))   # rows are b_k
    Ch = red.C @ X                                     # columns are c_k
    b_res, c_res, d_res, mirrors, poles, excluded = [], [], [], [], [], []
    for k, lk in enumerate(lam):
        if abs(lk) < MIRROR_FLOOR:
            log.warning("pole %d (|lambda|=%.2e) below the mirror floor, skipped", k, abs(lk))
            excluded.append(k)
            continue
        mu = 1.0 / np.conj(lk)
        b = np.conj(Bh[k])
        c = np.conj(Ch[:, k])
        H, Hr = transfer_eval(full, mu), transfer_eval(red, mu)
        dH, dHr = transfer_deriv(full, mu), transfer_deriv(red, mu)
        hn = np.linalg.norm(H)
        lhs = H @ b
        b_res.append(_rel(lhs - Hr @ b, lhs, 1e-12 * hn * np.linalg.norm(b)))
        lhs = c @ H
        c_res.append(_rel(lhs - c @ Hr, lhs, 1e-12 * hn * np.linalg.norm(c)))
        lhs = c @ dH @ b
        d_res.append(_rel(lhs - c @ dHr @ b, lhs,
                          1e-12 * np.linalg.norm(dH) * np.linalg.norm(b) * np.linalg.norm(c)))
        mirrors.append(mu)
        poles.append(lk)
    return OptimalityReport(np.array(poles), np.array(mirrors), np.array(b_res),
                            np.array(c_res), np.array(d_res), excluded, tol)


def controllability_rank(A, B, tol=1e-8):
    """Dimension of the reachable subspace, via an orthonormal block Krylov basis."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    scale = max(np.linalg.norm(A, 2), 1.0)

    def _range(M, ref):
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        return U[:, s > tol * ref]

    basis = _range(B, max(np.linalg.norm(B, 2), np.finfo(float).tiny))
    block = basis
    while 0 < basis.shape[1] < n and block.shape[1] > 0:
        cand = A @ block
        for _ in range(2):
            cand -= basis @ (basis.T @ cand)
        block = _range(cand, scale)
        basis = np.hstack([basis, block])
    return min(basis.shape[1], n)
