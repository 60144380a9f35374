"""Certificate-preserving projection and the iterative tangential reduction.

The right projection ``V`` is built from rational Krylov directions
``(tau_k I - A)^{-1} B r_k``; the left projection is fixed by the REN
certificate, ``W^T = (V^T P V)^{-1} V^T P``, which keeps the contraction and
robustness LMIs feasible for the reduced model with ``P_hat = V^T P V``.
The interpolation data is then moved to the mirrored reduced poles and the
corresponding input residue directions until it stops changing.
"""

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DefectiveMatrixError,
    IllConditionedProjectionError,
    RankError,
    ReductionError,
    ShapeError,
    ShiftAtPoleError,
)
from .lti import extract_lti, h2_error, h2_norm, interpolation_residuals
from .model import Certificate, RenModel, RenPackage
from .numerics import gen_eig, orthonormalize, symmetrize
from .synth import make_rng

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100
DEFAULT_RESTARTS = 10
MIRROR_FLOOR = 1e-8
POLE_COLLISION_TOL = 1e-10
MAX_RANK_RESCUES = 5
PROJECTION_COND_LIMIT = 1e12
ANNULUS = (0.2, 0.9)
_REAL_TOL = 1e-12

HISTORY_HEADER = ("restart", "iter", "h2_error", "shift_rel_change", "max_interp_residual", "event")


def _is_real(z):
    return abs(z.imag) <= _REAL_TOL * max(abs(z), 1e-300)


def _fix_phase(r):
    j = int(np.argmax(np.abs(r)))
    if r[j] == 0:
        return r
    return r * (abs(r[j]) / r[j])


@dataclass(frozen=True, eq=False)
class TangentialData:
    """Interpolation shifts ``tau_k`` and right directions ``r_k`` (columns).

    Must be closed under conjugation: every strictly complex ``(tau, r)``
    appears together with ``(conj(tau), conj(r))``.
    """

    shifts: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.shifts, dtype=complex).ravel()
        R = np.asarray(self.directions, dtype=complex)
        if R.ndim == 1:
            R = R[:, None]
        if R.shape[1] != s.size:
            raise ShapeError(f"{s.size} shifts but {R.shape[1]} directions")
        used = np.zeros(s.size, dtype=bool)
        for k in range(s.size):
            if used[k]:
                continue
            if _is_real(s[k]):
                if np.abs(R[:, k].imag).max(initial=0.0) > _REAL_TOL * max(np.abs(R[:, k]).max(), 1e-300):
                    raise ValueError(f"real shift {s[k]} paired with a complex direction")
                used[k] = True
                continue
            partner = [
                j for j in range(s.size)
                if not used[j] and j != k
                and abs(s[j] - np.conj(s[k])) <= 1e-12 * abs(s[k])
                and np.allclose(R[:, j], np.conj(R[:, k]), rtol=1e-12, atol=1e-14)
            ]
            if not partner:
                raise ValueError(f"shift {s[k]} has no conjugate partner")
            used[k] = used[partner[0]] = True
        object.__setattr__(self, "shifts", s)
        object.__setattr__(self, "directions", R)

    def __len__(self):
        return self.shifts.size

    def canonical(self):
        """Sorted by (Re, |Im|, Im), unit directions, phase-fixed, exact pairs."""
        return canonical_data(self.shifts, self.directions)


def canonical_data(shifts, directions):
    shifts = np.asarray(shifts, dtype=complex)
    R = np.asarray(directions, dtype=complex)
    order = np.lexsort((shifts.imag, np.abs(shifts.imag), shifts.real))
    shifts, R = shifts[order].copy(), R[:, order].copy()
    k = 0
    while k < shifts.size:
        r = R[:, k]
        if _is_real(shifts[k]):
            shifts[k] = shifts[k].real
            r = r.real.astype(complex)
            R[:, k] = _fix_phase(r / np.linalg.norm(r))
            k += 1
            continue
        if k + 1 >= shifts.size:
            raise ValueError("unpaired complex shift")
        # upper member (Im > 0) is the reference; the lower one is its mirror
        up = k + 1 if shifts[k + 1].imag > 0 else k
        tau, r = shifts[up], R[:, up]
        r = _fix_phase(r / np.linalg.norm(r))
        shifts[k], shifts[k + 1] = np.conj(tau), tau
        R[:, k], R[:, k + 1] = np.conj(r), r
        k += 2
    return TangentialData(shifts, R)


def relative_change(old, new):
    """``|tau_new - tau_old| / |tau_old| + |R_new - R_old|_F / |R_old|_F`` on canonical forms."""
    a, b = old.canonical(), new.canonical()
    ds = np.linalg.norm(b.shifts - a.shifts) / max(np.linalg.norm(a.shifts), 1e-300)
    dr = np.linalg.norm(b.directions - a.directions) / max(np.linalg.norm(a.directions), 1e-300)
    return float(ds + dr)


def _sample_mirror(rng, real):
    lo, hi = ANNULUS
    radius = np.sqrt(rng.uniform(lo ** 2, hi ** 2))
    if real:
        return 1.0 / (radius * rng.choice([-1.0, 1.0]))
    mu = radius * np.exp(1j * rng.uniform(0.0, np.pi))
    return 1.0 / np.conj(mu)


def initial_tangential_data(n_hat, n_inputs, rng, poles=None):
    """Random shifts mirrored from the annulus ``0.2 <= |mu| <= 0.9``.

    ``n_hat // 2`` conjugate pairs plus one real shift when ``n_hat`` is odd;
    directions are Gaussian, unit-norm and conjugate-paired.
    """
    shifts, dirs = [], []
    for _ in range(n_hat // 2):
        tau = _sample_shift_avoiding(rng, False, poles)
        r = rng.standard_normal(n_inputs) + 1j * rng.standard_normal(n_inputs)
        shifts += [np.conj(tau), tau]
        dirs += [np.conj(r), r]
    if n_hat % 2:
        shifts.append(_sample_shift_avoiding(rng, True, poles))
        dirs.append(rng.standard_normal(n_inputs).astype(complex))
    return canonical_data(np.array(shifts), np.column_stack(dirs))


def _collides(tau, poles):
    if poles is None or len(poles) == 0:
        return False
    return bool(np.min(np.abs(poles - tau)) < POLE_COLLISION_TOL * max(1.0, abs(tau)))


def _sample_shift_avoiding(rng, real, poles):
    for _ in range(100):
        tau = _sample_mirror(rng, real)
        if not _collides(tau, poles):
            return tau
    raise ShiftAtPoleError(tau)


def _krylov_columns(sys, data):
    """Real basis vectors spanning ``(tau_k I - A)^{-1} B r_k`` for all k."""
    n = sys.n
    cols = []
    for tau, r in zip(data.shifts, data.directions.T):
        if _is_real(tau):
            M = tau.real * np.eye(n) - sys.A
            rhs = sys.B @ r.real
        elif tau.imag > 0:
            M = tau * np.eye(n) - sys.A
            rhs = sys.B @ r
        else:
            continue
        try:
            with np.errstate(all="raise"):
                v = np.linalg.solve(M, rhs)
        except (np.linalg.LinAlgError, FloatingPointError):
            raise ShiftAtPoleError(tau) from None
        if not np.all(np.isfinite(v)):
            raise ShiftAtPoleError(tau)
        if np.iscomplexobj(v):
            cols += [v.real, v.imag]
        else:
            cols.append(v)
    return np.column_stack(cols)


def build_v(sys, data):
    """Orthonormal ``V`` whose range contains every tangential Krylov direction.

    Returns
    -------
    V : ndarray, ``n x rank``
    rank : int

    Raises
    ------
    RankError
        If the directions span fewer than ``len(data)`` dimensions.
    """
    raw = _krylov_columns(sys, data)
    V, rank = orthonormalize(raw)
    if rank < len(data):
        raise RankError(f"V has rank {rank} < {len(data)}", rank=rank)
    return V, rank


def certificate_w(V, P):
    """``W`` with ``W^T = (V^T P V)^{-1} V^T P``, so that ``W^T V = I``."""
    V = np.asarray(V, dtype=float)
    P = np.asarray(P, dtype=float)
    G = symmetrize(V.T @ P @ V)
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > PROJECTION_COND_LIMIT:
        raise IllConditionedProjectionError(f"V^T P V has condition number {cond:.3e}")
    Wt = np.linalg.solve(G, V.T @ P)
    # one refinement step: W^T V = I + E  ->  (I - E) W^T V = I - E^2
    E = Wt @ V - np.eye(V.shape[1])
    return (Wt - E @ Wt).T


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    V: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        W = np.asarray(self.W, dtype=float)
        if V.shape != W.shape or V.ndim != 2:
            raise ShapeError(f"V {V.shape} and W {W.shape} must have equal 2-D shapes")
        err = np.abs(W.T @ V - np.eye(V.shape[1])).max(initial=0.0)
        if err > 1e-10:
            raise ValueError(f"W^T V deviates from identity by {err:.2e}")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)

    @classmethod
    def from_certificate(cls, V, P):
        return cls(V, certificate_w(V, P))


def project(pkg, pair):
    """Reduced package ``(W^T A V, W^T B, C V, D)`` with certificate ``V^T P V``."""
    if pkg.certificate is None:
        raise ReductionError("projection requires a certified package")
    V, W = pair.V, pair.W
    mdl = pkg.model
    if V.shape[0] != mdl.n:
        raise ShapeError(f"V has {V.shape[0]} rows, model has n={mdl.n}")
    red = RenModel(
        A=W.T @ mdl.A @ V, B1=W.T @ mdl.B1, B2=W.T @ mdl.B2,
        C1=mdl.C1 @ V, D11=mdl.D11, D12=mdl.D12,
        C2=mdl.C2 @ V, D21=mdl.D21, D22=mdl.D22,
        beta_x=W.T @ mdl.beta_x, beta_v=mdl.beta_v, beta_y=mdl.beta_y,
        activation=mdl.activation,
    )
    cert = pkg.certificate
    red_cert = Certificate(symmetrize(V.T @ cert.P @ V), cert.Lambda, cert.alpha_bar)
    meta = dict(pkg.metadata)
    meta.update({"reduced_from_n": mdl.n, "n_hat": V.shape[1]})
    return RenPackage(red, red_cert, pkg.iqc, meta)


# --- iterative reduction ---------------------------------------------------

@dataclass
class IterationRecord:
    restart: int
    iter: int
    h2_error: float
    shift_rel_change: float
    max_interp_residual: float
    event: str = ""


@dataclass
class RestartSummary:
    restart: int
    converged: bool
    iterations: int
    final_change: float
    best_h2: float
    aborted: str = ""
    final_pair: ProjectionPair = None


@dataclass
class ReductionHistory:
    records: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    best_restart: int = -1
    best_iter: int = -1
    best_h2: float = np.inf
    full_h2_norm: float = np.nan

    def for_restart(self, restart):
        return [r for r in self.records if r.restart == restart]

    def h2_series(self, restart):
        return np.array([r.h2_error for r in self.for_restart(restart)])

    @property
    def best_relative_h2(self):
        return self.best_h2 / self.full_h2_norm if self.full_h2_norm > 0 else self.best_h2

    def to_csv(self, fh=None):
        own = fh is None
        fh = io.StringIO() if own else fh
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in self.records:
            w.writerow([r.restart, r.iter, repr(r.h2_error), repr(r.shift_rel_change),
                        repr(r.max_interp_residual), r.event])
        return fh.getvalue() if own else None


def _rescue_rank(raw, n_hat, rng):
    V, rank = orthonormalize(raw)
    n = raw.shape[0]
    while rank < n_hat:
        extra = rng.standard_normal((n, n_hat - rank))
        extra -= V @ (V.T @ extra)
        V, rank = orthonormalize(np.hstack([V, extra]))
    return V


def _update_data(eig, Bh_red, rng, poles):
    """Mirrored poles and ``(X^{-1} B_hat)^*`` directions, with degenerate shifts resampled."""
    lam, X = eig.eigenvalues, eig.right_eigenvectors
    Rm = np.conj(np.linalg.solve(X, Bh_red.astype(complex))).T
    shifts, dirs, events = [], [], []
    k = 0
    n_in = Rm.shape[0]
    while k < lam.size:
        real = lam[k].imag == 0.0
        width = 1 if real else 2
        idx = k if real else k + 1   # upper member of a pair
        lk = lam[idx]
        tau = 1.0 / np.conj(lk) if abs(lk) >= MIRROR_FLOOR else None
        r = Rm[:, idx]
        if tau is None or _collides(tau, poles) or not np.all(np.isfinite(r)) or np.linalg.norm(r) == 0:
            events.append("shift_resample")
            tau = _sample_shift_avoiding(rng, real, poles)
            r = rng.standard_normal(n_in) + (0 if real else 1j * rng.standard_normal(n_in))
        if real:
            shifts.append(complex(tau.real))
            dirs.append(np.asarray(r.real, dtype=complex))
        else:
            shifts += [np.conj(tau), tau]
            dirs += [np.conj(r), r]
        k += width
    return canonical_data(np.array(shifts), np.column_stack(dirs)), events


def isrk_reduce(pkg, n_hat, restarts=DEFAULT_RESTARTS, tol=DEFAULT_TOL,
                max_iter=DEFAULT_MAX_ITER, seed=0, *, callback=None):
    """Reduce the state dimension of a certified REN to ``n_hat``.

    Each restart starts from random tangential data and alternates
    ``V`` construction, certificate-based ``W``, projection and the
    mirrored-pole update until the relative change of the data drops below
    ``tol`` or ``max_iter`` is reached. The h2 error of the LTI part is
    recorded at every iterate; the iterate with the smallest error over all
    restarts is returned. Every iterate is certified with ``V^T P V``.

    Parameters
    ----------
    seed
        Integer or tuple of integers; restart ``i`` draws from
        ``make_rng(*seed, i)``.
    callback
        Optional ``callback(restart, iteration, reduced_pkg, data)`` invoked
        for every iterate.

    Returns
    -------
    (RenPackage, ReductionHistory)
    """
    if pkg.certificate is None:
        raise ReductionError("isrk_reduce requires a certified package")
    n = pkg.model.n
    if not 1 <= n_hat <= n:
        raise ValueError(f"n_hat must satisfy 1 <= n_hat <= {n}, got {n_hat}")
    if restarts < 1 or max_iter < 1:
        raise ValueError("restarts and max_iter must be positive")
    seed_key = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)

    full = extract_lti(pkg.model)
    P = pkg.certificate.P
    poles = np.linalg.eigvals(full.A)
    hist = ReductionHistory(full_h2_norm=h2_norm(full))
    best_pair = None

    for restart in range(restarts):
        rng = make_rng(*seed_key, restart)
        summary = RestartSummary(restart, False, 0, np.nan, np.inf)
        rescues = 0
        try:
            data = initial_tangential_data(n_hat, full.n_inputs, rng, poles)
        except ShiftAtPoleError as exc:
            summary.aborted = str(exc)
            hist.restarts.append(summary)
            continue
        for it in range(1, max_iter + 1):
            events = []
            try:
                raw = _krylov_columns(full, data)
            except ShiftAtPoleError:
                events.append("shift_at_pole")
                data = initial_tangential_data(n_hat, full.n_inputs, rng, poles)
                raw = _krylov_columns(full, data)
            try:
                V, rank = orthonormalize(raw)
            except RankError:
                V, rank = raw[:, :0], 0
            if rank < n_hat:
                rescues += 1
                events.append("rank_rescue")
                if rescues > MAX_RANK_RESCUES:
                    summary.aborted = "rank deficiency persisted"
                    log.info("restart %d aborted: %s", restart, summary.aborted)
                    break
                V = _rescue_rank(raw, n_hat, rng)
            try:
                pair = ProjectionPair.from_certificate(V, P)
            except (IllConditionedProjectionError, ValueError) as exc:
                summary.aborted = str(exc)
                break
            red_pkg = project(pkg, pair)
            red = extract_lti(red_pkg.model)
            err = h2_error(full, red, check_stability=False)
            interp = float(interpolation_residuals(full, red, data).max())
            if callback is not None:
                callback(restart, it, red_pkg, data)
            summary.iterations = it
            summary.final_pair = pair
            if err < summary.best_h2:
                summary.best_h2 = err
            if err < hist.best_h2:
                hist.best_h2, hist.best_restart, hist.best_iter = err, restart, it
                best_pair = pair
            try:
                eig = gen_eig(red.A)
            except DefectiveMatrixError:
                events.append("defective")
                hist.records.append(IterationRecord(restart, it, err, np.nan, interp, ";".join(events)))
                summary.aborted = "defective reduced A"
                break
            new, ev = _update_data(eig, red.B, rng, poles)
            events += ev
            change = relative_change(data, new)
            summary.final_change = change
            data = new
            if change < tol:
                events.append("converged")
                summary.converged = True
            hist.records.append(IterationRecord(restart, it, err, change, interp, ";".join(events)))
            if summary.converged:
                break
        hist.restarts.append(summary)

    if best_pair is None:
        raise ReductionError("every restart failed to produce a reduced model", history=hist)
    best = project(pkg, best_pair)
    best.metadata.update({
        "h2_error": hist.best_h2,
        "relative_h2_error": hist.best_relative_h2,
        "best_restart": hist.best_restart,
        "best_iter": hist.best_iter,
    })
    return best, hist
