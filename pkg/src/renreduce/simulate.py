"""REN rollouts and the accuracy / robustness metrics evaluated on them.

Rollouts are batched: a stack of input sequences is simulated in lockstep so
that the implicit equilibrium solve is vectorized over the batch.
"""

import csv
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateReferenceError, ShapeError, WellPosednessError
from .model import activation_apply
from .synth import make_rng

IMPLICIT_TOL = 1e-10
IMPLICIT_MAX_ITER = 500
TRIANGULAR_TOL = 1e-14


def _is_lower_triangular(D11):
    if D11.size == 0:
        return True
    return np.abs(np.triu(D11, 1)).max() <= TRIANGULAR_TOL * max(np.abs(D11).max(), 1.0)


def _scalar_implicit(c, d, kind):
    """Solve ``v = c + d * sigma(v)`` elementwise for ``d < 1`` by bisection.

    ``g(v) = v - d sigma(v) - c`` is increasing with slope at least
    ``1 - max(d, 0)``, which brackets the root within ``|c| / slope`` of 0.
    """
    if np.all(d == 0):
        return c.copy()
    slope = 1.0 - max(d, 0.0)
    if slope <= 0:
        raise WellPosednessError(f"diagonal D11 entry {d} >= 1 is not well-posed")
    half = np.abs(c) / slope + 1.0
    lo, hi = -half, half.copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = mid - d * activation_apply(mid, kind) - c
        lo = np.where(g < 0, mid, lo)
        hi = np.where(g < 0, hi, mid)
        if np.all(hi - lo <= 1e-16 * np.maximum(np.abs(mid), 1.0)):
            break
    return 0.5 * (lo + hi)


def _solve_batch(model, X, U, V0=None, tol=IMPLICIT_TOL, max_iter=IMPLICIT_MAX_ITER):
    """Solve ``v = C1 x + D11 sigma(v) + D12 u + beta_v`` for each row of X, U."""
    kind = model.activation
    D11 = model.D11
    c = X @ model.C1.T + U @ model.D12.T + model.beta_v
    q = c.shape[1]

    def resid(v):
        return np.linalg.norm(v - c - activation_apply(v, kind) @ D11.T, axis=1)

    if not np.any(D11):
        return c, 1, resid(c)
    if _is_lower_triangular(D11):
        v = np.empty_like(c)
        for i in range(q):
            ci = c[:, i] + activation_apply(v[:, :i], kind) @ D11[i, :i]
            v[:, i] = _scalar_implicit(ci, D11[i, i], kind)
        return v, 1, resid(v)

    v = c.copy() if V0 is None else np.array(V0, dtype=float)
    theta = np.ones(c.shape[0])
    r = resid(v)
    for it in range(1, max_iter + 1):
        if np.all(r <= tol):
            return v, it - 1, r
        f = c + activation_apply(v, kind) @ D11.T
        cand = (1 - theta)[:, None] * v + theta[:, None] * f
        rc = resid(cand)
        worse = rc > r
        theta = np.where(worse, 0.5 * theta, theta)
        v = np.where(worse[:, None], v, cand)
        r = np.where(worse, r, rc)
    if np.all(r <= tol):
        return v, max_iter, r
    raise WellPosednessError(
        f"implicit equation did not converge in {max_iter} iterations "
        f"(residual {r.max():.3e}); model is likely not well-posed")


def solve_implicit(model, x, u, tol=IMPLICIT_TOL, max_iter=IMPLICIT_MAX_ITER, v0=None):
    """Equilibrium ``(v, w)`` of the implicit layer for one ``(x, u)``.

    Returns ``(v, w, iterations, residual)``.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    U = np.atleast_2d(np.asarray(u, dtype=float))
    V0 = None if v0 is None else np.atleast_2d(v0)
    v, its, r = _solve_batch(model, X, U, V0, tol, max_iter)
    return v[0], activation_apply(v[0], model.activation), its, float(r[0])


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    u: np.ndarray          # T x m
    x: np.ndarray          # (T+1) x n
    v: np.ndarray          # T x q
    w: np.ndarray          # T x q
    y: np.ndarray          # T x p
    iterations: np.ndarray
    residuals: np.ndarray


def simulate_batch(model, U, X0=None, *, tol=IMPLICIT_TOL, max_iter=IMPLICIT_MAX_ITER,
                   keep_internal=True):
    """Roll out ``N`` input sequences ``U`` (``N x T x m``) in lockstep.

    Returns a dict with ``x`` (``N x (T+1) x n``), ``y`` (``N x T x p``),
    optionally ``v`` and ``w``, and per-step solver ``iterations`` and
    (max over the batch) ``residuals``.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 3 or U.shape[2] != model.m:
        raise ShapeError(f"inputs must be N x T x {model.m}, got {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValueError("inputs contain non-finite values")
    N, T, _ = U.shape
    X0 = np.zeros((N, model.n)) if X0 is None else np.broadcast_to(
        np.asarray(X0, dtype=float), (N, model.n)).copy()
    xs = np.empty((N, T + 1, model.n))
    ys = np.empty((N, T, model.p))
    vs = np.empty((N, T, model.q)) if keep_internal else None
    ws = np.empty((N, T, model.q)) if keep_internal else None
    iters = np.zeros(T, dtype=int)
    res = np.zeros(T)
    x = X0
    xs[:, 0] = x
    v_prev = None
    for t in range(T):
        u = U[:, t]
        v, its, r = _solve_batch(model, x, u, v_prev, tol, max_iter)
        w = activation_apply(v, model.activation)
        ys[:, t] = x @ model.C2.T + w @ model.D21.T + u @ model.D22.T + model.beta_y
        x = x @ model.A.T + w @ model.B1.T + u @ model.B2.T + model.beta_x
        xs[:, t + 1] = x
        if keep_internal:
            vs[:, t], ws[:, t] = v, w
        iters[t], res[t] = its, r.max()
        v_prev = v
    out = {"x": xs, "y": ys, "iterations": iters, "residuals": res}
    if keep_internal:
        out.update(v=vs, w=ws)
    return out


def rollout(model, x0, u, **kw):
    """Single trajectory from ``x0`` under ``u`` (``T x m``)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    sim = simulate_batch(model, u[None], np.asarray(x0, dtype=float)[None], **kw)
    return SimulationTrace(u, sim["x"][0], sim["v"][0], sim["w"][0], sim["y"][0],
                           sim["iterations"], sim["residuals"])


def responses(pkg, inputs):
    """Outputs from zero initial state for a list/stack of input sequences."""
    U = _stack_inputs(inputs, pkg.model.m)
    return simulate_batch(pkg.model, U, keep_internal=False)["y"]


def _stack_inputs(inputs, m):
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 2 and m == 1:
        U = U[:, :, None]
    if U.ndim != 3:
        raise ShapeError(f"expected N x T x m inputs, got shape {U.shape}")
    return U


def white_noise_inputs(n_u=10, T=1000, m=1, seed=0):
    """``n_u`` Gaussian white-noise sequences with distinct means and variances.

    Variances are log-spaced over [0.25, 4], means linearly spaced over
    [-1, 1].
    """
    rng = make_rng(int(seed), 0x1A1)
    var = np.logspace(np.log10(0.25), np.log10(4.0), n_u)
    mean = np.linspace(-1.0, 1.0, n_u)
    return mean[:, None, None] + np.sqrt(var)[:, None, None] * rng.standard_normal((n_u, T, m))


def seq_norm(a):
    """``||a||_T``: Euclidean norm over all samples and channels."""
    return float(np.sqrt(np.sum(np.asarray(a) ** 2)))


@dataclass
class EvalReport:
    c_percent: list
    c_mean: float
    beta_full: float
    beta_reduced: float
    gamma: float = None
    passed: bool = None

    def to_dict(self):
        return asdict(self)


def empirical_gain(pkg, inputs, outputs=None):
    """``max_{i != j} ||R(U_i) - R(U_j)||_T / ||U_i - U_j||_T`` from zero state."""
    U = _stack_inputs(inputs, pkg.model.m)
    if U.shape[0] < 2:
        raise ValueError("need at least two input sequences")
    Y = responses(pkg, U) if outputs is None else outputs
    best = 0.0
    for i, j in combinations(range(U.shape[0]), 2):
        du = seq_norm(U[i] - U[j])
        if du == 0.0:
            raise DegenerateReferenceError(f"inputs {i} and {j} are identical")
        best = max(best, seq_norm(Y[i] - Y[j]) / du)
    return best


def error_measure(full, reduced, inputs, gamma=None):
    """Relative output errors (percent) of ``reduced`` against ``full``."""
    if (full.model.m, full.model.p) != (reduced.model.m, reduced.model.p):
        raise ShapeError("models differ in input/output dimensions")
    U = _stack_inputs(inputs, full.model.m)
    Y = responses(full, U)
    Yr = Y if reduced is full else responses(reduced, U)
    c = []
    for i in range(U.shape[0]):
        ref = seq_norm(Y[i])
        if ref == 0.0:
            raise DegenerateReferenceError(f"reference output {i} is identically zero")
        c.append(100.0 * seq_norm(Y[i] - Yr[i]) / ref)
    beta_full = empirical_gain(full, U, Y) if U.shape[0] > 1 else float("nan")
    beta_red = empirical_gain(reduced, U, Yr) if U.shape[0] > 1 else float("nan")
    if gamma is None and full.iqc is not None:
        gamma = _gain_of(full.iqc)
    passed = None if gamma is None else bool(beta_full <= gamma and beta_red <= gamma)
    return EvalReport(c, float(np.mean(c)), beta_full, beta_red, gamma, passed)


def _gain_of(iqc):
    """``gamma`` if the triple is the l2-gain triple, else ``None``."""
    p, m = iqc.Q.shape[0], iqc.R.shape[0]
    gamma = iqc.R[0, 0] if m else None
    if gamma and np.allclose(iqc.R, gamma * np.eye(m)) and np.allclose(iqc.Q, -np.eye(p) / gamma) \
            and not np.any(iqc.S):
        return float(gamma)
    return None


def iqc_residual(pkg, a, b, ua, ub):
    """Running sums of the incremental IQC supply rate for a trajectory pair.

    Returns ``(sums, minimum)`` where ``sums[T]`` is the left-hand side of the
    IQC inequality over ``[0, T]``.
    """
    if pkg.iqc is None:
        raise ValueError("package has no IQC triple")
    ua = np.asarray(ua, dtype=float).reshape(-1, pkg.model.m)
    ub = np.asarray(ub, dtype=float).reshape(-1, pkg.model.m)
    sim = simulate_batch(pkg.model, np.stack([ua, ub]), np.stack([a, b]), keep_internal=False)
    dy = sim["y"][0] - sim["y"][1]
    du = ua - ub
    Q, S, R = pkg.iqc.Q, pkg.iqc.S, pkg.iqc.R
    rate = (np.einsum("ti,ij,tj->t", dy, Q, dy) + 2 * np.einsum("ti,ij,tj->t", du, S, dy)
            + np.einsum("ti,ij,tj->t", du, R, du))
    sums = np.cumsum(rate)
    return sums, float(sums.min())


# --- CSV interfaces --------------------------------------------------------

def read_inputs_csv(path, m=None):
    """Read ``t,u1..um`` rows into a ``T x m`` array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty input file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t" or any(not h.startswith("u") for h in header[1:]):
        raise ValueError(f"{path}:1: expected header 't,u1,...,um', got {','.join(header)}")
    width = len(header) - 1
    if m is not None and width != m:
        raise ValueError(f"{path}:1: {width} input columns but model has m={m}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width + 1:
            raise ValueError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field in {row}") from None
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{path}:{lineno}: non-finite value")
        data.append(vals)
    return np.array(data, dtype=float).reshape(-1, width)


def write_inputs_csv(path, u):
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"u{i + 1}" for i in range(u.shape[1])])
        for t, row in enumerate(u):
            w.writerow([t] + [repr(float(x)) for x in row])


def write_trace_csv(path, trace):
    m, p = trace.u.shape[1], trace.y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)]
                   + ["solver_iters", "residual"])
        for t in range(trace.y.shape[0]):
            w.writerow([t] + [repr(float(x)) for x in trace.u[t]] + [repr(float(x)) for x in trace.y[t]]
                       + [int(trace.iterations[t]), repr(float(trace.residuals[t]))])

