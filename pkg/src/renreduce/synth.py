"""Random certified RENs used as stand-ins for trained models.

Recipe: ``A`` is Gaussian rescaled to spectral radius ``0.8 * alpha_bar``;
the certificate is ``P = dlyap((A/alpha_bar)^T, I)`` (so that
``alpha_bar^2 P - A^T P A = alpha_bar^2 I``) and ``Lambda = I``. All other
blocks are Gaussian with entry scale ``1/sqrt(n)``. The output map
``(C2, D22)`` and then the input map ``B2`` each get a power-of-two scale,
half the largest one for which the robust LMI holds with the internal
couplings at zero; the internal couplings ``(B1, C1, D11, D12, D21)`` are
multiplied by ``s``, halved from 1 until the robust LMI holds with margin.
"""

import numpy as np

from .certify import assemble_contraction_lmi, assemble_robust_lmi
from .errors import GenerationError
from .lti import controllability_rank
from .model import Activation, Certificate, IqcTriple, RenModel, RenPackage
from .numerics import solve_discrete_lyapunov, spectral_radius, sym_eig_min, symmetrize

RADIUS_FRACTION = 0.8
MAX_HALVINGS = 60
IO_SCALE_START = 2.0 ** 10
CERT_MARGIN = 1e-9
BIAS_SCALE = 0.1


def make_rng(*key):
    """Counter-based Philox generator keyed by a tuple of non-negative ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def _lmi_margin(M):
    return sym_eig_min(M) - CERT_MARGIN * np.linalg.norm(M)


def generate(n, q, m, p, gamma=2.0, alpha_bar=1.0, seed=0, *,
             lower_triangular_d11=False, activation=Activation.RELU):
    """Draw a REN that is certified contracting and ``gamma``-robust.

    Returns a :class:`RenPackage` with the certificate, the l2-gain IQC
    triple and metadata recording the seed and the coupling scale ``s``.
    """
    if min(n, q) < 1 or min(m, p) < 1:
        raise ValueError("dimensions must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not 0 < alpha_bar <= 1:
        raise ValueError("alpha_bar must lie in (0, 1]")
    rng = make_rng(int(seed))

    A = rng.standard_normal((n, n))
    rho = spectral_radius(A)
    A *= RADIUS_FRACTION * alpha_bar / rho
    P = symmetrize(solve_discrete_lyapunov(A.T / alpha_bar, np.eye(n)))
    cert = Certificate(P, np.ones(q), alpha_bar)
    iqc = IqcTriple.l2_gain(gamma, m, p)

    c = 1.0 / np.sqrt(n)
    raw = {
        "B1": rng.standard_normal((n, q)) * c,
        "C1": rng.standard_normal((q, n)) * c,
        "D11": rng.standard_normal((q, q)) * c,
        "B2": rng.standard_normal((n, m)) * c,
        "C2": rng.standard_normal((p, n)) * c,
        "D12": rng.standard_normal((q, m)) * c,
        "D21": rng.standard_normal((p, q)) * c,
        "D22": rng.standard_normal((p, m)) * c,
    }
    if lower_triangular_d11:
        raw["D11"] = np.tril(raw["D11"], k=-1)
    biases = {
        "beta_x": rng.standard_normal(n) * BIAS_SCALE,
        "beta_v": rng.standard_normal(q) * BIAS_SCALE,
        "beta_y": rng.standard_normal(p) * BIAS_SCALE,
    }

    def build(b_io, c_io, s):
        scale = {"B2": b_io, "C2": c_io, "D22": c_io}
        blocks = {k: scale.get(k, s) * v for k, v in raw.items()}
        return RenModel(A=A, **blocks, **biases, activation=activation)

    def margin(model):
        return min(_lmi_margin(assemble_robust_lmi(model, cert, iqc)),
                   _lmi_margin(assemble_contraction_lmi(model, cert)))

    def largest_scale(make):
        k = IO_SCALE_START
        for _ in range(MAX_HALVINGS + 10):
            if margin(make(k)) > 0:
                return 0.5 * k
            k *= 0.5
        raise GenerationError("input/output path cannot be certified", min_eig=margin(make(k)))

    c_io = largest_scale(lambda k: build(0.0, k, 0.0))
    b_io = largest_scale(lambda k: build(k, c_io, 0.0))

    s = 1.0
    last = -np.inf
    for halvings in range(MAX_HALVINGS + 1):
        model = build(b_io, c_io, s)
        last = margin(model)
        if last > 0:
            break
        s *= 0.5
    else:
        raise GenerationError(
            f"no certified scaling after {MAX_HALVINGS} halvings "
            f"(final min eig margin {last:.3e})", min_eig=last)

    meta = {
        "generator": "renreduce.synth.generate",
        "rng": "numpy.Philox",
        "seed": int(seed),
        "coupling_scale": s,
        "input_scale": b_io,
        "output_scale": c_io,
        "halvings": halvings,
        "spectral_radius_A": RADIUS_FRACTION * alpha_bar,
        "gamma": float(gamma),
        "lower_triangular_d11": bool(lower_triangular_d11),
        "controllability_rank": controllability_rank(model.A, np.hstack([model.B1, model.B2])),
    }
    return RenPackage(model, cert, iqc, meta)
