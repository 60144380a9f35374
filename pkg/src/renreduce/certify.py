"""Assembly and verification of the REN contraction and robustness LMIs."""

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CertificateError, ShapeError
from .numerics import sym_eig_min, symmetrize


class LmiKind(str, enum.Enum):
    P = "P"
    LAMBDA = "Lambda"
    CONTRACTION = "contraction"
    ROBUST = "robust"


@dataclass(frozen=True)
class LmiReport:
    kind: LmiKind
    min_eig: float
    matrix_dim: int
    passed: bool
    margin_used: float
    norm: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _check_cert(model, cert):
    if cert.P.shape != (model.n, model.n) or cert.Lambda.shape != (model.q,):
        raise ShapeError("certificate dimensions do not match the model")


def _y_block(model, cert):
    Lam = np.diag(cert.Lambda)
    return 2.0 * Lam - Lam @ model.D11 - model.D11.T @ Lam


def assemble_contraction_lmi(model, cert):
    """``[[a^2 P, -C1' L], [-L C1, Y]] - [A B1]' P [A B1]``, symmetrized."""
    _check_cert(model, cert)
    P, Lam = cert.P, np.diag(cert.Lambda)
    top = np.block([
        [cert.alpha_bar ** 2 * P, -model.C1.T @ Lam],
        [-Lam @ model.C1, _y_block(model, cert)],
    ])
    G = np.hstack([model.A, model.B1])
    return symmetrize(top - G.T @ P @ G)


def robust_lmi_parts(model, cert, iqc):
    """The ``(F, G, H)`` factors of the compact robust condition."""
    _check_cert(model, cert)
    if iqc.Q.shape[0] != model.p or iqc.R.shape[0] != model.m:
        raise ShapeError("IQC dimensions do not match the model")
    P, Lam = cert.P, np.diag(cert.Lambda)
    S, R = iqc.S, iqc.R
    F = np.block([
        [cert.alpha_bar ** 2 * P, -model.C1.T @ Lam, model.C2.T @ S.T],
        [-Lam @ model.C1, _y_block(model, cert), model.D21.T @ S.T - Lam @ model.D12],
        [S @ model.C2, S @ model.D21 - model.D12.T @ Lam, R + S @ model.D22 + model.D22.T @ S.T],
    ])
    G = np.hstack([model.A, model.B1, model.B2])
    H = np.hstack([model.C2, model.D21, model.D22])
    return F, G, H


def assemble_robust_lmi(model, cert, iqc):
    """``F - G' P G + H' Q H``, symmetrized."""
    F, G, H = robust_lmi_parts(model, cert, iqc)
    return symmetrize(F - G.T @ cert.P @ G + H.T @ iqc.Q @ H)


def _report(kind, M, margin, relative):
    norm = float(np.linalg.norm(M))
    used = margin * norm if relative else margin
    lo = sym_eig_min(M)
    return LmiReport(kind, lo, M.shape[0], bool(lo > used), float(used), norm)


def verify(pkg, margin=0.0, *, relative=False, robust=None):
    """Check every strict inequality the package's certificate claims.

    Parameters
    ----------
    margin
        Strictness margin; each test passes iff ``min_eig > margin_used``.
        With ``relative=True`` the margin is scaled by the Frobenius norm of
        the matrix under test. Negative margins tolerate rounding.
    robust
        Whether to check the robustness LMI. ``None`` means "if an IQC triple
        is present".

    Returns
    -------
    list of LmiReport
        P, Lambda, contraction and (optionally) robust checks, in that order.
    """
    if pkg.certificate is None:
        raise CertificateError("package has no certificate")
    if robust is None:
        robust = pkg.iqc is not None
    if robust and pkg.iqc is None:
        raise CertificateError("robustness check requested but package has no IQC triple")
    cert = pkg.certificate
    reports = [
        _report(LmiKind.P, cert.P, margin, relative),
        _report(LmiKind.LAMBDA, np.diag(cert.Lambda), margin, relative),
        _report(LmiKind.CONTRACTION, assemble_contraction_lmi(pkg.model, cert), margin, relative),
    ]
    if robust:
        reports.append(
            _report(LmiKind.ROBUST, assemble_robust_lmi(pkg.model, cert, pkg.iqc), margin, relative)
        )
    return reports


def all_passed(reports):
    return all(r.passed for r in reports)
