"""REN data model, certificates, IQC triples and JSON persistence."""

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CertificateError, NonFiniteError, SchemaError, ShapeError
from .numerics import sym_eig_min

WEIGHT_NAMES = ("A", "B1", "B2", "C1", "D11", "D12", "C2", "D21", "D22")
BIAS_NAMES = ("beta_x", "beta_v", "beta_y")


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


def activation_apply(v, kind):
    """Element-wise activation; every kind is slope-restricted to [0, 1]."""
    kind = Activation(kind)
    v = np.asarray(v, dtype=float)
    if kind is Activation.RELU:
        return np.maximum(v, 0.0)
    if kind is Activation.TANH:
        return np.tanh(v)
    return v.copy()


def _frozen(a, ndim, name):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


def _block_shapes(n, q, m, p):
    return {
        "A": (n, n), "B1": (n, q), "B2": (n, m),
        "C1": (q, n), "D11": (q, q), "D12": (q, m),
        "C2": (p, n), "D21": (p, q), "D22": (p, m),
        "beta_x": (n,), "beta_v": (q,), "beta_y": (p,),
    }


@dataclass(frozen=True, eq=False)
class RenModel:
    """Weights and biases of a discrete-time recurrent equilibrium network.

    The LTI block maps ``(x_t, w_t, u_t)`` to ``(x_{t+1}, v_t, y_t)`` through
    ``K = [[A, B1, B2], [C1, D11, D12], [C2, D21, D22]]`` plus the biases, and
    ``w_t = sigma(v_t)``.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    C2: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    beta_x: np.ndarray
    beta_v: np.ndarray
    beta_y: np.ndarray
    activation: Activation = Activation.RELU

    def __post_init__(self):
        for name in WEIGHT_NAMES:
            object.__setattr__(self, name, _frozen(getattr(self, name), 2, name))
        for name in BIAS_NAMES:
            object.__setattr__(self, name, _frozen(getattr(self, name), 1, name))
        object.__setattr__(self, "activation", Activation(self.activation))
        expected = _block_shapes(self.n, self.q, self.m, self.p)
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"{name} has shape {got}, expected {shape}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def q(self):
        return self.D11.shape[0]

    @property
    def m(self):
        return self.B2.shape[1]

    @property
    def p(self):
        return self.C2.shape[0]

    @property
    def dims(self):
        return {"n": self.n, "q": self.q, "m": self.m, "p": self.p}

    def weights(self):
        return {name: getattr(self, name) for name in WEIGHT_NAMES}

    def biases(self):
        return {name: getattr(self, name) for name in BIAS_NAMES}

    def replace(self, **changes):
        return replace(self, **changes)


def assemble_K(model):
    """The ``(n+q+p) x (n+q+m)`` weight matrix."""
    return np.block([
        [model.A, model.B1, model.B2],
        [model.C1, model.D11, model.D12],
        [model.C2, model.D21, model.D22],
    ])


def disassemble_K(K, n, q, m, p):
    """Split a weight matrix back into its named blocks."""
    K = np.asarray(K, dtype=float)
    if K.shape != (n + q + p, n + q + m):
        raise ShapeError(f"K has shape {K.shape}, expected {(n + q + p, n + q + m)}")
    r = np.cumsum([0, n, q, p])
    c = np.cumsum([0, n, q, m])
    names = (("A", "B1", "B2"), ("C1", "D11", "D12"), ("C2", "D21", "D22"))
    return {
        names[i][j]: K[r[i]:r[i + 1], c[j]:c[j + 1]].copy()
        for i in range(3) for j in range(3)
    }


def model_from_K(K, beta, dims, activation=Activation.RELU):
    n, q, m, p = dims["n"], dims["q"], dims["m"], dims["p"]
    beta = np.asarray(beta, dtype=float)
    blocks = disassemble_K(K, n, q, m, p)
    return RenModel(
        **blocks,
        beta_x=beta[:n], beta_v=beta[n:n + q], beta_y=beta[n + q:],
        activation=activation,
    )


@dataclass(frozen=True, eq=False)
class Certificate:
    """Witnesses ``(P, Lambda, alpha_bar)`` of the contraction/robustness LMIs."""

    P: np.ndarray
    Lambda: np.ndarray
    alpha_bar: float = 1.0

    def __post_init__(self):
        P = _frozen(self.P, 2, "P")
        Lam = _frozen(self.Lambda, 1, "Lambda")
        if P.shape[0] != P.shape[1]:
            raise CertificateError(f"P must be square, got {P.shape}")
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-10 * max(np.abs(P).max(), 1e-300)):
            raise CertificateError("P is not symmetric")
        if P.shape[0] > 0 and sym_eig_min(P) <= 0.0:
            raise CertificateError(f"P is not positive definite (min eig {sym_eig_min(P):.3e})")
        if np.any(Lam <= 0.0):
            raise CertificateError("Lambda must have strictly positive entries")
        alpha_bar = float(self.alpha_bar)
        if not 0.0 < alpha_bar <= 1.0:
            raise CertificateError(f"alpha_bar must lie in (0, 1], got {alpha_bar}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Lambda", Lam)
        object.__setattr__(self, "alpha_bar", alpha_bar)


@dataclass(frozen=True, eq=False)
class IqcTriple:
    """Incremental IQC supply-rate weights ``(Q, S, R)`` with ``Q <= 0``."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = _frozen(self.Q, 2, "Q")
        S = _frozen(self.S, 2, "S")
        R = _frozen(self.R, 2, "R")
        p, m = Q.shape[0], R.shape[0]
        if Q.shape != (p, p) or R.shape != (m, m) or S.shape != (m, p):
            raise ShapeError(f"inconsistent IQC shapes Q{Q.shape} S{S.shape} R{R.shape}")
        qn = max(np.linalg.norm(Q), 1e-300)
        if sym_eig_min(-Q) < -1e-12 * qn:
            raise CertificateError("Q must be negative semidefinite")
        if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(np.abs(R).max(), 1e-300)):
            raise CertificateError("R is not symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @classmethod
    def l2_gain(cls, gamma, m, p):
        """Triple encoding an incremental l2-gain bound ``gamma``."""
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        return cls(Q=-np.eye(p) / gamma, S=np.zeros((m, p)), R=gamma * np.eye(m))


@dataclass(frozen=True, eq=False)
class RenPackage:
    model: RenModel
    certificate: Certificate = None
    iqc: IqcTriple = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.iqc is not None and self.certificate is None:
            raise CertificateError("an IQC triple requires a certificate")
        if self.certificate is not None:
            cert = self.certificate
            if cert.P.shape != (self.model.n, self.model.n):
                raise ShapeError(f"P has shape {cert.P.shape}, expected n={self.model.n}")
            if cert.Lambda.shape != (self.model.q,):
                raise ShapeError(f"Lambda has length {cert.Lambda.size}, expected q={self.model.q}")
        if self.iqc is not None:
            if self.iqc.Q.shape[0] != self.model.p or self.iqc.R.shape[0] != self.model.m:
                raise ShapeError("IQC dimensions do not match (m, p) of the model")


# --- persistence -----------------------------------------------------------

def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def package_to_dict(pkg):
    mdl = pkg.model
    out = {
        "dims": mdl.dims,
        "activation": mdl.activation.value,
        "weights": {k: _tolist(v) for k, v in mdl.weights().items()},
        "biases": {k: _tolist(v) for k, v in mdl.biases().items()},
    }
    if pkg.certificate is not None:
        c = pkg.certificate
        out["certificate"] = {"P": _tolist(c.P), "Lambda": _tolist(c.Lambda),
                              "alpha_bar": c.alpha_bar}
    if pkg.iqc is not None:
        out["iqc"] = {k: _tolist(getattr(pkg.iqc, k)) for k in ("Q", "S", "R")}
    out["metadata"] = dict(pkg.metadata)
    return out


def _read_array(src, key, path, shape):
    if not isinstance(src, dict) or key not in src:
        raise SchemaError(f"{path}.{key}", "missing")
    try:
        a = np.array(src[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}.{key}", f"not a numeric array ({exc})") from None
    if len(shape) == 2 and 0 in shape and a.size == 0:
        a = a.reshape(shape)
    if a.shape != shape:
        raise SchemaError(f"{path}.{key}", f"shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)):
        raise SchemaError(f"{path}.{key}", "non-finite entry")
    return a


def package_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object")
    dims = doc.get("dims")
    if not isinstance(dims, dict):
        raise SchemaError("dims", "missing")
    for k in ("n", "q", "m", "p"):
        if not isinstance(dims.get(k), int) or isinstance(dims.get(k), bool) or dims[k] < 0:
            raise SchemaError(f"dims.{k}", "must be a non-negative integer")
    n, q, m, p = dims["n"], dims["q"], dims["m"], dims["p"]
    shapes = _block_shapes(n, q, m, p)
    try:
        act = Activation(doc.get("activation"))
    except ValueError:
        raise SchemaError("activation", f"unknown activation {doc.get('activation')!r}") from None
    weights = {k: _read_array(doc.get("weights"), k, "weights", shapes[k]) for k in WEIGHT_NAMES}
    biases = {k: _read_array(doc.get("biases"), k, "biases", shapes[k]) for k in BIAS_NAMES}
    model = RenModel(**weights, **biases, activation=act)

    cert = None
    if doc.get("certificate") is not None:
        c = doc["certificate"]
        P = _read_array(c, "P", "certificate", (n, n))
        Lam = _read_array(c, "Lambda", "certificate", (q,))
        if not isinstance(c.get("alpha_bar"), (int, float)):
            raise SchemaError("certificate.alpha_bar", "missing or not a number")
        if np.any(Lam <= 0):
            raise SchemaError("certificate.Lambda", "entries must be positive")
        try:
            cert = Certificate(P, Lam, float(c["alpha_bar"]))
        except CertificateError as exc:
            raise SchemaError("certificate", str(exc)) from None

    iqc = None
    if doc.get("iqc") is not None:
        i = doc["iqc"]
        Q = _read_array(i, "Q", "iqc", (p, p))
        S = _read_array(i, "S", "iqc", (m, p))
        R = _read_array(i, "R", "iqc", (m, m))
        try:
            iqc = IqcTriple(Q, S, R)
        except CertificateError as exc:
            raise SchemaError("iqc", str(exc)) from None
    if iqc is not None and cert is None:
        raise SchemaError("certificate", "required when iqc is present")
    meta = doc.get("metadata", {})
    if not isinstance(meta, dict):
        raise SchemaError("metadata", "must be an object")
    return RenPackage(model, cert, iqc, meta)


def dumps_package(pkg):
    # json emits repr(float), which round-trips doubles exactly
    return json.dumps(package_to_dict(pkg), indent=1)


def save_package(pkg, path):
    Path(path).write_text(dumps_package(pkg) + "\n")


def load_package(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return package_from_dict(doc)
