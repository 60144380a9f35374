import numpy as np
import pytest
from hypothesis import strategies as st

from renreduce.model import Certificate, IqcTriple, RenModel, RenPackage
from renreduce.synth import generate


def zero_model(n=1, q=1, m=1, p=1, **blocks):
    shapes = {
        "A": (n, n), "B1": (n, q), "B2": (n, m), "C1": (q, n), "D11": (q, q),
        "D12": (q, m), "C2": (p, n), "D21": (p, q), "D22": (p, m),
        "beta_x": (n,), "beta_v": (q,), "beta_y": (p,),
    }
    kw = {k: np.zeros(s) for k, s in shapes.items()}
    for k, v in blocks.items():
        kw[k] = np.broadcast_to(np.asarray(v, dtype=float), shapes.get(k, np.shape(v))) \
            if k in shapes else v
    return RenModel(**kw)


def scalar_package(a=0.5, gamma=2.0, **blocks):
    model = zero_model(A=a, **blocks)
    return RenPackage(model, Certificate(np.eye(1), np.ones(1)), IqcTriple.l2_gain(gamma, 1, 1))


def random_stable(rng, n, radius=0.9):
    A = rng.standard_normal((n, n))
    return A * (radius * rng.uniform(0.3, 1.0) / np.max(np.abs(np.linalg.eigvals(A))))


def random_spd(rng, n, cond=1e3):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(np.logspace(0, np.log10(cond), n)) @ Q.T


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@pytest.fixture(scope="session")
def small_pkg():
    return generate(12, 8, 1, 1, seed=3)


@pytest.fixture(scope="session")
def mimo_pkg():
    return generate(16, 6, 2, 2, seed=5)


@pytest.fixture(scope="session")
def mid_pkg():
    return generate(60, 40, 1, 1, seed=11)


# criterion -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abcd")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} {detail}")
