import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renreduce.certify import all_passed, verify
from renreduce.errors import GenerationError
from renreduce.model import dumps_package
from renreduce.numerics import spectral_radius
from renreduce.synth import RADIUS_FRACTION, generate, make_rng


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_full_scale_dims_certified(seed):
    pkg = generate(100, 100, 1, 1, gamma=2.0, seed=seed)
    assert all_passed(verify(pkg))
    assert pkg.model.dims == {"n": 100, "q": 100, "m": 1, "p": 1}
    assert pkg.metadata["controllability_rank"] == 100


def test_deterministic_bytes():
    assert dumps_package(generate(20, 10, 2, 1, seed=42)) == dumps_package(generate(20, 10, 2, 1, seed=42))
    assert dumps_package(generate(20, 10, 2, 1, seed=42)) != dumps_package(generate(20, 10, 2, 1, seed=43))


def test_minimal_dims():
    pkg = generate(1, 1, 1, 1, seed=0)
    assert all_passed(verify(pkg))


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 12), q=st.integers(1, 8), m=st.integers(1, 3), p=st.integers(1, 3),
       gamma=st.floats(0.1, 10.0), alpha=st.floats(0.5, 1.0), seed=st.integers(0, 10 ** 6))
def test_always_certified(n, q, m, p, gamma, alpha, seed):
    pkg = generate(n, q, m, p, gamma=gamma, alpha_bar=alpha, seed=seed)
    assert all_passed(verify(pkg))
    assert spectral_radius(pkg.model.A) == pytest.approx(RADIUS_FRACTION * alpha, rel=1e-10)
    assert pkg.certificate.alpha_bar == alpha


def test_lower_triangular_option():
    pkg = generate(6, 5, 1, 1, seed=3, lower_triangular_d11=True)
    D11 = pkg.model.D11
    assert np.all(np.triu(D11) == 0) and np.any(D11 != 0)
    assert not np.all(np.triu(generate(6, 5, 1, 1, seed=3).model.D11) == 0)


def test_generation_failure_reports_min_eig():
    with pytest.raises(GenerationError) as exc:
        generate(3, 2, 1, 1, gamma=1e-40)
    assert exc.value.min_eig < 0


@pytest.mark.parametrize("bad", [dict(n=0), dict(gamma=-1.0), dict(alpha_bar=1.5)])
def test_argument_validation(bad):
    kw = dict(n=3, q=2, m=1, p=1)
    kw.update(bad)
    with pytest.raises(ValueError):
        generate(**kw)


def test_make_rng_streams_are_independent():
    a = make_rng(1, 2).standard_normal(5)
    assert np.array_equal(a, make_rng(1, 2).standard_normal(5))
    assert not np.array_equal(a, make_rng(2, 1).standard_normal(5))
