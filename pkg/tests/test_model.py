import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gltau.errors import AdmissibilityError, DegenerateError, ScaleError
from gltau.model import (elliptic_noise, hermitian_noise, make_rng, params_from_abtheta,
                         sample_elliptic_increment, sample_hermitian_increment, validate_params)


def test_unitary_parameters():
    p = validate_params(1, 0, [1])
    assert (p.a, p.b, p.theta) == (1.0, 0.0, 0.0)


def test_outside_disk_rejected():
    with pytest.raises(AdmissibilityError):
        validate_params(1, 3)


def test_ginibre_case_has_equal_weights():
    p = validate_params(1, 1, [1])
    assert p.a == pytest.approx(1 / math.sqrt(2))
    assert p.b == pytest.approx(1 / math.sqrt(2))
    assert p.theta == 0.0


@pytest.mark.parametrize("a,b,theta,lam,tau", [
    (1, 0, 0, 1, 0),
    (1 / math.sqrt(2), 1 / math.sqrt(2), 0.7, 1, 1),
    (0, 1, 0, 1, 2),
])
def test_from_abtheta(a, b, theta, lam, tau):
    p = params_from_abtheta(a, b, theta)
    assert p.lam == pytest.approx(lam)
    assert abs(p.tau - tau) < 1e-14


def test_degenerate_and_scale_errors():
    with pytest.raises(DegenerateError):
        params_from_abtheta(0, 0, 0)
    with pytest.raises(DegenerateError):
        validate_params(0, 0)
    with pytest.raises(ScaleError):
        validate_params(1, 0, [1, 0])
    with pytest.raises(ScaleError):
        validate_params(1, 0, [])


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(0.01, 10), r=st.floats(0, 1), phi=st.floats(-math.pi, math.pi))
def test_round_trip(lam, r, phi):
    tau = lam - r * lam * cmath.exp(1j * phi)
    p = validate_params(lam, tau)
    assert -math.pi / 2 < p.theta <= math.pi / 2
    q = params_from_abtheta(p.a, p.b, p.theta)
    assert abs(q.lam - lam) <= 1e-12 * lam
    assert abs(q.tau - tau) <= 1e-12 * lam


def test_hermitian_noise_is_exactly_hermitian():
    h = hermitian_noise(make_rng(0), 7, 0.3, size=5)
    assert np.array_equal(h, np.conj(np.swapaxes(h, -1, -2)))


def test_scalar_hermitian_increment_is_real_standard_normal():
    x = np.array([sample_hermitian_increment(1, 1.0, make_rng(1, i)).matrix[0, 0] for i in range(4000)])
    assert np.all(x.imag == 0)
    assert abs(x.real.mean()) < 4 / math.sqrt(4000)
    assert abs(x.real.var() - 1) < 0.1


def test_hermitian_normalisation():
    h = hermitian_noise(make_rng(2), 32, 1.0, size=10_000)
    vals = np.einsum("bij,bji->b", h, h).real / 32
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 1) < 3 * se


def test_zero_step_rejected():
    with pytest.raises(ValueError):
        sample_hermitian_increment(3, 0.0, make_rng(0))
    with pytest.raises(ValueError):
        sample_elliptic_increment(validate_params(1, 0), 3, -1.0, make_rng(0))


def test_unitary_increment_is_hermitian():
    z = sample_elliptic_increment(validate_params(1, 0), 5, 0.1, make_rng(3)).matrix
    assert np.array_equal(z, z.conj().T)


@pytest.mark.parametrize("lam,tau", [(1, 0), (1, 1), (1, 0.5 + 0.3j), (2, 1 - 1j)])
def test_variance_and_covariance_identities(lam, tau):
    p = validate_params(lam, tau)
    n, dt, reps = 32, 0.5, 10_000
    z = elliptic_noise(p, make_rng(4), n, dt, size=reps)
    zs = np.conj(np.swapaxes(z, -1, -2))
    var = np.einsum("bij,bji->b", zs, z) / n / dt
    cov = var - np.einsum("bij,bji->b", z, z) / n / dt
    for sample, target in ((var, lam), (cov, tau)):
        se = math.hypot(sample.real.std(ddof=1), sample.imag.std(ddof=1)) / math.sqrt(reps)
        assert abs(sample.mean() - target) < 3 * se + 1e-12


@pytest.mark.parametrize("lam,tau", [(1, 0), (1, 0.5 + 0.3j)])
def test_noise_brackets(lam, tau):
    """E[dZ V dZ], E[dZ* V dZ*], E[dZ V dZ*] over dt against the trace formulas."""
    p = validate_params(lam, tau)
    n, dt, reps = 6, 1.0, 10_000
    rng = make_rng(5)
    v = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    z = elliptic_noise(p, rng, n, dt, size=reps)
    zs = np.conj(np.swapaxes(z, -1, -2))
    trv = np.trace(v) / n
    for a, b, kappa in ((z, z, lam - tau), (zs, zs, lam - np.conj(tau)), (z, zs, lam)):
        y = a @ v @ b / dt
        mean = y.mean(axis=0)
        se = (y.real.std(axis=0, ddof=1) + 1j * y.imag.std(axis=0, ddof=1)) / math.sqrt(reps)
        target = kappa * trv * np.eye(n)
        assert np.all(np.abs((mean - target).real) <= 4 * se.real + 1e-12)
        assert np.all(np.abs((mean - target).imag) <= 4 * se.imag + 1e-12)


def test_streams_are_reproducible_and_distinct():
    a = make_rng(9, 1).standard_normal(4)
    assert np.array_equal(a, make_rng(9, 1).standard_normal(4))
    assert not np.array_equal(a, make_rng(9, 2).standard_normal(4))
