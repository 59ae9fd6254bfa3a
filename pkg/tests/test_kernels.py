import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gltau import kernels
from gltau._kernels_py import MAX_DEGREE, THETAS, choose_degree, truncation_bound
from oracles import reference_expm

BACKENDS = ["python"]
try:
    kernels.get_backend("compiled")
    BACKENDS.append("compiled")
except ImportError:  # pragma: no cover - extension not built
    pass


def _random(rng, shape, scale):
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return x * scale / np.abs(x).sum(axis=-2).max()


@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 9), batch=st.integers(1, 4), scale=st.floats(1e-6, 12.0), seed=st.integers(0, 10**6))
def test_expm_matches_pade(backend, n, batch, scale, seed):
    mod = kernels.get_backend(backend)
    x = _random(np.random.default_rng(seed), (batch, n, n), scale)
    e, einv = mod.expm_batch(x, True)
    ref = reference_expm(x)
    norm = np.abs(ref).max()
    assert np.abs(e - ref).max() <= 1e-12 * max(1.0, norm) * (1 + scale)
    assert np.abs(einv - reference_expm(-x)).max() <= 1e-12 * max(1.0, np.abs(einv).max()) * (1 + scale)


@pytest.mark.parametrize("backend", BACKENDS)
def test_expm_of_zero_and_hermitian(backend):
    mod = kernels.get_backend(backend)
    assert np.array_equal(mod.expm_batch(np.zeros((2, 3, 3), complex)), np.broadcast_to(np.eye(3), (2, 3, 3)))
    rng = np.random.default_rng(0)
    a = rng.standard_normal((1, 8, 8)) + 1j * rng.standard_normal((1, 8, 8))
    u = mod.expm_batch(0.1j * (a + np.conj(np.swapaxes(a, -1, -2))))
    assert np.abs(u[0] @ u[0].conj().T - np.eye(8)).max() < 1e-13


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    py, cc = kernels.get_backend("python"), kernels.get_backend("compiled")
    rng = np.random.default_rng(1)
    r1, r2 = rng.standard_normal((2, 3, 6, 6))
    assert np.array_equal(py.elliptic_combine(r1, r2, 0.3j, -0.2), cc.elliptic_combine(r1, r2, 0.3j, -0.2))
    assert np.array_equal(py.elliptic_combine(r1, None, 0.3j, 0), cc.elliptic_combine(r1, None, 0.3j, 0))
    x = py.elliptic_combine(r1, r2, 0.3j, -0.2)
    for left in (True, False):
        g1, g2 = [np.broadcast_to(np.eye(6, dtype=complex), x.shape).copy() for _ in range(2)]
        h1, h2 = g1.copy(), g2.copy()
        py.expm_update(g1, h1, x, left)
        cc.expm_update(g2, h2, x, left)
        assert np.abs(g1 - g2).max() < 1e-14 and np.abs(h1 - h2).max() < 1e-14
        k1, k2 = g1.copy(), g2.copy()
        py.euler_update(g1, k1, x, 0.01, left)
        cc.euler_update(g2, k2, x, 0.01, left)
        assert np.abs(g1 - g2).max() < 1e-13 and np.abs(k1 - k2).max() < 1e-13


@pytest.mark.parametrize("backend", BACKENDS)
def test_euler_step_definition(backend):
    mod = kernels.get_backend(backend)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 4, 4)) + 1j * rng.standard_normal((2, 4, 4))
    g = rng.standard_normal((2, 4, 4)) + 0j
    k = rng.standard_normal((2, 4, 4)) + 0j
    g0, k0 = g.copy(), k.copy()
    eye = np.eye(4)
    mod.euler_update(g, k, x, 0.25, True)
    assert np.allclose(g, g0 @ (eye + x - 0.25 * eye))
    assert np.allclose(k, (eye - x - 0.25 * eye) @ k0)


def test_degree_thresholds():
    assert all(a < b for a, b in zip(THETAS[1:], THETAS[2:]))
    for k in range(1, MAX_DEGREE + 1):
        assert truncation_bound(THETAS[k], k) <= 2.0 ** -53
    k, block, s = choose_degree(100.0)
    assert k <= MAX_DEGREE and 100.0 / 2 ** s <= THETAS[MAX_DEGREE]
    assert choose_degree(1e-20)[0] == 1


def test_pure_python_switch():
    code = "from gltau import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, GLTAU_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
