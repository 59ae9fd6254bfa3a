import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import expm_multiply

from gltau.errors import ResourceError, UnsupportedLetterError
from gltau.generator import (PAIR_TABLE, apply_delta, apply_delta_tilde, build_generator, enumerate_basis,
                             expectation_trace, pair_coefficient, predicted_dimension)
from gltau.model import validate_params
from gltau.sde import TrajectoryConfig, run_replicas
from gltau.tracepoly import TracePolynomial, evaluate_on_sample, parse_trace_polynomial, product_degree
from gltau.words import Letter, Variant
from oracles import (brute_force_basis_size, covariation_table, free_unitary_moment, mean_trace_first,
                     mean_trace_gg_star, variant_matrix)

P = parse_trace_polynomial
UNITARY = validate_params(1, 0)
GINIBRE = validate_params(1, 1)
GENERIC = validate_params(1, 0.5 + 0.3j)
PARAMS = [UNITARY, GINIBRE, GENERIC, validate_params(1, 1 + 0.5j), validate_params(2, 1 - 1j)]


# ---------------------------------------------------------------- basis

@pytest.mark.parametrize("p,d", [(1, d) for d in range(9)] + [(2, d) for d in range(6)])
def test_dimension_against_brute_force(p, d):
    assert predicted_dimension(p, d) == brute_force_basis_size(p, d)


def test_dimension_examples():
    assert [predicted_dimension(1, d) for d in (0, 1, 2)] == [1, 5, 25]


@pytest.mark.parametrize("p,d", [(1, 0), (1, 3), (1, 4), (2, 2), (2, 3)])
def test_enumeration_is_complete_and_ordered(p, d):
    basis = enumerate_basis(p, d)
    assert len(basis) == predicted_dimension(p, d) == len(set(basis))
    assert basis[0] == ()
    degrees = [product_degree(b) for b in basis]
    assert degrees == sorted(degrees) and max(degrees) == d


def test_basis_cap():
    with pytest.raises(ResourceError):
        enumerate_basis(1, 9, basis_cap=1000)
    with pytest.raises(ResourceError):
        build_generator(2, 6, UNITARY.with_sigmas([1, 1]))


# ---------------------------------------------------------------- covariation table

@pytest.mark.parametrize("key", sorted(PAIR_TABLE))
def test_pair_table_reproduces_published_covariations(key):
    """sigma^2 coef Q1 tr(Q2 V) must equal the published d<G^e, G^e'> # V."""
    e1, e2 = key
    sym, q1, q2 = PAIR_TABLE[key]
    rng = np.random.default_rng(3)
    n = 4
    g0 = np.eye(n) + 0.5 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / 2
    v = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))

    def word_matrix(variants):
        m = np.eye(n, dtype=complex)
        for e in variants:
            m = m @ variant_matrix(g0, e)
        return m

    for params, sigma in ((GENERIC, 1.0), (validate_params(2, 1 - 1j), 0.6)):
        coef = sigma ** 2 * pair_coefficient(sym, params)
        ours = coef * word_matrix(q1) * (np.trace(word_matrix(q2) @ v) / n)
        ref = covariation_table(e1, e2, params.lam, params.tau, sigma, g0, v)
        assert np.abs(ours - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


# ---------------------------------------------------------------- operators

@pytest.mark.parametrize("params", PARAMS)
def test_single_letter_drift(params):
    out = apply_delta(P("tr(g1)"), params)
    assert out.allclose(P("tr(g1)") * (0.5 * (params.tau - params.lam)))
    assert apply_delta_tilde(P("tr(g1)"), params).is_zero()


def test_hand_expanded_examples():
    assert apply_delta(P("tr(g1 g1)"), UNITARY).allclose(P("-tr(g1 g1) - tr(g1)*tr(g1)"))
    out = apply_delta(P("tr(g1 g1^-1)"), UNITARY)
    assert out.allclose(P("-tr(g1 g1^-1) + 1"))
    assert apply_delta_tilde(P("tr(g1)*tr(g1)"), UNITARY).allclose(P("-tr(g1 g1)"))
    two = UNITARY.with_sigmas([1, 1])
    assert apply_delta_tilde(P("tr(g1)*tr(g2)"), two).is_zero()


def test_deterministic_letters_rejected():
    with pytest.raises(UnsupportedLetterError):
        apply_delta(P("tr(g1 a1)"), UNITARY)
    with pytest.raises(UnsupportedLetterError):
        apply_delta_tilde(P("tr(g2)"), UNITARY)


def _random_poly(draw_terms, p=1):
    basis = enumerate_basis(p, 4)
    poly = TracePolynomial.constant(0)
    for idx, c in draw_terms:
        poly = poly + TracePolynomial({basis[idx % len(basis)]: c})
    return poly


coefs = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)
terms = st.lists(st.tuples(st.integers(0, 10**6), coefs), min_size=1, max_size=5)


@settings(max_examples=40, deadline=None)
@given(terms, terms, coefs, coefs, st.sampled_from(PARAMS))
def test_linearity(t1, t2, a, b, params):
    p1, p2 = _random_poly(t1), _random_poly(t2)
    for op in (apply_delta, apply_delta_tilde):
        lhs = op(p1 * a + p2 * b, params)
        rhs = op(p1, params) * a + op(p2, params) * b
        assert (lhs - rhs).allclose(TracePolynomial.constant(0), atol=1e-10)


@pytest.mark.parametrize("p,d", [(1, 4), (2, 3)])
def test_filtration_preserved(p, d):
    params = GENERIC.with_sigmas([1.0, 0.7][:p])
    for prod in enumerate_basis(p, d):
        src = TracePolynomial({prod: 1}, canonical=True)
        for op in (apply_delta, apply_delta_tilde):
            assert op(src, params).degree <= product_degree(prod)


def test_matrix_columns_reproduce_operators():
    params = GENERIC
    n = 5.0
    op = build_generator(1, 3, params, n=n)
    inf = build_generator(1, 3, params, n="inf")
    for j, prod in enumerate(op.basis):
        src = TracePolynomial({prod: 1}, canonical=True)
        d = apply_delta(src, params)
        t = apply_delta_tilde(src, params)
        assert op.apply(src).allclose(d + t * (1 / n ** 2), atol=1e-14)
        assert inf.apply(src).allclose(d, atol=1e-14)
    diff = (op.matrix - inf.matrix).toarray()
    tilde = np.column_stack([op.vector(apply_delta_tilde(TracePolynomial({b: 1}, canonical=True), params))
                             for b in op.basis])
    assert np.abs(diff - tilde / n ** 2).max() < 1e-14


def test_degree_one_matrix_is_diagonal():
    op = build_generator(1, 1, GENERIC)
    m = op.matrix.toarray()
    assert m.shape == (5, 5)
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0
    j = op.index[next(iter(P("tr(g1)")))]
    assert m[j, j] == pytest.approx(0.5 * (GENERIC.tau - GENERIC.lam))


def test_second_moment_image_support():
    op = build_generator(1, 2, UNITARY)
    assert op.apply(P("tr(g1 g1)")).allclose(P("-tr(g1 g1) - tr(g1)*tr(g1)"))


# ---------------------------------------------------------------- flows

@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_free_unitary_moments(k, t):
    op = build_generator(1, k, UNITARY, n=math.inf)
    word = "tr(" + " ".join(["g1"] * k) + ")"
    assert abs(expectation_trace(P(word), t, op) - free_unitary_moment(k, t)) < 1e-10


@pytest.mark.parametrize("params", PARAMS)
@pytest.mark.parametrize("n", [1, 3, math.inf])
def test_gg_star_and_martingale(params, n):
    for sigma in (1.0, 0.7):
        ps = params.with_sigmas([sigma])
        op = build_generator(1, 2, ps, n=n)
        for t in (0.5, 1.5):
            assert abs(expectation_trace(P("tr(g1)"), t, op) - mean_trace_first(ps.lam, ps.tau, t, sigma)) < 1e-10
            assert abs(expectation_trace(P("tr(g1 g1*)"), t, op) - mean_trace_gg_star(ps.tau, t, sigma)) < 1e-9
            assert abs(expectation_trace(P("tr(g1 g1^-1)"), t, op) - 1) < 1e-9


def test_two_independent_processes_factorise():
    ps = GENERIC.with_sigmas([1.0, 2.0])
    op = build_generator(2, 2, ps, n=4)
    t = 0.8
    expected = mean_trace_first(ps.lam, ps.tau, t, 1.0) * mean_trace_first(ps.lam, ps.tau, t, 2.0)
    assert abs(expectation_trace(P("tr(g1 g2)"), t, op) - expected) < 1e-10


@pytest.mark.parametrize("params", [UNITARY, GENERIC])
def test_flow_matches_sparse_exponential_action(params):
    op = build_generator(1, 4, params, n=6)
    rng = np.random.default_rng(4)
    v = rng.standard_normal(op.dimension) + 1j * rng.standard_normal(op.dimension)
    poly = op.polynomial(v)
    for t in (0.0, 0.7, 2.0):
        ref = expm_multiply(op.matrix * t, v).sum()
        assert abs(expectation_trace(poly, t, op) - ref) < 1e-9 * max(1, abs(ref))


def test_duhamel_gap_over_the_basis():
    t = 1.0
    free = build_generator(1, 4, GENERIC, n=math.inf)
    ones = np.ones(free.dimension, dtype=complex)
    w_inf = expm_multiply(free.matrix.T * t, ones)
    ns = [8, 16, 32, 64]
    gaps = []
    for n in ns:
        op = build_generator(1, 4, GENERIC, n=n)
        gaps.append(np.linalg.norm(expm_multiply(op.matrix.T * t, ones) - w_inf))
    slope = np.polyfit(np.log(ns), np.log(gaps), 1)[0]
    assert abs(slope + 2) <= 0.02


def test_flow_at_time_zero_and_input_checks():
    op = build_generator(1, 3, GENERIC, n=4)
    poly = P("2*tr(g1 g1* g1) - tr(g1^-1)*tr(g1) + 0.5")
    assert expectation_trace(poly, 0.0, op) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        op.vector(P("tr(g1 g1 g1 g1)"))
    with pytest.raises(ValueError):
        expectation_trace(poly, -1.0, op)
    with pytest.raises(ValueError):
        build_generator(2, 2, GENERIC)
    with pytest.raises(ValueError):
        build_generator(1, 2, GENERIC, n=0.5)


def test_small_monte_carlo_agreement():
    """A cheap version of the simulator/generator cross-check at N = 4."""
    n, t = 4, 0.5
    cfg = TrajectoryConfig(n, GENERIC, t, dt=2e-3, seed=21)
    polys = [P("tr(g1 g1* g1)"), P("tr(g1^-1 g1*)"), P("tr(g1)*tr(g1*)")]
    vals = run_replicas(cfg, 4000, lambda s: np.stack([evaluate_on_sample(q, s[-1]) for q in polys], axis=1))
    op = build_generator(1, 3, GENERIC, n=n)
    for j, q in enumerate(polys):
        x = vals[:, j]
        se = math.hypot(x.real.std(ddof=1), x.imag.std(ddof=1)) / math.sqrt(x.size)
        assert abs(x.mean() - expectation_trace(q, t, op)) <= 3 * se + 0.02
