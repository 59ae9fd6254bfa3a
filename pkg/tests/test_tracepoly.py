import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gltau.errors import TraceSyntaxError
from gltau.model import validate_params
from gltau.sde import TrajectoryConfig, evaluate_word, simulate, simulate_batch
from gltau.tracepoly import (MatrixPolynomial, TracePolynomial, evaluate_at_identity, evaluate_on_sample,
                             parse_matrix_polynomial, parse_trace_polynomial)
from gltau.words import Letter, Variant, adjoint_word, canonicalize, det, g

letters = st.builds(Letter, st.just(False), st.integers(0, 2), st.sampled_from(list(Variant)))
words = st.lists(letters, max_size=7).map(tuple)


# ---------------------------------------------------------------- words

def test_canonical_examples():
    x, xs = g(1), g(1, Variant.STAR)
    assert canonicalize((x, xs)) == canonicalize((xs, x))
    assert canonicalize(()) == ()
    assert canonicalize((g(2), g(1), g(1))) == (g(1), g(1), g(2))
    assert str(g(1, Variant.INV_STAR)) == "g1^-1*" and str(det(2, star=True)) == "a2*"
    with pytest.raises(IndexError):
        g(0)


@settings(max_examples=300, deadline=None)
@given(words, st.integers(0, 10))
def test_canonical_form_is_rotation_invariant_and_idempotent(w, k):
    c = canonicalize(w)
    assert canonicalize(c) == c
    if w:
        k %= len(w)
        assert canonicalize(w[k:] + w[:k]) == c
        assert all(c <= c[i:] + c[:i] for i in range(len(c)))
    assert sorted(c) == sorted(w)


@given(words)
def test_adjoint_word_is_an_involution(w):
    assert adjoint_word(adjoint_word(w)) == w


# ---------------------------------------------------------------- parsing

def test_parse_examples():
    p = parse_trace_polynomial("tr(g1 g1*)")
    assert len(p) == 1 and p.degree == 2
    q = parse_trace_polynomial("2*tr(g1)*tr(g1) - tr(g1 g1)")
    assert sorted(c.real for _, c in q.items()) == [-1.0, 2.0]
    r = parse_trace_polynomial("2.5 * tr(g1 g1* g1^-1) * tr(g2)")
    assert r.arity == 2 and r.degree == 4


def test_parse_is_whitespace_insensitive_and_linear():
    a = parse_trace_polynomial("tr(g1 g1*g1 g1*)")
    b = parse_trace_polynomial("tr( g1  g1* g1\n g1* )")
    assert a == b
    lin = parse_trace_polynomial("tr(g1 + 2 g2^-1) - 0.5j*tr(a1*)")
    expected = (TracePolynomial.trace([g(1)]) + TracePolynomial.trace([g(2, Variant.INV)], 2)
                - TracePolynomial.trace([det(1, star=True)], 0.5j))
    assert lin == expected
    assert parse_trace_polynomial("tr(g1 g2) ") == parse_trace_polynomial("tr(g2 g1)")


@pytest.mark.parametrize("text,line,col", [
    ("tr(g1 q2)", 1, 7),
    ("tr(g1", 1, 6),
    ("g1", 1, 1),
    ("tr(g1)\n + tr(a1^-1)", 2, 7),
    ("", 1, 1),
    ("tr(g0)", 1, 4),
])
def test_syntax_errors_carry_position(text, line, col):
    with pytest.raises(TraceSyntaxError) as info:
        parse_trace_polynomial(text)
    assert (info.value.line, info.value.column) == (line, col)


def test_matrix_polynomial_parse_and_adjoint():
    m = parse_matrix_polynomial("g1 + g1* + 2 a1")
    assert m.arity == 1 and m.det_count == 1
    assert m.adjoint() == parse_matrix_polynomial("g1* + g1 + 2 a1*")
    assert (m * m).trace() == parse_trace_polynomial("tr((g1 + g1* + 2 a1)(g1 + g1* + 2 a1))")


# ---------------------------------------------------------------- algebra and evaluation

def test_identity_evaluation_examples():
    assert evaluate_at_identity(TracePolynomial.constant(1)) == 1
    assert evaluate_at_identity(parse_trace_polynomial("tr(g1)*tr(g1*) - 2*tr(g1^-1)")) == -1
    assert evaluate_at_identity(parse_trace_polynomial("3.5*tr(g1 g2 g1^-1)")) == 3.5


def test_pruning_and_arithmetic():
    p = parse_trace_polynomial("tr(g1 g1) + tr(g1)")
    assert (p - p).is_zero()
    assert (p * 0).is_zero()
    assert (p * p).degree == 4
    assert (2 * p - p) == p
    assert p.allclose(p + 1e-16)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(words, st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)),
                max_size=4))
def test_evaluation_is_a_ring_homomorphism(terms):
    s = simulate(TrajectoryConfig(3, validate_params(1, 0.5 + 0.2j, [1, 1, 1]), 0.2, seed=1))[-1]
    p = TracePolynomial.constant(0)
    for w, c in terms:
        p = p + TracePolynomial.trace(w, c)
    q = parse_trace_polynomial("tr(g1 g2*) + 2")
    lhs = evaluate_on_sample(p * q + p, s)
    rhs = evaluate_on_sample(p, s) * evaluate_on_sample(q, s) + evaluate_on_sample(p, s)
    assert abs(lhs - rhs) <= 1e-9 * (1 + abs(rhs))


def test_sample_evaluation_matches_numpy():
    cfg = TrajectoryConfig(5, validate_params(1, 0.6 + 0.3j, [1, 0.5]), 0.5, seed=2)
    s = simulate_batch(cfg, 3)[-1]
    p = parse_trace_polynomial("tr(g1 g2^-1*) * tr(g1*) + 2j*tr(g2 g2)")
    vals = evaluate_on_sample(p, s)
    for r in range(3):
        gg = s.g[r]
        gi = np.linalg.inv(gg)
        tr = lambda m: np.trace(m) / 5  # noqa: E731
        ref = tr(gg[0] @ gi[1].conj().T) * tr(gg[0].conj().T) + 2j * tr(gg[1] @ gg[1])
        assert abs(vals[r] - ref) < 1e-10


def test_inverse_and_unitary_cancellations():
    s = simulate(TrajectoryConfig(8, validate_params(1, 0), 1.0, seed=3))[-1]
    assert abs(evaluate_on_sample(parse_trace_polynomial("tr(g1 g1^-1)"), s) - 1) < 1e-8
    assert abs(evaluate_on_sample(parse_trace_polynomial("tr(g1 g1*)"), s) - 1) < 1e-10
    with pytest.raises(ValueError):
        evaluate_on_sample(parse_trace_polynomial("tr(g2)"), s)
