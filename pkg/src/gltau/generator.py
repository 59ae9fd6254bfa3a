"""Generator of ``t -> E[P(G_t)]`` on pure trace polynomials.

For a pure trace polynomial ``P``::

    d/dt E[P(G_t)] = E[((Delta + N^-2 Delta~) P)(G_t)]

where ``Delta`` is the first order part (Ito drift of every letter plus the
splitting of one trace into two by the covariation of two letters of the same
word) and ``Delta~`` merges two traces into one.  Both operators keep the
total letter count from increasing, so the space ``E_d`` of polynomials of
total degree at most ``d`` is invariant and the flow reduces to a linear
ODE on the coefficient vector in the basis of ``E_d``.  Moments of the free
limit use ``Delta`` alone.

Covariation tables
------------------
For letters ``X^e`` at position ``k`` and ``X^e'`` at ``k' > k`` of the same
process in ``M = A X^e B X^e' C`` the split is::

    sigma^2 * coef * tr(A Q1 C) tr(Q2 B)

and for ``X^e`` in ``M_i = A X^e B``, ``X^e'`` in ``M_i' = C X^e' D`` the merge is::

    sigma^2 * coef * tr(A Q1 D C Q2 B)

with the same ``(coef, Q1, Q2)`` in both cases, listed in ``PAIR_TABLE``.
Here ``tl = tau - lambda`` and ``tbl = conj(tau) - lambda``.
"""
from __future__ import annotations

import functools
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .errors import ClosureError, ResourceError, ToleranceError, UnsupportedLetterError
from .model import ModelParams
from .tracepoly import TraceProduct, TracePolynomial, make_product, product_degree
from .words import Letter, Variant, Word, canonicalize

__all__ = [
    "BASIS_CAP",
    "EXPM_TOL",
    "PAIR_TABLE",
    "pair_coefficient",
    "enumerate_basis",
    "predicted_dimension",
    "apply_delta",
    "apply_delta_tilde",
    "GeneratorOperator",
    "build_generator",
    "expectation_trace",
]

BASIS_CAP = 200_000
EXPM_TOL = 1e-12

ID, STAR, INV, INV_STAR = Variant.ID, Variant.STAR, Variant.INV, Variant.INV_STAR

# (e, e') -> (coefficient symbol, Q1 variants, Q2 variants).
# Symbols: "tl" = tau - lambda, "tbl" = conj(tau) - lambda, "l" = lambda, with an optional sign.
PAIR_TABLE: Dict[Tuple[Variant, Variant], Tuple[str, Tuple[Variant, ...], Tuple[Variant, ...]]] = {
    (ID, ID): ("tl", (ID,), (ID,)),
    (ID, INV): ("-tl", (), ()),
    (ID, STAR): ("l", (ID, STAR), ()),
    (ID, INV_STAR): ("-l", (ID,), (INV_STAR,)),
    (INV, ID): ("-tl", (), ()),
    (INV, INV): ("tl", (INV,), (INV,)),
    (INV, STAR): ("-l", (STAR,), (INV,)),
    (INV, INV_STAR): ("l", (), (INV_STAR, INV)),
    (STAR, ID): ("l", (), (ID, STAR)),
    (STAR, INV): ("-l", (INV,), (STAR,)),
    (STAR, STAR): ("tbl", (STAR,), (STAR,)),
    (STAR, INV_STAR): ("-tbl", (), (INV_STAR, STAR)),
    (INV_STAR, ID): ("-l", (INV_STAR,), (ID,)),
    (INV_STAR, INV): ("l", (INV_STAR, INV), ()),
    (INV_STAR, STAR): ("-tbl", (), ()),
    (INV_STAR, INV_STAR): ("tbl", (INV_STAR,), (INV_STAR,)),
}


def pair_coefficient(symbol: str, params: ModelParams) -> complex:
    sign = -1.0 if symbol.startswith("-") else 1.0
    base = symbol.lstrip("-")
    value = {"tl": params.tau - params.lam,
             "tbl": params.tau.conjugate() - params.lam,
             "l": complex(params.lam)}[base]
    return sign * value


def _drift_rates(params: ModelParams) -> Tuple[complex, complex, complex, complex]:
    tl = params.tau - params.lam
    tbl = params.tau.conjugate() - params.lam
    return (tl, tbl, tl, tbl)  # indexed by Variant


def _letters_of(params: ModelParams, index: int, variants: Sequence[Variant]) -> Word:
    return tuple(Letter(False, index, v) for v in variants)


def _check_pure(poly: TracePolynomial, p: int):
    for letter in poly.letters():
        if letter.det:
            raise UnsupportedLetterError(f"deterministic letter {letter} is not supported by the generator")
        if letter.index >= p:
            raise UnsupportedLetterError(f"letter {letter} exceeds the {p} time scales given")


def _sigmas(params: ModelParams, sigmas) -> Tuple[float, ...]:
    return tuple(params.sigmas if sigmas is None else (float(s) for s in sigmas))


class _Tables:
    """Coefficients of both operators for one parameter set, evaluated once."""

    def __init__(self, params: ModelParams, sigmas: Tuple[float, ...]):
        self.sig2 = tuple(s * s for s in sigmas)
        self.drift = _drift_rates(params)
        self.pairs = {key: (pair_coefficient(sym, params), q1, q2) for key, (sym, q1, q2) in PAIR_TABLE.items()}


def _delta_product(prod: TraceProduct, tab: _Tables, out: Dict[TraceProduct, complex], scale: complex):
    """Accumulate ``scale * Delta(prod)`` into ``out``."""
    diag = 0j
    for w in prod:
        for letter in w:
            diag += 0.5 * tab.sig2[letter.index] * tab.drift[letter.variant]
    if diag != 0:
        out[prod] = out.get(prod, 0j) + scale * diag
    for i, w in enumerate(prod):
        rest = prod[:i] + prod[i + 1:]
        m = len(w)
        for k in range(m):
            lk = w[k]
            for k2 in range(k + 1, m):
                lk2 = w[k2]
                if lk2.index != lk.index:
                    continue
                coef, q1, q2 = tab.pairs[(lk.variant, lk2.variant)]
                coef = coef * tab.sig2[lk.index] * scale
                idx = lk.index
                first = w[:k] + tuple(Letter(False, idx, v) for v in q1) + w[k2 + 1:]
                second = tuple(Letter(False, idx, v) for v in q2) + w[k + 1:k2]
                key = make_product(rest + (first, second))
                out[key] = out.get(key, 0j) + coef


def _delta_tilde_product(prod: TraceProduct, tab: _Tables, out: Dict[TraceProduct, complex], scale: complex):
    """Accumulate ``scale * Delta~(prod)`` into ``out``."""
    for i, i2 in itertools.combinations(range(len(prod)), 2):
        wi, wj = prod[i], prod[i2]
        rest = tuple(w for j, w in enumerate(prod) if j != i and j != i2)
        for k, lk in enumerate(wi):
            for k2, lk2 in enumerate(wj):
                if lk2.index != lk.index:
                    continue
                coef, q1, q2 = tab.pairs[(lk.variant, lk2.variant)]
                coef = coef * tab.sig2[lk.index] * scale
                idx = lk.index
                merged = (wi[:k] + tuple(Letter(False, idx, v) for v in q1) + wj[k2 + 1:] + wj[:k2]
                          + tuple(Letter(False, idx, v) for v in q2) + wi[k + 1:])
                key = make_product(rest + (merged,))
                out[key] = out.get(key, 0j) + coef


def _apply(poly: TracePolynomial, params: ModelParams, sigmas, kernel) -> TracePolynomial:
    sig = _sigmas(params, sigmas)
    _check_pure(poly, len(sig))
    tab = _Tables(params, sig)
    out: Dict[TraceProduct, complex] = {}
    for prod, c in poly.items():
        kernel(prod, tab, out, c)
    return TracePolynomial(out, canonical=True)


def apply_delta(poly: TracePolynomial, params: ModelParams, sigmas=None) -> TracePolynomial:
    """First-order part of the generator (drift term plus trace splitting).

    Raises
    ------
    UnsupportedLetterError
        If ``poly`` contains deterministic letters.
    """
    return _apply(poly, params, sigmas, _delta_product)


def apply_delta_tilde(poly: TracePolynomial, params: ModelParams, sigmas=None) -> TracePolynomial:
    """Trace-merging part of the generator (enters with weight ``1/N^2``)."""
    return _apply(poly, params, sigmas, _delta_tilde_product)


# ---------------------------------------------------------------- basis

def _necklaces(alphabet: Sequence[Letter], length: int) -> List[Word]:
    return sorted({canonicalize(w) for w in itertools.product(alphabet, repeat=length)})


def _alphabet(p: int) -> List[Letter]:
    return [Letter(False, i, v) for i in range(p) for v in Variant]


@functools.lru_cache(maxsize=64)
def _necklace_counts(p: int, d: int) -> Tuple[int, ...]:
    """Number of cyclic classes of words of each length 0..d over 4p letters."""
    q = 4 * p
    counts = [0]
    for m in range(1, d + 1):
        total = 0
        for k in range(1, m + 1):
            if m % k == 0:
                total += _phi(k) * q ** (m // k)
        counts.append(total // m)
    return tuple(counts)


def _phi(k: int) -> int:
    result = k
    x = k
    f = 2
    while f * f <= x:
        if x % f == 0:
            while x % f == 0:
                x //= f
            result -= result // f
        f += 1
    if x > 1:
        result -= result // x
    return result


def predicted_dimension(p: int, d: int) -> int:
    """Dimension of ``E_d`` from necklace counts, without enumerating it.

    Multisets of necklaces with total length at most ``d``: the coefficient
    sum of ``prod_m (1 - x^m)^(-c_m)`` up to ``x^d``.
    """
    counts = _necklace_counts(p, d)
    poly = [1] + [0] * d
    for m in range(1, d + 1):
        for _ in range(counts[m]):
            for s in range(m, d + 1):
                poly[s] += poly[s - m]
    return sum(poly)


@functools.lru_cache(maxsize=32)
def enumerate_basis(p: int, d: int, basis_cap: int = BASIS_CAP) -> Tuple[TraceProduct, ...]:
    """All canonical trace products of total degree ``<= d`` over ``4p`` letters.

    Ordered by total degree, then number of factors, then lexicographically.

    Raises
    ------
    ResourceError
        If the predicted dimension exceeds ``basis_cap``.
    """
    if p < 1 or d < 0:
        raise ValueError("need p >= 1 and d >= 0")
    dim = predicted_dimension(p, d)
    if dim > basis_cap:
        raise ResourceError(f"E_{d} with p={p} has dimension {dim} > basis cap {basis_cap}")
    alphabet = _alphabet(p)
    necks = {m: _necklaces(alphabet, m) for m in range(1, d + 1)}
    pool = [w for m in range(1, d + 1) for w in necks[m]]
    pool.sort()
    out: List[TraceProduct] = [()]

    def extend(start: int, current: Tuple[Word, ...], budget: int):
        for j in range(start, len(pool)):
            w = pool[j]
            if len(w) <= budget:
                prod = current + (w,)
                out.append(prod)
                extend(j, prod, budget - len(w))

    extend(0, (), d)
    out = sorted(set(out), key=lambda pr: (product_degree(pr), len(pr), pr))
    if len(out) != dim:  # pragma: no cover - guards the counting formula
        raise AssertionError(f"basis size {len(out)} differs from the predicted {dim}")
    return tuple(out)


# ---------------------------------------------------------------- operator

@dataclass(frozen=True)
class GeneratorOperator:
    """Sparse matrix of ``Delta + c Delta~`` on the basis of ``E_d``.

    Column ``j`` holds the coefficients of the image of ``basis[j]``.
    """

    basis: Tuple[TraceProduct, ...]
    matrix: sp.csr_matrix = field(repr=False)
    c: float
    n: float
    params: ModelParams
    sigmas: Tuple[float, ...]
    degree: int

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @functools.cached_property
    def index(self) -> Dict[TraceProduct, int]:
        return {b: i for i, b in enumerate(self.basis)}

    def vector(self, poly: TracePolynomial) -> np.ndarray:
        """Coefficient vector of ``poly`` in the basis."""
        v = np.zeros(self.dimension, dtype=complex)
        idx = self.index
        for prod, c in poly.items():
            j = idx.get(prod)
            if j is None:
                raise ValueError(f"term {TracePolynomial({prod: 1}, canonical=True)} is outside E_{self.degree}"
                                 f" for arity {len(self.sigmas)}")
            v[j] = c
        return v

    def polynomial(self, v: np.ndarray) -> TracePolynomial:
        return TracePolynomial({self.basis[j]: v[j] for j in np.flatnonzero(v)}, canonical=True)

    def apply(self, poly: TracePolynomial) -> TracePolynomial:
        return self.polynomial(self.matrix @ self.vector(poly))


def _normalize_n(n) -> float:
    if n is None:
        return math.inf
    if isinstance(n, str):
        if n.strip().lower() in ("inf", "infinity", "oo", "free"):
            return math.inf
        n = float(n)
    n = float(n)
    if not (n >= 1):
        raise ValueError(f"matrix size must be >= 1 or infinite, got {n}")
    return n


@functools.lru_cache(maxsize=16)
def _operator_parts(p: int, d: int, params: ModelParams, sigmas: Tuple[float, ...], basis_cap: int):
    basis = enumerate_basis(p, d, basis_cap)
    index = {b: i for i, b in enumerate(basis)}
    tab = _Tables(params, sigmas)
    mats = []
    for kernel in (_delta_product, _delta_tilde_product):
        rows, cols, vals = [], [], []
        for j, prod in enumerate(basis):
            out: Dict[TraceProduct, complex] = {}
            kernel(prod, tab, out, 1.0)
            for key, c in out.items():
                if abs(c) <= 1e-15:
                    continue
                i = index.get(key)
                if i is None:
                    raise ClosureError(f"image term of degree {product_degree(key)} leaves E_{d}")
                rows.append(i)
                cols.append(j)
                vals.append(c)
        m = sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(len(basis),) * 2)
        m.sum_duplicates()
        mats.append(m)
    return basis, mats[0], mats[1]


def build_generator(p: int, d: int, params: ModelParams, sigmas=None, n=math.inf,
                    basis_cap: int = BASIS_CAP) -> GeneratorOperator:
    """Assemble ``Delta + c Delta~`` on ``E_d`` with ``c = 1/N^2`` (0 for ``n = inf``).

    Raises
    ------
    ResourceError
        If ``E_d`` exceeds ``basis_cap``.
    ClosureError
        If an image term falls outside ``E_d``.
    """
    sig = _sigmas(params, sigmas)
    if len(sig) != p:
        raise ValueError(f"{len(sig)} time scales given for arity {p}")
    nn = _normalize_n(n)
    c = 0.0 if math.isinf(nn) else 1.0 / (nn * nn)
    basis, delta, tilde = _operator_parts(int(p), int(d), params, sig, int(basis_cap))
    mat = (delta + c * tilde).tocsr() if c else delta.copy()
    return GeneratorOperator(basis, mat, c, nn, params, sig, int(d))


def expectation_trace(poly: TracePolynomial, t: float, op: GeneratorOperator, tol: float = EXPM_TOL) -> complex:
    """``(exp(t L) P)(1)``: the exact expectation ``E[P(G_t)]`` (free moment when ``c = 0``).

    The coefficient ODE ``v' = L v`` is integrated with an adaptive eighth
    order Runge-Kutta method at relative and absolute tolerance ``tol``.

    Raises
    ------
    ToleranceError
        If the integrator fails to reach ``tol``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    _check_pure(poly, len(op.sigmas))
    v0 = op.vector(poly)
    if t == 0 or not np.any(v0):
        return complex(v0.sum())
    mat = op.matrix
    scale = max(1.0, float(np.abs(v0).max()))
    sol = solve_ivp(lambda _t, v: mat @ v, (0.0, float(t)), v0, method="DOP853",
                    rtol=tol, atol=tol * scale, dense_output=False)
    if not sol.success:
        raise ToleranceError(f"ODE integration failed to reach tolerance {tol:g}: {sol.message}")
    return complex(sol.y[:, -1].sum())
