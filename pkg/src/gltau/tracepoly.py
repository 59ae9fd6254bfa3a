"""Pure trace polynomials and noncommutative matrix polynomials.

A :class:`TracePolynomial` is a finite combination of products
``tr(M_1) ... tr(M_n)`` of normalised traces of words.  A product is stored as
a sorted tuple of canonical (cyclically minimal) nonempty words; the empty
tuple is the constant 1.  A trace of the empty word equals 1 and is dropped.

Text syntax (whitespace-insensitive)::

    2.5 * tr(g1 g1* g1^-1) * tr(g2) - 0.5j * tr(g1 + a1*)

Letters are ``g<k>`` with optional suffix ``*``, ``^-1`` or ``^-1*`` and
deterministic letters ``a<j>`` or ``a<j>*`` (indices start at 1).  Factors
may be separated by ``*`` or juxtaposed; parentheses group; ``tr`` is linear
in its argument.  A ``*`` written directly after a letter is always read as
the adjoint suffix, so ``g1*g2`` is ``g1* g2``; put a space before a
multiplication sign that follows a letter.  :func:`parse_matrix_polynomial` reads the same language
without ``tr``, where juxtaposed letters multiply.
"""
from __future__ import annotations

import numbers
import re
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import TraceSyntaxError
from .words import Letter, Variant, Word, canonicalize, word_str

__all__ = [
    "PRUNE_TOL",
    "TraceProduct",
    "make_product",
    "product_degree",
    "TracePolynomial",
    "MatrixPolynomial",
    "parse_trace_polynomial",
    "parse_matrix_polynomial",
    "evaluate_at_identity",
    "evaluate_on_sample",
]

PRUNE_TOL = 1e-15

TraceProduct = Tuple[Word, ...]


def make_product(words: Iterable[Sequence[Letter]]) -> TraceProduct:
    """Canonical trace product: canonical words, empty words removed, sorted."""
    return tuple(sorted(canonicalize(w) for w in words if len(w)))


def product_degree(prod: TraceProduct) -> int:
    return sum(len(w) for w in prod)


def _fmt_coef(c: complex) -> str:
    if c.imag == 0:
        return repr(float(c.real))
    if c.real == 0:
        return f"{float(c.imag)!r}j"
    return f"({c.real!r}{c.imag:+}j)"


class TracePolynomial:
    """Map from trace products to complex coefficients.

    Coefficients of magnitude at most ``PRUNE_TOL`` are dropped whenever a
    polynomial is built.  Terms iterate in sorted product order, which makes
    printing and vectorisation deterministic.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[TraceProduct, complex] | None = None, *, canonical: bool = False):
        acc: Dict[TraceProduct, complex] = {}
        if terms:
            for prod, c in terms.items():
                key = prod if canonical else make_product(prod)
                acc[key] = acc.get(key, 0j) + complex(c)
        self._terms = {k: acc[k] for k in sorted(acc) if abs(acc[k]) > PRUNE_TOL}

    # construction helpers
    @classmethod
    def constant(cls, c: complex = 1.0) -> "TracePolynomial":
        return cls({(): c}, canonical=True)

    @classmethod
    def trace(cls, word: Sequence[Letter], coef: complex = 1.0) -> "TracePolynomial":
        return cls({(tuple(word),): coef})

    @classmethod
    def from_text(cls, text: str) -> "TracePolynomial":
        return parse_trace_polynomial(text)

    # container protocol
    @property
    def terms(self) -> Dict[TraceProduct, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __iter__(self) -> Iterator[TraceProduct]:
        return iter(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __getitem__(self, prod: TraceProduct) -> complex:
        return self._terms.get(make_product(prod), 0j)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Largest total letter count of a term (0 for constants and for zero)."""
        return max((product_degree(p) for p in self._terms), default=0)

    def letters(self) -> set:
        return {letter for prod in self._terms for w in prod for letter in w}

    @property
    def arity(self) -> int:
        """``1 +`` the largest process index used (0 when no process letter occurs)."""
        return max((l.index + 1 for l in self.letters() if not l.det), default=0)

    @property
    def has_deterministic(self) -> bool:
        return any(l.det for l in self.letters())

    # arithmetic
    def __add__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0j) + c
        return TracePolynomial(acc, canonical=True)

    __radd__ = __add__

    def __neg__(self):
        return TracePolynomial({k: -c for k, c in self._terms.items()}, canonical=True)

    def __sub__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return TracePolynomial({k: c * other for k, c in self._terms.items()}, canonical=True)
        other = _as_poly(other)
        if other is NotImplemented:
            return other
        acc: Dict[TraceProduct, complex] = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                key = tuple(sorted(k1 + k2))
                acc[key] = acc.get(key, 0j) + c1 * c2
        return TracePolynomial(acc, canonical=True)

    __rmul__ = __mul__

    def __eq__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return False
        return self._terms == other._terms

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= atol for _, c in diff.items())

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for prod, c in self._terms.items():
            factors = [f"tr({word_str(w)})" for w in prod]
            parts.append(" * ".join([_fmt_coef(c)] + factors))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"TracePolynomial({self})"


def _as_poly(x):
    if isinstance(x, TracePolynomial):
        return x
    if isinstance(x, numbers.Number):
        return TracePolynomial.constant(x)
    return NotImplemented


class MatrixPolynomial:
    """Noncommutative polynomial: map from words to coefficients (empty word = identity)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Sequence[Letter], complex] | None = None):
        acc: Dict[Word, complex] = {}
        for w, c in (terms or {}).items():
            w = tuple(w)
            acc[w] = acc.get(w, 0j) + complex(c)
        self._terms = {k: acc[k] for k in sorted(acc) if abs(acc[k]) > PRUNE_TOL}

    @classmethod
    def from_text(cls, text: str) -> "MatrixPolynomial":
        return parse_matrix_polynomial(text)

    def items(self):
        return self._terms.items()

    @property
    def terms(self) -> Dict[Word, complex]:
        return dict(self._terms)

    def letters(self) -> set:
        return {letter for w in self._terms for letter in w}

    @property
    def arity(self) -> int:
        return max((l.index + 1 for l in self.letters() if not l.det), default=0)

    @property
    def det_count(self) -> int:
        return max((l.index + 1 for l in self.letters() if l.det), default=0)

    def __add__(self, other):
        other = _as_mpoly(other)
        acc = dict(self._terms)
        for w, c in other._terms.items():
            acc[w] = acc.get(w, 0j) + c
        return MatrixPolynomial(acc)

    __radd__ = __add__

    def __neg__(self):
        return MatrixPolynomial({w: -c for w, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-_as_mpoly(other))

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return MatrixPolynomial({w: c * other for w, c in self._terms.items()})
        other = _as_mpoly(other)
        acc: Dict[Word, complex] = {}
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                acc[w1 + w2] = acc.get(w1 + w2, 0j) + c1 * c2
        return MatrixPolynomial(acc)

    def __rmul__(self, other):
        if isinstance(other, numbers.Number):
            return self * other
        return _as_mpoly(other) * self

    def adjoint(self) -> "MatrixPolynomial":
        return MatrixPolynomial({tuple(l.adjoint for l in reversed(w)): c.conjugate()
                                 for w, c in self._terms.items()})

    def trace(self) -> TracePolynomial:
        """The pure trace polynomial ``tr(self)``."""
        return TracePolynomial({(w,): c for w, c in self._terms.items()})

    def __eq__(self, other):
        return isinstance(other, MatrixPolynomial) and self._terms == other._terms

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for w, c in self._terms.items():
            parts.append(" * ".join([_fmt_coef(c)] + ([word_str(w)] if w else [])))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"MatrixPolynomial({self})"


def _as_mpoly(x):
    if isinstance(x, MatrixPolynomial):
        return x
    if isinstance(x, numbers.Number):
        return MatrixPolynomial({(): x})
    raise TypeError(f"cannot combine a matrix polynomial with {type(x).__name__}")


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?[jJ]?)
  | (?P<letter>[ga]\d+(?:\^-1)?\*?)
  | (?P<tr>tr(?![A-Za-z0-9_]))
  | (?P<op>[-+*()])
""", re.VERBOSE)


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def _tokenize(text: str) -> List[_Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or (m.lastgroup == "letter" and _ident_continues(text, m.end())):
            bad = re.match(r"[A-Za-z_][A-Za-z0-9_^*-]*|.", text[pos:]).group(0)
            raise TraceSyntaxError(f"unexpected {bad!r}", line, col)
        s = m.group(0)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, s, line, col))
        nl = s.count("\n")
        if nl:
            line += nl
            col = len(s) - s.rfind("\n")
        else:
            col += len(s)
        pos = m.end()
    toks.append(_Tok("end", "", line, col))
    return toks


def _ident_continues(text, end):
    """True when a letter token runs into an identifier that is not another letter or ``tr``."""
    if end >= len(text) or not (text[end].isalnum() or text[end] == "_"):
        return False
    return _NEXT_OK.match(text, end) is None


_NEXT_OK = re.compile(r"[ga]\d|tr(?![A-Za-z0-9_])")


def _letter(tok: _Tok) -> Letter:
    m = re.fullmatch(r"([ga])(\d+)(\^-1)?(\*)?", tok.text)
    kind, idx, inv, star = m.group(1), int(m.group(2)), bool(m.group(3)), bool(m.group(4))
    if idx < 1:
        raise TraceSyntaxError(f"letter {tok.text!r}: indices start at 1", tok.line, tok.col)
    if kind == "a":
        if inv:
            raise TraceSyntaxError(f"letter {tok.text!r}: deterministic letters have no inverse",
                                   tok.line, tok.col)
        return Letter(True, idx - 1, Variant.STAR if star else Variant.ID)
    return Letter(False, idx - 1, Variant(2 * inv + star))


class _Parser:
    """Recursive descent over expressions whose values are Matrix or Trace polynomials."""

    def __init__(self, text: str, trace_mode: bool):
        self.toks = _tokenize(text)
        self.i = 0
        self.trace_mode = trace_mode
        self.depth_tr = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise TraceSyntaxError(msg, tok.line, tok.col)

    def expect(self, text):
        if self.tok.text != text:
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        self.i += 1

    def parse(self):
        if self.tok.kind == "end":
            self.error("empty expression")
        value = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}")
        return value

    def matrix_level(self) -> bool:
        return not self.trace_mode or self.depth_tr > 0

    def zero(self):
        return MatrixPolynomial() if self.matrix_level() else TracePolynomial()

    def expr(self):
        sign = 1
        if self.tok.text in "+-" and self.tok.kind == "op":
            sign = -1 if self.tok.text == "-" else 1
            self.i += 1
        value = self.term() * sign
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def starts_factor(self) -> bool:
        t = self.tok
        return t.kind in ("num", "letter", "tr") or (t.kind == "op" and t.text == "(")

    def term(self):
        value = self.factor()
        while True:
            if self.tok.kind == "op" and self.tok.text == "*":
                self.i += 1
                if not self.starts_factor():
                    self.error(f"expected a factor after '*', found {self.tok.text or 'end of input'!r}")
            elif not self.starts_factor():
                return value
            rhs = self.factor()
            value = _mul(value, rhs)

    def factor(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return complex(t.text.replace("J", "j")) if t.text[-1] in "jJ" else float(t.text)
        if t.kind == "letter":
            if not self.matrix_level():
                self.error(f"letter {t.text!r} outside tr(...)")
            self.i += 1
            return MatrixPolynomial({(_letter(t),): 1.0})
        if t.kind == "tr":
            if self.matrix_level():
                self.error("tr(...) is not allowed here")
            self.i += 1
            self.expect("(")
            self.depth_tr += 1
            inner = self.expr()
            self.depth_tr -= 1
            self.expect(")")
            if isinstance(inner, numbers.Number):
                inner = MatrixPolynomial({(): inner})
            return inner.trace()
        if t.kind == "op" and t.text == "(":
            self.i += 1
            value = self.expr()
            self.expect(")")
            return value
        if t.kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected {t.text!r}")


def _mul(a, b):
    if isinstance(a, numbers.Number) and isinstance(b, numbers.Number):
        return a * b
    if isinstance(a, numbers.Number):
        return b * a
    return a * b


def parse_trace_polynomial(text: str) -> TracePolynomial:
    """Parse the trace-polynomial text syntax.

    Raises
    ------
    TraceSyntaxError
        With the line and column of the offending token.
    """
    value = _Parser(text, trace_mode=True).parse()
    if isinstance(value, numbers.Number):
        return TracePolynomial.constant(value)
    return value


def parse_matrix_polynomial(text: str) -> MatrixPolynomial:
    """Parse a noncommutative polynomial such as ``"g1 + g1* + 2 a1"``."""
    value = _Parser(text, trace_mode=False).parse()
    if isinstance(value, numbers.Number):
        return MatrixPolynomial({(): value})
    return value


# ---------------------------------------------------------------- evaluation

def evaluate_at_identity(poly: TracePolynomial) -> complex:
    """Value with every letter replaced by the identity: the coefficient sum."""
    return complex(sum(c for _, c in poly.items()))


def evaluate_on_sample(poly: TracePolynomial, sample):
    """``sum_k c_k prod_i tr_N(M_i(sample))``.

    For a batched sample the result is an array with one value per replica.
    Each distinct word is evaluated once.
    """
    from .sde import evaluate_word

    if poly.arity > sample.p:
        raise ValueError(f"polynomial uses {poly.arity} processes, sample has {sample.p}")
    cache: Dict[Word, np.ndarray] = {}
    n = sample.n
    batch = sample.batch_size
    total = np.zeros(batch, dtype=complex) if batch is not None else 0j
    for prod, c in poly.items():
        value = c
        for w in prod:
            if w not in cache:
                cache[w] = np.trace(evaluate_word(w, sample), axis1=-2, axis2=-1) / n
            value = value * cache[w]
        total = total + value
    return total
