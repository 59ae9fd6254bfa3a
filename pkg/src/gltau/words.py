"""Letters and words in the indeterminates X_l, X_l*, X_l^-1, X_l^-1*.

A letter is either a process letter (index ``l`` of one of the ``p``
independent processes) or a deterministic letter ``a_j`` standing for a fixed
matrix.  Indices are stored 0-based and printed 1-based (``g1`` is index 0).
Letters are ordered as tuples, so process letters precede deterministic ones,
then by index, then by variant.
"""
from __future__ import annotations

import enum
from typing import NamedTuple, Sequence, Tuple

__all__ = ["Variant", "Letter", "Word", "g", "det", "canonicalize", "word_str", "adjoint_word"]


class Variant(enum.IntEnum):
    """Which of G, G*, G^-1, G^-1* a letter stands for."""

    ID = 0
    STAR = 1
    INV = 2
    INV_STAR = 3

    @property
    def suffix(self) -> str:
        return ("", "*", "^-1", "^-1*")[self]

    @property
    def adjoint(self) -> "Variant":
        return Variant(self ^ 1)


class Letter(NamedTuple):
    det: bool
    index: int
    variant: Variant

    def __str__(self) -> str:
        return f"{'a' if self.det else 'g'}{self.index + 1}{Variant(self.variant).suffix}"

    def __repr__(self) -> str:
        return f"Letter({self})"

    @property
    def adjoint(self) -> "Letter":
        return Letter(self.det, self.index, Variant(self.variant).adjoint)


Word = Tuple[Letter, ...]


def g(index: int, variant: Variant = Variant.ID) -> Letter:
    """Process letter, 1-based ``index`` as in the text syntax."""
    if index < 1:
        raise IndexError(f"process indices start at 1, got {index}")
    return Letter(False, index - 1, Variant(variant))


def det(index: int, star: bool = False) -> Letter:
    """Deterministic letter ``a<index>`` (or its adjoint), 1-based."""
    if index < 1:
        raise IndexError(f"deterministic indices start at 1, got {index}")
    return Letter(True, index - 1, Variant.STAR if star else Variant.ID)


def canonicalize(word: Sequence[Letter]) -> Word:
    """Lexicographically minimal cyclic rotation of ``word`` (idempotent)."""
    w = tuple(word)
    if len(w) < 2:
        return w
    return min(w[i:] + w[:i] for i in range(len(w)))


def adjoint_word(word: Sequence[Letter]) -> Word:
    """Word of the adjoint monomial: reversed with every letter starred."""
    return tuple(letter.adjoint for letter in reversed(word))


def word_str(word: Sequence[Letter]) -> str:
    return " ".join(str(letter) for letter in word)
