"""Noncommutative polynomials over Hermitian operator symbols.

Words are tuples of symbol ids. Because every symbol is Hermitian, the
adjoint of a word is just the reversed word, and a word is its own
canonical representative. Monomials order gradedly: first by degree, then
lexicographically by id sequence.
"""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Iterable, Mapping, Sequence

__all__ = [
    "OperatorSymbol",
    "Monomial",
    "Polynomial",
    "IDENTITY",
    "symbols",
    "mono_mul",
    "adjoint",
    "as_polynomial",
]


@dataclass(frozen=True)
class OperatorSymbol:
    id: int
    label: str
    hermitian: bool = True

    def __post_init__(self):
        if not self.label:
            raise ValueError("operator symbol label must be nonempty")
        if not self.hermitian:
            raise ValueError("only Hermitian operator symbols are supported")

    # arithmetic promotes to Polynomial
    def __add__(self, other):
        return as_polynomial(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return as_polynomial(self) - other

    def __rsub__(self, other):
        return as_polynomial(other) - as_polynomial(self)

    def __mul__(self, other):
        return as_polynomial(self) * other

    def __rmul__(self, other):
        return as_polynomial(other) * as_polynomial(self)

    def __neg__(self):
        return -as_polynomial(self)

    def __pow__(self, n):
        return as_polynomial(self) ** n


@dataclass(frozen=True)
class Monomial:
    """A word over symbol ids; the empty word is the identity."""

    word: tuple[int, ...] = ()

    @property
    def degree(self) -> int:
        return len(self.word)

    @property
    def key(self) -> tuple[int, tuple[int, ...]]:
        return (len(self.word), self.word)

    def __lt__(self, other: "Monomial") -> bool:
        return self.key < other.key

    def __le__(self, other: "Monomial") -> bool:
        return self.key <= other.key

    def __gt__(self, other: "Monomial") -> bool:
        return self.key > other.key

    def __ge__(self, other: "Monomial") -> bool:
        return self.key >= other.key

    def __mul__(self, other: "Monomial") -> "Monomial":
        return mono_mul(self, other)

    def adjoint(self) -> "Monomial":
        return Monomial(self.word[::-1])

    def is_identity(self) -> bool:
        return not self.word

    def to_str(self, labels: Mapping[int, str] | None = None) -> str:
        if not self.word:
            return "1"
        names = [labels[i] if labels else f"X{i}" for i in self.word]
        # compress runs into powers: x*x*y -> x^2*y
        parts, prev, run = [], None, 0
        for name in names + [None]:
            if name == prev:
                run += 1
                continue
            if prev is not None:
                parts.append(prev if run == 1 else f"{prev}^{run}")
            prev, run = name, 1
        return "*".join(parts)

    def __repr__(self) -> str:
        return f"Monomial({self.to_str()})"


IDENTITY = Monomial(())


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return Monomial(a.word + b.word)


def adjoint(m):
    """Adjoint of a monomial or polynomial (word reversal for Hermitian letters)."""
    if isinstance(m, Monomial):
        return m.adjoint()
    if isinstance(m, Polynomial):
        return m.adjoint()
    raise TypeError(f"cannot take adjoint of {type(m).__name__}")


class Polynomial:
    """Immutable real-coefficient polynomial; zero coefficients are never stored."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        clean: dict[Monomial, float] = {}
        for mono, coef in (terms or {}).items():
            if not isinstance(mono, Monomial):
                raise TypeError("polynomial keys must be Monomial")
            coef = float(coef)
            if coef != 0.0:
                clean[mono] = clean.get(mono, 0.0) + coef
        self._terms = {m: c for m, c in sorted(clean.items(), key=lambda kv: kv[0].key) if c != 0.0}
        self._hash = None

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls({IDENTITY: value})

    @classmethod
    def from_symbol(cls, sym: OperatorSymbol) -> "Polynomial":
        return cls({Monomial((sym.id,)): 1.0})

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def monomials(self) -> list[Monomial]:
        return list(self._terms)

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(mono, 0.0)

    @property
    def degree(self) -> int:
        # zero polynomial reports degree 0
        return max((m.degree for m in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def symbol_ids(self) -> set[int]:
        return {i for m in self._terms for i in m.word}

    def adjoint(self) -> "Polynomial":
        return Polynomial({m.adjoint(): c for m, c in self._terms.items()})

    def is_hermitian(self, tol: float = 0.0) -> bool:
        other = self.adjoint()
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= tol for k in keys)

    def __add__(self, other) -> "Polynomial":
        other = as_polynomial(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return self.scale(-1.0)

    def __sub__(self, other) -> "Polynomial":
        return self + (-as_polynomial(other))

    def __rsub__(self, other) -> "Polynomial":
        return as_polynomial(other) - self

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial({m: c * factor for m, c in self._terms.items()})

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, Real):
            return self.scale(float(other))
        other = as_polynomial(other)
        out: dict[Monomial, float] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                m = mono_mul(ma, mb)
                out[m] = out.get(m, 0.0) + ca * cb
        return Polynomial(out)

    def __rmul__(self, other) -> "Polynomial":
        if isinstance(other, Real):
            return self.scale(float(other))
        return as_polynomial(other) * self

    def __pow__(self, n: int) -> "Polynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        out = Polynomial.constant(1.0)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        try:
            other = as_polynomial(other)
        except TypeError:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def __len__(self) -> int:
        return len(self._terms)

    def to_str(self, labels: Mapping[int, str] | None = None) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m, c in self._terms.items():
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if m.is_identity():
                body = f"{mag:g}"
            elif mag == 1.0:
                body = m.to_str(labels)
            else:
                body = f"{mag:g}*{m.to_str(labels)}"
            parts.append(f"{sign} {body}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]

    def __repr__(self) -> str:
        return f"Polynomial({self.to_str()})"


def as_polynomial(value) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    if isinstance(value, OperatorSymbol):
        return Polynomial.from_symbol(value)
    if isinstance(value, Monomial):
        return Polynomial({value: 1.0})
    if isinstance(value, Real):
        return Polynomial.constant(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Polynomial")


def symbols(labels: str | Sequence[str], start: int = 0) -> list[OperatorSymbol]:
    """Create Hermitian symbols with consecutive ids, e.g. ``x, y = symbols("x y")``."""
    if isinstance(labels, str):
        labels = labels.replace(",", " ").split()
    out = [OperatorSymbol(start + i, lab) for i, lab in enumerate(labels)]
    if len({s.label for s in out}) != len(out):
        raise ValueError("duplicate symbol labels")
    return out


def words_up_to(ids: Iterable[int], degree: int) -> list[Monomial]:
    """All words of length <= degree in graded lexicographic order."""
    from itertools import product

    ids = sorted(set(ids))
    out = [IDENTITY]
    for d in range(1, degree + 1):
        out.extend(Monomial(w) for w in product(ids, repeat=d))
    return out
