"""Moment (NPA) relaxations of noncommutative polynomial programs.

The order-``k`` relaxation replaces each word ``w`` of degree at most ``2k``
by a moment variable ``y_w``. It requires the moment matrix over the degree-k
basis to be PSD, along with one localising matrix per inequality ``q >= 0``
and the linear rows ``y(nu' q omega) = 0`` for every equality ``q = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .ncpoly import IDENTITY, Monomial, OperatorSymbol, Polynomial, as_polynomial, mono_mul, words_up_to
from .sdp import SdpBlock, SdpInstance, SdpSolution, Status

__all__ = [
    "NcProblem",
    "MomentIndex",
    "OrderTooLowError",
    "enumerate_basis",
    "build_moment_matrix",
    "build_localizing_matrix",
    "build_equality_constraints",
    "assemble",
    "extract_estimates",
    "moment_matrix_values",
    "rank_loop_flag",
]


class OrderTooLowError(ValueError):
    """Raised when a polynomial cannot be represented at the requested order."""


@dataclass
class NcProblem:
    variables: list[OperatorSymbol]
    objective: Polynomial
    inequalities: list[Polynomial] = field(default_factory=list)
    equalities: list[Polynomial] = field(default_factory=list)
    labels: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.objective = as_polynomial(self.objective)
        self.inequalities = [as_polynomial(q) for q in self.inequalities]
        self.equalities = [as_polynomial(q) for q in self.equalities]
        ids = [v.id for v in self.variables]
        if len(set(ids)) != len(ids):
            raise ValueError("operator symbol ids must be unique")
        declared = set(ids)
        for poly in [self.objective, *self.inequalities, *self.equalities]:
            missing = poly.symbol_ids() - declared
            if missing:
                raise ValueError(f"polynomial uses undeclared symbols {sorted(missing)}")
        if self.objective.degree < 1:
            raise ValueError("objective must have degree >= 1")

    @property
    def symbol_labels(self) -> dict[int, str]:
        return {v.id: v.label for v in self.variables}

    def max_degree(self) -> int:
        return max([self.objective.degree] + [q.degree for q in self.inequalities + self.equalities])


class MomentIndex:
    """Dense indexing of the words of degree <= 2k.

    With ``identify_adjoints`` a word and its reversal share one index, which is
    sound for real-coefficient problems and halves the variable count. Without
    it, every word gets its own index. Index 0 is always the identity.
    """

    def __init__(self, symbol_ids: Iterable[int], order: int, identify_adjoints: bool = True):
        if order < 0:
            raise ValueError("order must be nonnegative")
        self.symbol_ids = sorted(set(symbol_ids))
        self.order = order
        self.identify_adjoints = identify_adjoints
        self._index: dict[tuple[int, ...], int] = {}
        self.representatives: list[Monomial] = []
        for mono in words_up_to(self.symbol_ids, 2 * order):
            w = mono.word
            if identify_adjoints and w[::-1] in self._index:
                self._index[w] = self._index[w[::-1]]
                continue
            self._index[w] = len(self.representatives)
            self.representatives.append(mono)

    @property
    def num_vars(self) -> int:
        return len(self.representatives)

    def __len__(self) -> int:
        return self.num_vars

    def __contains__(self, mono: Monomial) -> bool:
        return mono.word in self._index

    def index(self, mono: Monomial) -> int:
        try:
            return self._index[mono.word]
        except KeyError:
            raise KeyError(f"{mono!r} has degree above 2k = {2 * self.order}") from None

    def monomial(self, i: int) -> Monomial:
        return self.representatives[i]

    def linear_form(self, poly: Polynomial, left: Monomial = IDENTITY, right: Monomial = IDENTITY) -> dict[int, float]:
        """Moment form of left' * poly * right: {index: coefficient}."""
        lead = left.adjoint()
        out: dict[int, float] = {}
        for mono, coef in poly.items():
            i = self.index(mono_mul(mono_mul(lead, mono), right))
            out[i] = out.get(i, 0.0) + coef
        return {i: c for i, c in out.items() if c != 0.0}


def enumerate_basis(symbols: Sequence[OperatorSymbol] | Sequence[int], k: int) -> list[Monomial]:
    if k < 0:
        raise ValueError("order must be nonnegative")
    ids = [s.id if isinstance(s, OperatorSymbol) else int(s) for s in symbols]
    return words_up_to(ids, k)


def _merge(a: dict[int, float], b: dict[int, float], wa: float = 0.5, wb: float = 0.5) -> dict[int, float]:
    out: dict[int, float] = {}
    for form, w in ((a, wa), (b, wb)):
        for i, c in form.items():
            out[i] = out.get(i, 0.0) + w * c
    return {i: c for i, c in out.items() if c != 0.0}


def build_moment_matrix(basis: Sequence[Monomial], index: MomentIndex) -> SdpBlock:
    """Symmetrised moment matrix: entry (nu, omega) = (y[nu' omega] + y[omega' nu]) / 2."""
    n = len(basis)
    entries = {}
    for i in range(n):
        for j in range(i, n):
            raw = {index.index(mono_mul(basis[i].adjoint(), basis[j])): 1.0}
            mirror = {index.index(mono_mul(basis[j].adjoint(), basis[i])): 1.0}
            entries[(i, j)] = _merge(raw, mirror)
    return SdpBlock(size=n, entries=entries, label="moment")


def raw_moment_entry(nu: Monomial, omega: Monomial, index: MomentIndex) -> int:
    """Unsymmetrised entry y[nu' omega] of the moment matrix."""
    return index.index(mono_mul(nu.adjoint(), omega))


def _localizing_order(q: Polynomial, k: int) -> int:
    if q.degree > 2 * k:
        raise OrderTooLowError(f"cannot localise degree-{q.degree} polynomial at order {k}")
    return k - math.ceil(q.degree / 2)


def build_localizing_matrix(q: Polynomial, k: int, index: MomentIndex, label: str = "") -> SdpBlock:
    """Symmetrised localising matrix over the basis of degree k - ceil(deg q / 2)."""
    q = as_polynomial(q)
    basis = enumerate_basis(index.symbol_ids, _localizing_order(q, k))
    n = len(basis)
    entries = {}
    for i in range(n):
        for j in range(i, n):
            raw = index.linear_form(q, basis[i], basis[j])
            mirror = index.linear_form(q, basis[j], basis[i])
            form = _merge(raw, mirror)
            if form:
                entries[(i, j)] = form
    return SdpBlock(size=n, entries=entries, label=label or "localizing")


def _row_key(row: dict[int, float]) -> tuple:
    lead = row[min(row)]
    return tuple((i, row[i] / lead) for i in sorted(row))


def build_equality_constraints(q: Polynomial, k: int, index: MomentIndex) -> list[dict[int, float]]:
    """Rows y(nu' q omega) = 0 for all deg(nu) + deg(q) + deg(omega) <= 2k, deduplicated."""
    q = as_polynomial(q)
    if q.degree > 2 * k:
        raise OrderTooLowError(f"equality of degree {q.degree} exceeds 2k = {2 * k}")
    budget = 2 * k - q.degree
    rows, seen = [], set()
    for nu in words_up_to(index.symbol_ids, budget):
        for omega in words_up_to(index.symbol_ids, budget - nu.degree):
            row = index.linear_form(q, nu, omega)
            if not row:
                continue
            key = _row_key(row)
            if key in seen:
                continue
            seen.add(key)
            rows.append(row)
    return rows


def assemble(problem: NcProblem, k: int, identify_adjoints: bool = True) -> SdpInstance:
    """Order-k relaxation as an SdpInstance (minimise c'y)."""
    labels = problem.symbol_labels
    if k < 1:
        raise OrderTooLowError("relaxation order must be at least 1")
    for name, poly in [("objective", problem.objective)] + [
        (f"inequality {i}", q) for i, q in enumerate(problem.inequalities)
    ] + [(f"equality {i}", q) for i, q in enumerate(problem.equalities)]:
        if poly.degree > 2 * k:
            raise OrderTooLowError(
                f"order {k} too low for {name} of degree {poly.degree}: {poly.to_str(labels)}"
            )
    index = MomentIndex([v.id for v in problem.variables], k, identify_adjoints)
    blocks = [build_moment_matrix(enumerate_basis(index.symbol_ids, k), index)]
    ineq_labels = problem.labels.get("inequalities", [])
    for i, q in enumerate(problem.inequalities):
        label = ineq_labels[i] if i < len(ineq_labels) else f"q{i}"
        blocks.append(build_localizing_matrix(q, k, index, label=label))

    c = np.zeros(index.num_vars)
    for i, coef in index.linear_form(problem.objective).items():
        c[i] += coef

    eq_rows: list[dict[int, float]] = [{0: 1.0}]
    eq_rhs: list[float] = [1.0]
    seen = {_row_key({0: 1.0})}
    for q in problem.equalities:
        for row in build_equality_constraints(q, k, index):
            key = _row_key(row)
            if key not in seen:
                seen.add(key)
                eq_rows.append(row)
                eq_rhs.append(0.0)
    return SdpInstance(num_vars=index.num_vars, objective=c, blocks=blocks,
                       eq_rows=eq_rows, eq_rhs=eq_rhs, index=index)


def extract_estimates(solution: SdpSolution, index: MomentIndex,
                      variables: Sequence[OperatorSymbol]) -> dict[OperatorSymbol, float]:
    """Degree-1 moment readout y[X] for each operator symbol."""
    if solution.status is not Status.OPTIMAL:
        raise RuntimeError(f"cannot extract estimates from a {solution.status.value} solution")
    return {v: float(solution.y[index.index(Monomial((v.id,)))]) for v in variables}


def moment_matrix_values(y: np.ndarray, index: MomentIndex, k: int) -> np.ndarray:
    """Numeric symmetrised moment matrix of order k from a moment vector."""
    basis = enumerate_basis(index.symbol_ids, k)
    n = len(basis)
    M = np.empty((n, n))
    for i, j in product(range(n), repeat=2):
        M[i, j] = 0.5 * (y[raw_moment_entry(basis[i], basis[j], index)]
                         + y[raw_moment_entry(basis[j], basis[i], index)])
    return M


def _numerical_rank(M: np.ndarray, tol: float) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def rank_loop_flag(solution: SdpSolution | np.ndarray, index: MomentIndex, k: int,
                   tol: float = 1e-6, shift: int = 1) -> bool:
    """True when rank M_k equals rank M_{k-shift} (shift = max ceil(deg q_i / 2))."""
    y = solution.y if isinstance(solution, SdpSolution) else np.asarray(solution, dtype=float)
    lower = max(k - max(shift, 1), 0)
    return _numerical_rank(moment_matrix_values(y, index, k), tol) == _numerical_rank(
        moment_matrix_values(y, index, lower), tol)
