import itertools

import pytest
from hypothesis import given, settings, strategies as st

from fairlds.ncpoly import IDENTITY, Monomial, Polynomial, adjoint, as_polynomial, mono_mul, symbols

x, y, z = symbols("x y z")
X, Y = Monomial((0,)), Monomial((1,))

words = st.lists(st.integers(0, 3), max_size=6).map(lambda w: Monomial(tuple(w)))


def test_identity_times_x():
    assert mono_mul(IDENTITY, X) == X


def test_concatenation_degrees():
    xy = mono_mul(X, Y)
    assert xy.word == (0, 1) and xy.degree == 2
    xyyx = mono_mul(xy, mono_mul(Y, X))
    assert xyyx.word == (0, 1, 1, 0) and xyyx.degree == 4


def test_adjoint_reverses_words():
    assert adjoint(Monomial((0, 1))) == Monomial((1, 0))
    assert adjoint(X) == X
    assert adjoint(IDENTITY) == IDENTITY


@given(words)
def test_adjoint_involution(w):
    assert adjoint(adjoint(w)) == w


@given(words, words, words)
def test_mono_mul_associative_with_unit(a, b, c):
    assert mono_mul(mono_mul(a, b), c) == mono_mul(a, mono_mul(b, c))
    assert mono_mul(IDENTITY, a) == a == mono_mul(a, IDENTITY)
    assert mono_mul(a, b).degree == a.degree + b.degree


@given(words, words)
def test_equal_words_iff_equal_keys(a, b):
    assert (a == b) == (a.key == b.key)


def test_additive_inverse_is_zero():
    p = x + y
    q = p + (-1) * p
    assert q.is_zero() and len(q) == 0


def test_square_keeps_cross_terms_distinct():
    p = (x + y) * (x + y)
    assert len(p) == 4
    for w in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert p.coefficient(Monomial(w)) == 1.0


def test_scale_by_zero_drops_terms():
    p = (x * x).scale(0)
    assert p.is_zero() and dict(p.terms) == {}


def test_polynomial_adjoint_termwise():
    p = 2 * x * y + 3 * z
    assert p.adjoint() == 2 * y * x + 3 * z
    assert p.adjoint().adjoint() == p
    assert (x * y + y * x).is_hermitian()
    assert not (x * y).is_hermitian()


@given(st.lists(st.tuples(words, st.integers(-3, 3)), max_size=4),
       st.lists(st.tuples(words, st.integers(-3, 3)), max_size=4))
@settings(max_examples=60)
def test_product_degree_bound(pa, pb):
    p = Polynomial({m: float(c) for m, c in pa if c})
    q = Polynomial({m: float(c) for m, c in pb if c})
    r = p * q
    if not p.is_zero() and not q.is_zero():
        # leading words of distinct degree-max terms never cancel with words unique per pair
        assert r.degree <= p.degree + q.degree
    # distributivity against an explicit double loop
    expect = {}
    for ma, ca in p.items():
        for mb, cb in q.items():
            w = Monomial(ma.word + mb.word)
            expect[w] = expect.get(w, 0.0) + ca * cb
    assert r == Polynomial({w: c for w, c in expect.items() if c != 0.0})


def test_product_degree_equality_without_cancellation():
    p = x * x + y
    q = y * z - 1
    assert (p * q).degree == 4


def test_ring_axioms_small():
    polys = [x + 1, 2 * y - x * z, z * z, as_polynomial(3.0)]
    for a, b, c in itertools.product(polys, repeat=3):
        assert (a + b) + c == a + (b + c)
        assert a * (b + c) == a * b + a * c
        assert (a * b) * c == a * (b * c)


def test_symbols_reject_duplicates():
    with pytest.raises(ValueError):
        symbols("a a")


def test_to_str_uses_labels():
    p = x * x * y - 2
    assert p.to_str({0: "x", 1: "y"}) in ("x^2*y - 2", "-2 + x^2*y")
