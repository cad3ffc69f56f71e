import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from roughvol.errors import PreconditionError
from roughvol.volatility import Exponential, Linear
from roughvol.words import (LENGTH, Word, closed_form_Cw, cw_comparison, enumerate_words,
                            expand_word, expansion_json, is_trivial)

H_TEST = 0.3


def nontrivial_words(max_len):
    return [w.letters for N in range(2, max_len + 1) for w in enumerate_words(N) if not is_trivial(w)]


def test_enumeration_examples():
    assert [w.letters for w in enumerate_words(3)] == ["III", "IJ", "JI"]
    four = enumerate_words(4)
    assert len(four) == 5
    assert [w.letters for w in four if not is_trivial(w)] == ["IIJ", "JJ"]
    assert [w.letters for w in enumerate_words(1)] == ["I"]
    assert is_trivial("I")


def test_counts_are_fibonacci():
    counts = [len(enumerate_words(N)) for N in range(1, 13)]
    assert counts[:2] == [1, 2]
    for a, b, c in zip(counts, counts[1:], counts[2:]):
        assert c == a + b
    assert all(c < 2 ** N for N, c in enumerate(counts, start=1))
    assert counts[-1] == 233


def test_enumeration_guards():
    with pytest.raises(PreconditionError):
        enumerate_words(0)
    with pytest.raises(PreconditionError):
        enumerate_words(13)
    with pytest.raises(PreconditionError):
        Word("IK")


@pytest.mark.parametrize("w,expected", [("III", True), ("IJ", False), ("JI", True), ("J", False)])
def test_is_trivial(w, expected):
    assert is_trivial(w) is expected


def test_expand_IJ():
    (t,) = expand_word("IJ", rho=0.4)
    assert t.coefficient == pytest.approx(6 * 0.4)
    # f f'(x_1) f(x_2) K(t_1, t_2)
    assert t.orders == ((0, 1), (0,))
    assert t.kernel_pattern() == ((1, 2),)


def test_expand_JJ():
    (t,) = expand_word("JJ")
    assert t.coefficient == 6
    assert t.orders == ((0, 0), (0, 0))
    assert t.kernel_pattern() == ()


def test_expand_IIJ():
    terms = expand_word("IIJ", rho=0.5)
    assert len(terms) == 3
    assert all(t.coefficient == pytest.approx(24 * 0.25) for t in terms)
    patterns = sorted(t.kernel_pattern() for t in terms)
    assert patterns == [((1, 2), (1, 3)), ((1, 2), (1, 3)), ((1, 2), (2, 3))]


def test_linear_f_drops_second_derivatives():
    terms = expand_word("IIJ", f=Linear(1.0))
    assert len(terms) == 2
    assert all(max(d for o in t.orders for d in o) <= 1 for t in terms)


def test_trivial_word_rejected():
    with pytest.raises(PreconditionError):
        expand_word("JI")


def test_derivative_order_overflow():
    with pytest.raises(PreconditionError):
        expand_word("IIJ", f=Exponential(1.0, 1.0, max_derivative_order=1))


@pytest.mark.parametrize("w", nontrivial_words(8))
def test_structure_invariants(w):
    word = Word(w)
    for t in expand_word(w, rho=1.0):
        assert t.rho_power == 2 * word.size - word.length
        assert t.m == word.size
        for j, a in enumerate(t.edges):
            assert a < j + 1
        # letter J at position p (from the left) creates variable size - p with no kernel
        for p, letter in enumerate(w):
            if letter == "J":
                assert t.edges[word.size - 1 - p] == 0
        assert sum(len(o) for o in t.orders) == w.count("I") + 2 * w.count("J")


@pytest.mark.parametrize("w", nontrivial_words(8))
def test_rho_zero_filter(w):
    terms = expand_word(w, rho=0.0)
    if set(w) == {"J"}:
        (t,) = terms
        m = len(w)
        assert t.coefficient == math.factorial(2 * m) / 2 ** m
    else:
        assert all(t.coefficient == 0.0 for t in terms)


@given(st.floats(-1, 1), st.sampled_from(nontrivial_words(6)))
def test_coefficient_is_monomial_in_rho(rho, w):
    base = expand_word(w, rho=1.0)
    scaled = expand_word(w, rho=rho)
    k = 2 * len(w) - sum(LENGTH[c] for c in w)
    for a, b in zip(base, scaled):
        assert b.coefficient == pytest.approx(a.coefficient * rho ** k, abs=1e-12)


def test_closed_form_discrepancy_is_reported():
    assert closed_form_Cw("JJ", 1.0) == 96
    assert closed_form_Cw("IJ", 1.0) == 12
    assert closed_form_Cw("IIJ", 1.0) == 48
    assert cw_comparison("JJ") == (96.0, 6.0)
    assert cw_comparison("IJ") == (12.0, 6.0)
    assert cw_comparison("IIJ") == (48.0, 72.0)


def test_json_dump_is_deterministic():
    a = expansion_json("IIJ", rho=0.7)
    assert a == expansion_json("IIJ", rho=0.7)
    d = json.loads(a)
    assert d["word"] == "IIJ" and len(d["terms"]) == 3
    assert set(d["terms"][0]) == {"coefficient", "base", "rho_power", "psi", "alpha"}


def test_discrete_flag_uses_frozen_kernel():
    (t,) = expand_word("IJ", discrete=True)
    (c,) = expand_word("IJ")
    x, times = [0.4, -0.2], [0.95, 0.92]
    f = Linear(1.0)
    assert t.evaluate(f, x, times, 0.3, n=10) == 0.0
    assert c.evaluate(f, x, times, 0.3) != 0.0


# ---------------------------------------------------------------------------
# brute-force operator application with sympy

fsym = sp.Function("f")
Ksym = sp.Function("K")


def brute_force(word, rho):
    """Apply I^N F = rho N f(y) sum_j dF/dx_j K(t_j, s) and J^N F = N(N-1)/2 f(y)^2 F right to left."""
    xs, ts = [], []
    F = sp.Integer(1)
    N = sum(LENGTH[c] for c in word)
    for k, letter in enumerate(reversed(word), start=1):
        y, s = sp.symbols(f"y{k} s{k}")
        if letter == "J":
            F = sp.Rational(N * (N - 1), 2) * fsym(y) ** 2 * F
        else:
            F = rho * N * fsym(y) * sum((sp.diff(F, xj) * Ksym(tj, s) for xj, tj in zip(xs, ts)),
                                        sp.Integer(0))
        xs.append(y)
        ts.append(s)
        N -= LENGTH[letter]
    return sp.expand(F), xs, ts


class SmoothF:
    """f(x) = exp(x / 3) + cos(x) + 2 with sympy-derived derivatives."""

    max_derivative_order = 12

    def __init__(self):
        x = sp.symbols("x")
        expr = sp.exp(x / 3) + sp.cos(x) + 2
        self.expr = sp.Lambda(x, expr)
        self._d = [sp.lambdify(x, sp.diff(expr, x, d), "numpy") for d in range(8)]

    def derivative(self, d, x):
        return self._d[d](np.asarray(x, dtype=float)) + 0 * np.asarray(x, dtype=float)

    def vanishes(self, d):
        return False


@pytest.mark.parametrize("w", nontrivial_words(6))
def test_operator_recursion_matches_brute_force(w):
    expr, xs, ts = brute_force(w, sp.Integer(1))
    coefs = [abs(float(term.as_coeff_Mul()[0])) for term in sp.Add.make_args(expr)]
    ours = expand_word(w, rho=1.0)
    assert sum(coefs) == pytest.approx(sum(abs(t.coefficient) for t in ours), rel=1e-9)
    assert len(coefs) == len(ours)

    f = SmoothF()
    kern = sp.Lambda(sp.symbols("a b"), (sp.Symbol("a") - sp.Symbol("b")) ** sp.Rational(H_TEST - 0.5).limit_denominator(100))
    numeric = expr.replace(fsym, f.expr).replace(Ksym, kern).doit()
    fn = sp.lambdify(xs + ts, numeric, "numpy")
    rng = np.random.default_rng(len(w))
    for _ in range(3):
        x = rng.normal(size=len(xs))
        t = np.sort(rng.uniform(0.05, 1.0, size=len(ts)))[::-1]
        ref = float(fn(*x, *t))
        got = sum(term.evaluate(f, x, t, H_TEST) for term in expand_word(w, f=f, rho=1.0))
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)
