from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdiv.membership import (QQi, GermTerm, MonomialIdeal, annihilation_rule, annihilation_test, bs_certificate,
                               bs_condition, dbar_derivative, expand_certificate, germ, monomial_pairing,
                               newton_feasible, normalize, random_germ, random_ideal, residue_membership)


def test_gaussian_rationals():
    x = QQi.of((Fraction(1, 2), 1)) * QQi.of(2)
    assert x == QQi(Fraction(1), Fraction(2))
    assert complex(x + QQi.of("1/2")) == 1.5 + 2j
    assert x.to_json() == ["1", "2"]
    assert not QQi()


def test_normalize_merges_and_drops():
    t = normalize([GermTerm(1, (1,), (0,)), GermTerm(-1, (1,), (0,)), GermTerm(2, (0,), (1,))])
    assert t == [GermTerm(2, (0,), (1,))]
    with pytest.raises(ValueError):
        GermTerm(1, (1, 2), (0,))


def test_dbar_derivative_exact():
    g = germ([(3, (1,), (2,))])
    assert dbar_derivative(g, (1,)) == [GermTerm(6, (1,), (1,))]
    assert dbar_derivative(g, (3,)) == []


def test_ideal_validation():
    with pytest.raises(ValueError):
        MonomialIdeal(((1, 0), (2, 0)), 2)
    I = MonomialIdeal.minimal([(1, 0), (2, 0), (0, 3)])
    assert I.generators == ((0, 3), (1, 0)) and I.mu == 2


def test_newton_polyhedron_membership():
    I = MonomialIdeal(((2, 0), (0, 2)), 2)
    assert I.in_newton_polyhedron([1, 1])
    assert not I.in_newton_polyhedron([Fraction(1, 2), 1])
    assert I.in_newton_polyhedron([Fraction(3, 2), Fraction(1, 2)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_newton_feasibility_agrees_with_linear_program(seed):
    from scipy.optimize import linprog
    rng = np.random.default_rng(seed)
    gens = [[Fraction(int(x)) for x in rng.integers(0, 5, 2)] for _ in range(3)]
    p = [Fraction(int(x), 2) for x in rng.integers(0, 9, 2)]
    A = np.array([[float(g[k]) for g in gens] + [1.0 if k == j else 0.0 for j in range(2)] for k in range(2)]
                 + [[1.0] * 3 + [0.0, 0.0]])
    b = np.array([float(x) for x in p] + [1.0])
    lp = linprog(np.zeros(5), A_eq=A, b_eq=b, bounds=[(0, None)] * 5)
    assert newton_feasible(gens, p) == (lp.status == 0)


def test_bs_condition_examples():
    I = MonomialIdeal(((1,),), 1)
    assert bs_condition(germ([(1, (2,), (0,))]), I, 2).passed
    v = bs_condition(germ([(1, (0,), (1,))]), I, 3)
    assert not v.passed and v.exponent == 3 and v.witness["b"] == [1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_certificate_implies_condition(seed):
    rng = np.random.default_rng(seed)
    ideal = random_ideal(rng, 2, 2)
    phi = random_germ(rng, 2)
    r = 1
    cert = bs_certificate(phi, ideal, r)
    if cert.ok:
        assert expand_certificate(cert, ideal) == normalize(phi)
        assert cert.as_dict()["ok"]


def test_certificate_failure_reports_term():
    I = MonomialIdeal(((2,),), 1)
    c = bs_certificate(germ([(1, (1,), (0,))]), I, 1)
    assert not c.ok and c.as_dict()["failed_term"]["a"] == [1]


@pytest.mark.parametrize("a,b,T,s,expected", [
    ((2,), (0,), (1,), 2, True),
    ((1,), (0,), (1,), 2, False),
    ((0,), (1,), (1,), 3, True),
    ((2, 0), (0, 0), (1, 1), 2, False),
    ((2, 0), (0, 1), (1, 1), 2, True),
    ((0, 5), (0, 0), (0, 2), 2, True),
])
def test_annihilation_rule(a, b, T, s, expected):
    assert annihilation_rule(a, b, T, s) is expected


def test_pairing_corroborates_annihilation():
    yes = annihilation_test(GermTerm(1, (0,), (1,)), (1,), 2)
    assert yes.annihilates and abs(yes.pairing) < 1e-6
    no = annihilation_test(GermTerm(1, (1,), (0,)), (1,), 2)
    assert not no.annihilates and abs(no.pairing - 1) < 1e-6
    assert annihilation_test(GermTerm(1, (1, 1), (0, 0)), (1, 1), 1).pairing is None


def test_monomial_pairing_cauchy_value():
    val, err = monomial_pairing(3, 2, 0)
    assert abs(val - 1) < 1e-6 and err < 1e-4


def test_residue_membership_matches_divisibility():
    rng = np.random.default_rng(5)
    for _ in range(30):
        phi = random_germ(rng, 1, max_bar=0)
        r = residue_membership(phi, (1,), 2)
        assert r.consistent
    r = residue_membership(germ([(1, (0,), (1,)), (1, (3,), (0,))]), (1,), 2)
    assert not r.member and r.failing
    with pytest.raises(ValueError):
        residue_membership(germ([(1, (0,), (0,))]), (0,), 1)
