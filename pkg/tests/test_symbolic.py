import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdiv import symbolic as sym
from resdiv.symbolic import Var


def rand_points(n, k, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))


def test_abs_square_is_real():
    z = sym.zeta(0)
    assert sym.evaluate(z * sym.zetabar(0), sym.bind([3 + 4j])) == pytest.approx(25)


def test_reciprocal_at_pole_raises():
    e = sym.recip(sym.add(sym.zeta(0), sym.neg(sym.zpar(0))))
    with pytest.raises(sym.DivisionByZeroError, match="division by zero"):
        sym.evaluate(e, sym.bind([0.5], [0.5]))


def test_unassigned_variable():
    with pytest.raises(sym.UnassignedVariableError):
        sym.evaluate(sym.zeta(1), sym.bind([1.0]))


def test_cutoff_midway_matches_direct_formula():
    r1, r2 = 0.7, 0.95
    atom = sym.cutoff_atom(r1**2, r2**2)
    t = 0.5 * (r1**2 + r2**2)
    got = sym.evaluate(sym.apply(atom, sym.abs2(sym.zeta(0))), sym.bind([np.sqrt(t)]))
    s = (r2**2 - t) / (r2**2 - r1**2)
    E = lambda x: np.exp(-1 / x)
    assert 0 < got < 1
    assert got == pytest.approx(E(s) / (E(s) + E(1 - s)), rel=1e-14)


def test_cutoff_is_exactly_flat_outside_annulus():
    atom = sym.cutoff_atom(0.49, 0.9025)
    vals = atom.func(np.array([0.0, 0.3, 0.49, 0.9025, 1.5]))
    assert list(vals) == [1.0, 1.0, 1.0, 0.0, 0.0]
    d = atom.derivative()
    assert list(d.func(np.array([0.1, 0.95]))) == [0.0, 0.0]


@pytest.mark.parametrize("make", [lambda: sym.cutoff_atom(0.2, 0.8), lambda: sym.power_atom(-1 / 6)])
def test_atom_derivative_matches_finite_difference(make):
    atom = make()
    rng = np.random.default_rng(3)
    t = rng.uniform(0.25, 0.75, 100)
    h = 1e-6
    fd = (atom.func(t + h) - atom.func(t - h)) / (2 * h)
    d = atom.derivative().func(t)
    assert np.max(np.abs(fd - d) / np.maximum(np.abs(d), 1e-3)) < 1e-6


def test_second_derivative_of_cutoff():
    atom = sym.cutoff_atom(0.2, 0.8)
    t = np.linspace(0.25, 0.75, 50)
    h = 1e-5
    d1, d2 = atom.derivative(), atom.derivative().derivative()
    fd = (d1.func(t + h) - d1.func(t - h)) / (2 * h)
    assert np.max(np.abs(fd - d2.func(t))) < 1e-4 * np.max(np.abs(d2.func(t)))


def test_power_atom_rejects_nonpositive():
    with pytest.raises(sym.DivisionByZeroError):
        sym.power_atom(-0.5).func(np.array([0.0]))


def test_partials_basic():
    z = sym.zeta(0)
    sq = z * z
    p = sym.bind([1.5 - 0.5j])
    assert sym.evaluate(sym.partial(sq, Var(0)), p) == pytest.approx(2 * (1.5 - 0.5j))
    assert sym.partial(sq, Var(0, True)).is_zero()


def test_partial_of_inverse_modulus_square():
    e = sym.recip(sym.abs2(sym.zeta(0)))
    d = sym.partial(e, Var(0, True))
    pts = rand_points(1, 20, 1)[0]
    got = sym.evaluate(d, sym.bind([pts]))
    assert np.allclose(got, -pts / np.abs(pts) ** 4, rtol=1e-13)
    # Wirtinger finite difference: d/dz̄ = (d/dx + i d/dy)/2
    h = 1e-6
    f = lambda w: 1 / np.abs(w) ** 2
    fd = ((f(pts + h) - f(pts - h)) + 1j * (f(pts + 1j * h) - f(pts - 1j * h))) / (4 * h)
    assert np.allclose(got, fd, rtol=1e-6)


def test_simplify_examples():
    z = sym.zeta(0)
    assert (0 * sym.recip(z)).is_zero()
    five = sym.mul(sym.const(2 + 3), z)
    assert sym.evaluate(five, sym.bind([1j])) == pytest.approx(5j)
    one = sym.simplify(z * sym.recip(z))
    assert sym.evaluate(one, sym.bind([0.3 + 0.2j])) == pytest.approx(1)


def test_hash_consing_shares_structure():
    a = sym.add(sym.zeta(0), sym.zetabar(1))
    b = sym.add(sym.zeta(0), sym.zetabar(1))
    assert a is b
    assert a == b and hash(a) == hash(b)


def test_substitute_and_free_vars():
    e = sym.mul(sym.zeta(0), sym.zpar(0))
    assert sym.free_vars(e) == {Var(0), Var(0, False, True)}
    s = sym.substitute(e, {Var(0): sym.const(2)})
    assert sym.evaluate(s, sym.bind([], [3])) == pytest.approx(6)


def test_vectorized_evaluation_and_cache():
    e = sym.norm2([sym.zeta(0), sym.zeta(1)])
    pts = rand_points(2, 7)
    cache = {}
    v = sym.evaluate(e, sym.bind(list(pts)), cache)
    assert np.allclose(v, np.sum(np.abs(pts) ** 2, axis=0))
    assert cache


# random expression trees for property tests
_leaves = st.sampled_from([sym.zeta(0), sym.zetabar(0), sym.zeta(1), sym.zetabar(1), sym.const(1.5 - 2j), sym.const(0.25)])


def _expr_strategy():
    return st.recursive(
        _leaves,
        lambda kids: st.one_of(
            st.tuples(kids, kids).map(lambda t: sym.add(*t)),
            st.tuples(kids, kids).map(lambda t: sym.mul(*t)),
            kids.map(sym.conj),
            st.tuples(kids, st.integers(1, 3)).map(lambda t: sym.power(*t)),
            kids.map(lambda e: sym.recip(sym.add(sym.const(3.0), sym.abs2(e)))),
        ),
        max_leaves=6,
    )


PTS = rand_points(2, 100, 11) * 0.5
BIND = sym.bind(list(PTS))


def _ev(e):
    return np.broadcast_to(sym.evaluate(e, BIND), (100,))


def _close(a, b, tol=1e-10):
    return np.max(np.abs(a - b)) <= tol * max(1.0, np.max(np.abs(a)), np.max(np.abs(b)))


@settings(max_examples=60, deadline=None)
@given(_expr_strategy())
def test_conjugation_is_an_involution(e):
    assert _close(_ev(sym.simplify(sym.conj(sym.conj(e)))), _ev(e))
    assert _close(_ev(sym.conj(e)), np.conj(_ev(e)))


@settings(max_examples=60, deadline=None)
@given(_expr_strategy(), _expr_strategy(), st.sampled_from([Var(0), Var(1, True)]))
def test_product_rule(a, b, v):
    lhs = _ev(sym.partial(sym.mul(a, b), v))
    rhs = _ev(sym.add(sym.mul(sym.partial(a, v), b), sym.mul(a, sym.partial(b, v))))
    assert _close(lhs, rhs)


@settings(max_examples=60, deadline=None)
@given(_expr_strategy(), _expr_strategy(), st.sampled_from([Var(0), Var(0, True), Var(1)]))
def test_derivative_linearity(a, b, v):
    lhs = _ev(sym.partial(sym.add(a, sym.mul(sym.const(2j), b)), v))
    rhs = _ev(sym.partial(a, v)) + 2j * _ev(sym.partial(b, v))
    assert _close(lhs, rhs)


@settings(max_examples=60, deadline=None)
@given(_expr_strategy())
def test_mixed_wirtinger_partials_commute(e):
    ab = sym.partial(sym.partial(e, Var(0)), Var(1, True))
    ba = sym.partial(sym.partial(e, Var(1, True)), Var(0))
    assert _close(_ev(ab), _ev(ba))


@settings(max_examples=40, deadline=None)
@given(_expr_strategy())
def test_derivative_matches_finite_difference(e):
    # ∂/∂ζ₀ from real and imaginary directional differences
    h = 1e-6
    def at(dz):
        p = PTS.copy()
        p[0] = p[0] + dz
        return np.broadcast_to(sym.evaluate(e, sym.bind(list(p))), (100,))
    fd = ((at(h) - at(-h)) - 1j * (at(1j * h) - at(-1j * h))) / (4 * h)
    d = _ev(sym.partial(e, Var(0)))
    assert np.max(np.abs(fd - d)) <= 1e-5 * max(1.0, np.max(np.abs(d)))
