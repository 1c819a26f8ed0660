import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdiv import symbolic as sym
from resdiv.koszul import (NonConvergentLadder, cauchy_test_form, default_ladder, extrapolate, interior_sign_matrix,
                           koszul_complex, power_residue_shape, r_form, residue_pairing, sigma, u_form)
from resdiv.poly import Poly
from resdiv.quadrature import Domain, Rule, contour_integral


def gens():
    z1, z2 = Poly.coordinate(2, 0), Poly.coordinate(2, 1)
    return [z1 * z1, z2 + z1 * z2 * 0.5j, z1 * z2]


def points(n, k, seed):
    rng = np.random.default_rng(seed)
    return 0.7 * (rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k)))


def test_complex_ranks_and_exactness():
    cx = koszul_complex(gens())
    assert cx.ranks == (1, 3, 3, 1) and cx.length == 3
    assert cx.check() < 1e-12


def test_koszul_rejects_bad_input():
    with pytest.raises(ValueError):
        koszul_complex([])
    with pytest.raises(ValueError):
        koszul_complex([Poly.monomial(1, [0], [1])])


def test_interior_signs():
    cols = interior_sign_matrix(2, 2)
    assert cols == [[(1, 0, 1), (0, 1, -1)]]


def test_sigma_inverts_contraction():
    a = gens()
    s = sigma(a)
    ex = [p.to_expr() for p in a]
    val = s.frame_interior(ex).evaluate(sym.bind(list(points(2, 40, 1))))
    assert np.allclose(val.scalar_part(), 1, atol=1e-12)


def test_regularized_current_vanishes_off_zero_set_at_eps_zero():
    a = gens()
    pts = points(2, 40, 2)
    r0 = r_form(a, 0.0).evaluate(sym.bind(list(pts)))
    assert r0.max_abs() < 1e-9
    r1 = r_form(a, 1e-2).evaluate(sym.bind(list(pts)))
    assert r1.max_abs() > 1e-6


def test_u_components_have_expected_bidegrees():
    u = u_form([Poly.coordinate(2, 0), Poly.coordinate(2, 1)], 0.1)
    for (h, a, f) in u.terms:
        assert h == 0 and bin(a).count("1") == bin(f).count("1") - 1


def test_ladder_scales_with_power():
    assert default_ladder(1) == (1e-2, 2.5e-3, 6.25e-4, 1.5625e-4)
    assert default_ladder(2, 0.5)[0] == pytest.approx(1e-2 * 0.5**4)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 2.5), st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.floats(-3, 3).filter(lambda c: abs(c) > 0.1))
def test_extrapolation_recovers_power_law(alpha, p0, c):
    eps = np.array(default_ladder(1))
    ex = extrapolate(eps, p0 + c * eps**alpha)
    assert abs(ex.limit - p0) < 1e-6 * max(1, abs(p0))
    assert ex.converged


def test_extrapolation_flags_stalled_ladder():
    eps = default_ladder(1)
    ex = extrapolate(eps, [1.0, 2.0, 3.0, 4.0])
    assert not ex.converged and ex.note
    with pytest.raises(NonConvergentLadder):
        raise NonConvergentLadder(ex)


def test_extrapolation_of_constant_sequence():
    ex = extrapolate(default_ladder(1), [2j] * 4)
    assert ex.limit == 2j and ex.error == 0.0 and ex.alpha == float("inf")


def test_power_residue_shape_validation():
    with pytest.raises(ValueError):
        power_residue_shape(Poly.coordinate(1, 0) + Poly.const(1, 1), 1)
    with pytest.raises(ValueError):
        power_residue_shape(Poly.coordinate(1, 0), 0)


@pytest.mark.parametrize("t", [1, 2, 3])
def test_residue_pairing_matches_cauchy_value(t):
    xi = Poly.from_terms(1, [(1 + 0.5j, [0], [0]), (-2, [1], [0]), (0.7j, [2], [0]), (0.3, [3], [0])])
    exact = contour_integral(lambda p: xi(p[0]) * p[0] ** (-t), [0.0], [0.5], 128) / (2j * np.pi)
    r_in, r_out = 0.3, 0.8
    rule = Rule(radial_nodes=24, angular_nodes=48, grading=12, breaks=(r_in, r_out), estimate_error=False)
    res = residue_pairing(power_residue_shape(Poly.coordinate(1, 0), t), cauchy_test_form(xi, r_in, r_out),
                          Domain("ball", 1, (r_out + 0.1,)), rule, default_ladder(t, r_in))
    assert abs(res.value - exact) / max(abs(exact), 1) < 1e-6
