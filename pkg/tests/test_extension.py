import numpy as np
import pytest

from resdiv import symbolic as sym
from resdiv.extension import (SmoothGerm, almost_holo_finite, almost_holo_series, default_order, extend_vector,
                              kernel_order, phi_field, restriction_error, vanishing_order)
from resdiv.forms import Form
from resdiv.kernels import doubled_base
from resdiv.poly import Poly
from resdiv.symbolic import Var


def germ1():
    return Poly.from_terms(1, [(1, [1], [5]), (0.5, [0], [2])])


def test_default_order_and_kernel_order():
    assert default_order(1) == 6
    assert default_order(2, M=1, k=2) == 13
    assert default_order(1, c_n=0) == 0
    assert kernel_order(1) == 3 and kernel_order(2) == 7


@pytest.mark.parametrize("K", [0, 1, 3, 5])
def test_finite_extension_restricts_exactly(K):
    g = SmoothGerm.from_poly(germ1())
    assert restriction_error(g, almost_holo_finite(g, K)) < 1e-13


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_dbar_vanishes_to_order_K(K):
    # ∂̄φ̃ = O(|ω − ζ̄|^K) along ω = ζ̄ whenever K is below the ζ̄-degree
    g = SmoothGerm.from_poly(germ1())
    d = Form.scalar(2, almost_holo_finite(g, K)).dbar()
    fit = vanishing_order(d, 1, seed=K)
    assert fit.order == pytest.approx(K, abs=1e-3)


def test_full_degree_extension_is_holomorphic():
    g = SmoothGerm.from_poly(germ1())
    tilde = almost_holo_finite(g, 5)
    assert Form.scalar(2, tilde).dbar().is_zero()
    assert vanishing_order(Form.scalar(2, tilde).dbar(), 1).order == np.inf


def test_expression_germ_matches_polynomial_germ():
    p = germ1()
    a = almost_holo_finite(SmoothGerm.from_poly(p), 3)
    b = almost_holo_finite(SmoothGerm.from_expr(1, p.to_expr()), 3)
    rng = np.random.default_rng(0)
    pts = list(0.5 * (rng.normal(size=(2, 30)) + 1j * rng.normal(size=(2, 30))))
    assert np.allclose(sym.evaluate(a, sym.bind(pts)), sym.evaluate(b, sym.bind(pts)), atol=1e-12)


def test_order_limited_germ_rejects_high_order():
    g = SmoothGerm.from_expr(1, sym.zetabar(0), kmax=2)
    with pytest.raises(ValueError):
        almost_holo_finite(g, 3)
    with pytest.raises(ValueError):
        g.dbar_derivative((3,))


def test_series_extension_agrees_near_diagonal():
    g = SmoothGerm.from_poly(germ1())
    s = almost_holo_series(g, 5)
    f = almost_holo_finite(g, 5)
    rng = np.random.default_rng(1)
    zeta = 0.5 * (rng.normal(size=20) + 1j * rng.normal(size=20))
    w = np.conj(zeta) + 0.01 * (rng.normal(size=20) + 1j * rng.normal(size=20))
    b = sym.bind([zeta, w])
    assert np.allclose(sym.evaluate(s, b), sym.evaluate(f, b), atol=1e-12)


def test_phi_field_is_closed_and_reports_boundedness():
    n = 1
    g = SmoothGerm.from_poly(germ1())
    tilde = almost_holo_finite(g, 4)
    pf = phi_field(tilde, n, K=4)
    assert pf.bounded and pf.kernel_order == 3
    rng = np.random.default_rng(2)
    pts = 0.5 * (rng.normal(size=(2, 40)) + 1j * rng.normal(size=(2, 40)))
    res = pf.form.nabla(doubled_base(n)).evaluate(sym.bind(list(pts), [0.1 - 0.2j]))
    assert res.max_abs() < 1e-9
    with pytest.raises(ValueError):
        phi_field(almost_holo_finite(g, 1), n, K=1)
    assert not phi_field(almost_holo_finite(g, 1), n, K=1, require_bounded=False).bounded


def test_vector_extension_places_frames():
    g = SmoothGerm.from_poly(germ1())
    v = extend_vector([g, g], 2, 2, [1, 2])
    assert {f for _, _, f in v.terms} == {1, 2}


def test_vanishing_order_of_known_power():
    # |ω − ζ̄|^3 exactly
    e = sym.power(sym.add(sym.var(Var(1)), sym.neg(sym.zetabar(0))), 3)
    fit = vanishing_order(e, 1)
    assert fit.order == pytest.approx(3, abs=1e-6) and fit.residual < 1e-6
