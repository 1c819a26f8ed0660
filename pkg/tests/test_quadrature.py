import numpy as np
import pytest

from resdiv import symbolic as sym
from resdiv.forms import Form
from resdiv.kernels import doubled_bm
from resdiv.quadrature import (Domain, Patch, QuadratureAbort, Rule, contour_integral, integrate, integrate_form,
                               nodes, polar_patch, set_debug_nodes)


def test_disc_area():
    r = integrate(lambda p: np.ones(p.shape[1]), Domain("ball", 1), Rule(radial_nodes=8, angular_nodes=8))
    assert r.value == pytest.approx(np.pi, rel=1e-10)


def test_gaussian_area_form():
    g = sym.apply(sym.register_atom(sym.Atom("e^-t", lambda t: np.exp(-np.asarray(t, float)), None, True)),
                  sym.abs2(sym.zeta(0)))
    w = Form.dz(1, 0).wedge(Form.dzbar(1, 0)).scale(sym.mul(sym.const(0.5j), g))
    r = integrate_form(w, Domain("ball", 1), Rule(radial_nodes=16, angular_nodes=16))
    assert r.value == pytest.approx(np.pi * (1 - np.exp(-1)), rel=1e-12)


def test_patched_cauchy_kernel_matches_contour_oracle():
    z = 0.3 + 0.2j
    # Green's formula: ∫_D dA/(ζ−z) = (∮ ζ̄/(ζ−z) dζ − 2πi z̄)/(2i)
    oracle = (contour_integral(lambda p: np.conj(p[0]) / (p[0] - z), [0.0], [1.0], 256) - 2j * np.pi * np.conj(z)) / 2j
    assert oracle == pytest.approx(-np.pi * np.conj(z), abs=1e-12)
    # the patch annulus is not concentric with the disc, so angular resolution dominates
    rule = Rule(radial_nodes=48, angular_nodes=256, breaks=(0.2, 0.36, 0.52), patch=Patch((z,), 0.15),
                estimate_error=False)
    r = integrate(lambda p: 1 / (p[0] - z), Domain("ball", 1), rule)
    assert r.value == pytest.approx(oracle, abs=1e-6)


def test_patch_requires_positive_radius():
    with pytest.raises(ValueError):
        Patch((0.0,), 0.0)
    with pytest.raises(ValueError):
        polar_patch([0.0], 0.0, Rule())


def test_patch_nodes_see_bounded_doubled_kernel():
    z = 0.2 + 0.1j
    base = [z, np.conj(z)]
    pts, w = polar_patch(base, 0.05, Rule(radial_nodes=8, angular_nodes=8, polar_nodes=8))
    v = doubled_bm(1).evaluate(sym.bind(list(pts), [z]))
    # the r^{3} in the weights absorbs the |x|^{-3} singularity
    for c in v.terms.values():
        assert np.all(np.isfinite(c))
        assert np.max(np.abs(c * w)) < 1.0


def test_singular_node_aborts():
    pole = sym.recip(sym.add(sym.zeta(0), sym.const(-1.0)))
    with pytest.raises(QuadratureAbort, match="division by zero") as info:
        integrate(lambda p: sym.evaluate(pole, sym.bind(list(p))), Domain("circle-product", 1, (1.0,)),
                  Rule(angular_nodes=4, estimate_error=False))
    assert info.value.node[0] == pytest.approx(1.0)


def test_threads_do_not_change_result():
    f = lambda p: np.exp(p[0] * np.conj(p[1])) / (1 + np.abs(p[0]) ** 2)
    dom = Domain("ball", 2)
    a = integrate(f, dom, Rule(radial_nodes=12, polar_nodes=8, angular_nodes=8, chunk=100, threads=1)).value
    b = integrate(f, dom, Rule(radial_nodes=12, polar_nodes=8, angular_nodes=8, chunk=100, threads=4)).value
    assert a == b


def test_refinement_improves_accuracy():
    f = lambda p: np.exp(-np.abs(p[0]) ** 2) * (1 + p[0] * np.conj(p[0]) ** 2)
    exact = np.pi * (1 - np.exp(-1))
    e16 = abs(integrate(f, Domain("ball", 1), Rule(radial_nodes=4, angular_nodes=16)).value - exact)
    e32 = abs(integrate(f, Domain("ball", 1), Rule(radial_nodes=8, angular_nodes=32)).value - exact)
    assert e32 <= max(e16 / 10, 1e-14)


def test_linearity():
    f = lambda p: np.cos(p[0].real) * p[0]
    g = lambda p: np.abs(p[0]) ** 3
    dom, rule = Domain("ball", 1, (0.8,)), Rule(radial_nodes=16, angular_nodes=16)
    lhs = integrate(lambda p: 2 * f(p) - 3j * g(p), dom, rule).value
    rhs = 2 * integrate(f, dom, rule).value - 3j * integrate(g, dom, rule).value
    assert abs(lhs - rhs) < 1e-12


def test_qmc_volume_of_four_ball():
    r = integrate(lambda p: np.ones(p.shape[1]), Domain("ball", 4), Rule(scheme="qmc", qmc_samples=2**14))
    assert r.value == pytest.approx(np.pi**4 / 24, rel=1e-12)


def test_node_weights_sum_to_volume():
    p, w = nodes(Domain("ball", 2, (0.5,)), Rule(radial_nodes=8, polar_nodes=8, angular_nodes=8))
    assert p.shape == (2, w.size)
    assert w.sum() == pytest.approx(np.pi**2 / 2 * 0.5**4, rel=1e-12)


def test_debug_nodes_dump(tmp_path):
    path = tmp_path / "nodes.txt"
    integrate(lambda p: p[0], Domain("ball", 1), Rule(radial_nodes=2, angular_nodes=3, estimate_error=False),
              debug_nodes=str(path))
    data = np.loadtxt(path)
    assert data.shape == (6, 5)
    assert np.allclose(data[:, 3], data[:, 0]) and np.allclose(data[:, 4], data[:, 1])
    set_debug_nodes(str(tmp_path / "global.txt"))
    try:
        integrate(lambda p: p[0], Domain("ball", 1), Rule(radial_nodes=2, angular_nodes=3, estimate_error=False))
    finally:
        set_debug_nodes(None)
    assert (tmp_path / "global.txt").exists()


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain("cube", 1)
    with pytest.raises(ValueError):
        Domain("ball", 1, (-1.0,))
    with pytest.raises(ValueError):
        Rule(scheme="monte-carlo")
