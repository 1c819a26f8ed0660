import numpy as np
import pytest

from resdiv import symbolic as sym
from resdiv.division import (DivisionProblem, PreconditionError, check_precondition, default_points, lift_to_doubled,
                             min_resolved_eps, pointwise_solution, probe_ray, regularity_probe, residual_report,
                             solve)
from resdiv.extension import SmoothGerm
from resdiv.koszul import koszul_complex
from resdiv.poly import Poly
from resdiv.quadrature import Rule


def z(n, j):
    return Poly.coordinate(n, j)


def test_default_points_include_origin():
    pts = default_points(2)
    assert len(pts) == 9 and (0j, 0j) in [tuple(complex(x) for x in p) for p in pts]
    assert max(abs(p[0]) for p in pts) <= 0.3 + 1e-12


def test_precondition_rejects_non_cycle():
    p = DivisionProblem([z(2, 0), z(2, 1)], 1, [SmoothGerm.from_poly(z(2, 0)), SmoothGerm.from_poly(z(2, 0))],
                        [(0.1, 0.1)])
    with pytest.raises(PreconditionError):
        check_precondition(p)
    ok = DivisionProblem([z(2, 0), z(2, 1)], 1, [SmoothGerm.from_poly(-z(2, 1)), SmoothGerm.from_poly(z(2, 0))],
                         [(0.1, 0.1)])
    assert check_precondition(ok) < 1e-12


def test_lift_to_doubled_keeps_holomorphic_part():
    p = z(1, 0) * z(1, 0) * 2
    q = lift_to_doubled(p)
    assert q.n == 2 and q(0.5, 7.0) == pytest.approx(0.5)


def test_holomorphic_koszul_division_recovers_constant_solution():
    p = DivisionProblem([z(2, 0), z(2, 1)], 1, [SmoothGerm.from_poly(-z(2, 1)), SmoothGerm.from_poly(z(2, 0))],
                        [(0.1 + 0.05j, -0.1j), (0.0, 0.0), (-0.2, 0.15)])
    res = solve(p)
    assert res.pipeline == "holomorphic"
    assert res.max_residual < 1e-3
    assert np.allclose(res.psi(), 1, atol=1e-3)


def test_holomorphic_principal_division():
    # φ = ζ(1 + ζ) divided by ζ gives ψ = 1 + ζ
    phi = z(1, 0) + z(1, 0) * z(1, 0)
    pts = [(0.1 + 0.1j,), (-0.2,), (0.0,)]
    res = solve(DivisionProblem([z(1, 0)], 0, [SmoothGerm.from_poly(phi)], pts))
    want = np.array([1 + p[0] for p in pts])
    assert np.allclose(res.psi()[:, 0], want, atol=1e-6)
    assert res.max_residual < 1e-6


def test_doubled_pipeline_smooth_data():
    phi = Poly.from_terms(1, [(1, [0], [1]), (0.5, [1], [2])])
    pts = [(0.2 + 0.1j,), (-0.25j,)]
    res = solve(DivisionProblem([z(1, 0)], 0, [SmoothGerm.from_poly(phi)], pts))
    assert res.pipeline == "doubled"
    assert res.max_residual < 5e-3
    assert any("extension order" in n for n in res.notes)


def test_unresolved_ladder_is_rejected():
    phi = Poly.monomial(1, [0], [1])
    with pytest.raises(ValueError, match="not resolved"):
        solve(DivisionProblem([z(1, 0)], 0, [SmoothGerm.from_poly(phi)], [(0.1,)], ladder=[1e-12]))
    assert min_resolved_eps(Rule(radial_nodes=12, breaks=(0.7, 0.95), grading=8), 1.0) > 0


def test_residual_report_and_pointwise_solution():
    F = np.ones((3, 1, 1))
    rep = residual_report(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.5]), F)
    assert rep["max"] == pytest.approx(0.5)
    psi = pointwise_solution([z(1, 0)], [sym.mul(sym.zeta(0), sym.zetabar(0))], [[0.5, 0.25j]])
    assert np.allclose(psi, [0.5, -0.25j])


def test_regularity_probe_recovers_exponent():
    r = np.geomspace(1e-4, 1e-1, 12)
    fit = regularity_probe(r, 3 * r ** (-1 / 3))
    assert fit.exponent == pytest.approx(-1 / 3, abs=1e-10)
    assert fit.band[0] <= fit.exponent <= fit.band[1]
    with pytest.raises(ValueError):
        regularity_probe(r, np.sin(1 / r) + 2)


def test_probe_ray_on_column_map():
    # F = (ζ1, ζ2)ᵀ acting on ψ, φ = (ζ1 ζ̄1, ζ2 ζ̄1): ψ = ζ̄1 grows like t
    F = [z(2, 0), z(2, 1)]
    phi = [sym.mul(sym.zeta(0), sym.zetabar(0)), sym.mul(sym.zeta(1), sym.zetabar(0))]
    fit = probe_ray(F, phi, (1, 1j), np.geomspace(1e-3, 1e-1, 8))
    assert fit.exponent == pytest.approx(1, abs=1e-8)


def test_koszul_maps_at_points():
    cx = koszul_complex([z(2, 0), z(2, 1)])
    assert len(cx.f(1)) == 1 and len(cx.f(1)[0]) == 2
