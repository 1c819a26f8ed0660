"""Numerical checks of the algebraic identities behind the integral formulas.

Each check samples random points, evaluates both sides and reports the
largest absolute residual together with where it occurred.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import symbolic as sym
from .extension import SmoothGerm, almost_holo_finite, phi_field, restriction_error, vanishing_order
from .forms import Form
from .hefer import koszul_hefer, verify_hefer
from .kernels import WeightSpec, base_params, bm_full, doubled_base
from .koszul import koszul_complex
from .poly import Poly
from .quadrature import Domain, Rule, form_density, integrate, param_binding


@dataclass
class IdentityCheck:
    name: str
    residual: float
    points: int
    where: object = None
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "residual": self.residual, "points": self.points,
                "where": self.where, **self.details}


def _complex_normal(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def _in_ball(rng, N: int, samples: int, R: float) -> np.ndarray:
    """Uniform-ish points of the ball |ζ| < R (radius drawn uniformly)."""
    d = _complex_normal(rng, (N, samples))
    d /= np.linalg.norm(d, axis=0, keepdims=True)
    return d * (R * rng.random(samples))


def _worst(form: Form, target: dict | None = None) -> tuple[float, object]:
    """Largest |coefficient − target| over all terms and sample points."""
    target = target or {}
    worst, where = 0.0, None
    keys = set(form.terms) | set(target)
    for k in sorted(keys):
        c = np.asarray(form.terms.get(k, 0.0)) - target.get(k, 0.0)
        a = np.abs(np.atleast_1d(c))
        i = int(np.argmax(a))
        if a[i] > worst:
            worst, where = float(a[i]), {"term": list(k), "sample": i}
    return worst, where


def weight_identity(N: int, weight: WeightSpec | None = None, samples: int = 100, seed: int = 0) -> IdentityCheck:
    """∇g = 0 for the weight, at random ζ in the ball and z with |z| ≤ 0.3."""
    weight = weight or WeightSpec()
    rng = np.random.default_rng(seed)
    g = weight.build(N)
    ng = g.nabla(base_params(N))
    zeta = _in_ball(rng, N, samples, weight.R)
    z = _in_ball(rng, N, 1, 0.3)[:, 0]
    res, where = _worst(ng.evaluate(sym.bind(list(zeta), list(z))))
    scalar = complex(np.asarray(sym.evaluate(g.scalar_part(), sym.bind(list(z[:, None]), list(z)))).ravel()[0])
    return IdentityCheck("weight", res, samples, where, {"scalar_part_at_z_minus_one": abs(scalar - 1)})


def bm_identity(N: int, samples: int = 100, seed: int = 0) -> IdentityCheck:
    """∇v = 1 for the full Bochner–Martinelli form away from ζ = z."""
    rng = np.random.default_rng(seed)
    v = bm_full(N)
    nv = v.nabla(base_params(N))
    zeta = _complex_normal(rng, (N, samples))
    z = 0.3 * _complex_normal(rng, N)
    res, where = _worst(nv.evaluate(sym.bind(list(zeta), list(z))), {(0, 0, 0): 1.0})
    return IdentityCheck("bochner-martinelli", res, samples, where)


def random_form(N: int, degree: int, rng: np.random.Generator, terms: int = 3) -> Form:
    """Homogeneous random form with polynomial-plus-rational coefficients."""
    out = Form.zero(N)
    keys = []
    for p in range(degree + 1):
        q = degree - p
        if p > N or q > N:
            continue
        for H in itertools.combinations(range(N), p):
            for A in itertools.combinations(range(N), q):
                keys.append((sum(1 << j for j in H), sum(1 << j for j in A), 0))
    for k in keys:
        poly = Poly.from_terms(N, [(complex(*rng.normal(size=2)),
                                    rng.integers(0, 3, N), rng.integers(0, 3, N)) for _ in range(terms)])
        c = sym.add(poly.to_expr(), sym.recip(sym.add(sym.ONE, sym.norm2([sym.zeta(j) for j in range(N)]))))
        out = out + Form(N, {k: c})
    return out


def leibniz_identity(N: int, samples: int = 100, seed: int = 0, trials: int = 3) -> IdentityCheck:
    """∇(α∧β) = ∇α∧β + (−1)^{deg α} α∧∇β on random homogeneous forms."""
    rng = np.random.default_rng(seed)
    base = base_params(N)
    worst, where = 0.0, None
    for t in range(trials):
        da, db = int(rng.integers(0, 2 * N + 1)), int(rng.integers(0, 2 * N + 1))
        a, b = random_form(N, da, rng), random_form(N, db, rng)
        lhs = a.wedge(b).nabla(base)
        rhs = a.nabla(base).wedge(b) + a.wedge(b.nabla(base)).scale(sym.const((-1) ** da))
        zeta = _in_ball(rng, N, samples, 1.0)
        z = _in_ball(rng, N, 1, 0.3)[:, 0]
        r, w = _worst((lhs - rhs).evaluate(sym.bind(list(zeta), list(z))))
        if r >= worst:
            worst, where = r, {"trial": t, "degrees": [da, db], **(w or {})}
    return IdentityCheck("leibniz", worst, samples * trials, where)


def hefer_identity(generators: Sequence[Poly], samples: int = 100, seed: int = 0) -> IdentityCheck:
    """∇H = H f(ζ) − f(z) H for the Koszul complex of the generators."""
    H = koszul_hefer(generators, verify=False)
    rep = verify_hefer(H, koszul_complex(generators), samples, seed, tol=np.inf)
    return IdentityCheck("hefer", rep.max_residual, samples, list(rep.worst) if rep.worst else None,
                         {"per_block": {f"{l},{k}": v for (l, k), v in sorted(rep.per_block.items())}})


def extension_identities(germ: Poly, K: int, samples: int = 100, seed: int = 0) -> IdentityCheck:
    """Restriction exactness, vanishing order of ∂̄φ̃, and ∇Φ^z = 0 for a polynomial germ."""
    n = germ.n
    g = SmoothGerm.from_poly(germ)
    tilde = almost_holo_finite(g, K)
    restr = restriction_error(g, tilde, samples, seed)
    fit = vanishing_order(Form.scalar(2 * n, tilde).dbar(), n, seed=seed)
    field_ = phi_field(tilde, n, K=K, require_bounded=False)
    rng = np.random.default_rng(seed)
    pts = _in_ball(rng, 2 * n, samples, 1.0)
    z = _in_ball(rng, n, 1, 0.3)[:, 0]
    nab = field_.form.nabla(doubled_base(n)).evaluate(sym.bind(list(pts), list(z)))
    res, where = _worst(nab)
    return IdentityCheck("extension", res, samples, where,
                         {"restriction_error": restr, "vanishing_order": fit.order,
                          "vanishing_fit_residual": fit.residual, "configured_order": K,
                          "kernel_bounded": field_.bounded})


@dataclass
class Reproduction:
    values: np.ndarray
    exact: np.ndarray
    rel_error: np.ndarray
    quad_error: np.ndarray
    evaluations: int
    seconds: float


def reproduce(n: int, monomials: Sequence[Sequence[int]], points: Sequence[Sequence[complex]],
              weight: WeightSpec | None = None, rule: Rule | None = None) -> Reproduction:
    """∫ g_{n,n} ζ^a against the exact value z^a, all monomials at once per point."""
    weight = weight or WeightSpec()
    r1, r2 = weight.inner_radius, weight.outer_radius
    if rule is None:
        rule = Rule(radial_nodes=48, angular_nodes=64) if n == 1 else \
            Rule(radial_nodes=32, polar_nodes=24, angular_nodes=24)
    if not rule.breaks:
        rule = replace(rule, breaks=(r1, r2))
    top = weight.build(n).bidegree_component(n, n)
    dom = Domain("ball", n, (weight.R,), support=(r1, r2) if weight.kind == "ball" else None)
    mons = np.asarray(monomials, int).reshape(-1, n)
    t0 = time.perf_counter()
    vals, errs, exact, evals = [], [], [], 0
    for z in points:
        z = np.asarray(z, complex).reshape(n)
        dens = form_density(top, param_binding(list(z)))

        def density(pts, dens=dens):
            w = dens(pts)
            return np.stack([w * np.prod(pts ** a[:, None], axis=0) for a in mons], axis=1)

        r = integrate(density, dom, rule)
        vals.append(np.asarray(r.value))
        errs.append(np.broadcast_to(r.error, (len(mons),)))
        exact.append(np.prod(z[None, :] ** mons, axis=1))
        evals += r.evaluations
    vals, exact = np.array(vals), np.array(exact)
    rel = np.abs(vals - exact) / np.maximum(np.abs(exact), 1e-300)
    return Reproduction(vals, exact, rel, np.array(errs, float), evals, time.perf_counter() - t0)
