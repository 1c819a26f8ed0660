"""Integral division operators and the end-to-end division solver.

For the Koszul complex of a and data φ at level ℓ the weight
g' = f(z) H U + H U f + H R (all in the frame algebra) gives

    φ(z) = f_{ℓ+1}(z) T_ℓ φ(z) + T_{ℓ-1}(f_ℓ φ)(z) + S φ(z),
    T_ℓ φ(z) = ∫ [H(u ∧ Φ)]_{ℓ+1} ∧ g,   S φ(z) = ∫ [H(R ∧ Φ)]_ℓ ∧ g.

Holomorphic data use Φ = φ in C^n.  Smooth data are first extended
almost-holomorphically to C^{2n}, with Φ = Φ^z and base point (z, z̄).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import linregress

from . import symbolic as sym
from .extension import SmoothGerm, default_order, extend_vector, phi_field
from .forms import Form, binom_basis
from .hefer import koszul_hefer
from .kernels import WeightSpec, doubled_base, product_weight
from .koszul import ComplexSpec, extrapolate, koszul_complex, r_form, u_form
from .poly import Poly, zeta_vars
from .quadrature import Domain, Patch, Rule, form_density, integrate, nodes, param_binding, radial_edges


class PreconditionError(ValueError):
    pass


def lift_to_doubled(p: Poly) -> Poly:
    """The same holomorphic polynomial as a function on C^{2n} independent of ω."""
    n = p.n
    terms = []
    for c, a, b in p.split():
        if any(b):
            raise ValueError("only holomorphic polynomials can be lifted")
        terms.append((tuple(a) + (0,) * n + (0,) * (2 * n), c))
    return Poly(zeta_vars(2 * n), terms)


@dataclass
class DivisionProblem:
    generators: Sequence[Poly]
    level: int
    phi: Sequence[SmoothGerm]
    points: Sequence[Sequence[complex]]
    weight: WeightSpec = field(default_factory=WeightSpec)
    rule: Rule | None = None
    ladder: Sequence[float] | None = None
    M: int = 0
    k: int = 0
    c_n: int | None = None
    order: int | None = None
    threads: int = 1

    @property
    def n(self) -> int:
        return self.generators[0].n

    @property
    def m(self) -> int:
        return len(self.generators)

    @property
    def holomorphic(self) -> bool:
        return all(g.poly is not None and g.poly.is_holomorphic() for g in self.phi)


@dataclass
class PointResult:
    z: tuple
    psi: np.ndarray
    residue: np.ndarray | None
    error: float
    residual: float
    ladder: dict | None = None


@dataclass
class DivisionResult:
    pipeline: str
    points: list
    max_residual: float
    max_error: float
    evaluations: int
    seconds: float
    notes: list = field(default_factory=list)

    def psi(self) -> np.ndarray:
        return np.array([p.psi for p in self.points])


def _phi_form(p: DivisionProblem, N: int, exprs) -> Form:
    basis = binom_basis(p.m, p.level)
    if len(exprs) != len(basis):
        raise ValueError(f"φ needs {len(basis)} components at level {p.level}, got {len(exprs)}")
    out = Form.zero(N, p.m)
    for e, J in zip(exprs, basis):
        out = out + Form(N, {(0, 0, J): e}, p.m)
    return out


def _eval_phi(p: DivisionProblem, z) -> np.ndarray:
    b = sym.bind([complex(x) for x in z])
    return np.array([complex(sym.evaluate(g.expr, b)) for g in p.phi])


def check_precondition(p: DivisionProblem, samples: int = 50, seed: int = 0, tol: float = 1e-10) -> float:
    """max |f_ℓ φ| over random points; raises when the data are not a cycle."""
    if p.level == 0:
        return 0.0
    cx = koszul_complex(p.generators)
    rng = np.random.default_rng(seed)
    pts = 0.5 * (rng.normal(size=(p.n, samples)) + 1j * rng.normal(size=(p.n, samples)))
    b = sym.bind(list(pts))
    phi = np.array([np.broadcast_to(sym.evaluate(g.expr, b), (samples,)) for g in p.phi])
    F = cx.f(p.level)
    worst = 0.0
    for i, row in enumerate(F):
        acc = sum(np.broadcast_to(q(*pts), (samples,)) * phi[j] for j, q in enumerate(row))
        worst = max(worst, float(np.max(np.abs(acc))))
    if worst > tol:
        raise PreconditionError(f"f_ℓφ does not vanish (max {worst:.3e})")
    return worst


def default_points(n: int, count: int = 9, radius: float = 0.3) -> list[tuple]:
    """A small deterministic grid in |z| ≤ radius."""
    side = int(np.ceil(np.sqrt(count)))
    t = np.linspace(-1, 1, side) * radius / np.sqrt(2)
    pts = []
    for x in t:
        for y in t:
            z0 = complex(x, y)
            pts.append(tuple([z0] + [0.5 * z0 * (j + 1) * 1j ** j for j in range(1, n)]))
            if len(pts) == count:
                return pts
    return pts


def _frame_columns(p: DivisionProblem, level: int) -> list[int]:
    return binom_basis(p.m, level)


def _f_at(cx: ComplexSpec, k: int, z) -> np.ndarray:
    F = cx.f(k)
    return np.array([[complex(q(*[np.asarray(x) for x in z])) for q in row] for row in F])


# ---------------------------------------------------------------------------
# Holomorphic pipeline in C^n
# ---------------------------------------------------------------------------


def _zero_set_meets(gens, domain: Domain, rule: Rule, tol=1e-10) -> bool:
    pts, _ = nodes(domain, rule)
    s = sum(np.abs(np.broadcast_to(g(*pts), pts.shape[1:])) ** 2 for g in gens)
    return bool(np.min(s) < tol)


def solve_holomorphic(p: DivisionProblem) -> DivisionResult:
    t0 = time.perf_counter()
    n, m, l = p.n, p.m, p.level
    if l + 1 > m:
        raise ValueError("level ℓ + 1 exceeds the length of the complex")
    check_precondition(p)
    cx = koszul_complex(p.generators)
    H = koszul_hefer(p.generators)
    phi = _phi_form(p, n, [g.expr for g in p.phi])
    g = p.weight.build(n)
    R = p.weight.R
    r1, r2 = p.weight.inner_radius, p.weight.outer_radius
    rule = p.rule or Rule(radial_nodes=32 if n == 1 else 24, angular_nodes=64 if n == 1 else 16,
                          polar_nodes=16, breaks=(r1, r2))
    annulus = Domain("ball", n, (R,), support=(r1, r2))
    notes = []
    cols = _frame_columns(p, l + 1)

    def integrand(eps):
        x = H.operator(u_form(p.generators, eps).wedge(phi)).frame_component(l + 1)
        return x.wedge(g).bidegree_component(n, n)

    # U^ℓ_k of bidegree (0, k-ℓ-1) meets only g_{j,j} with j ≥ 1 (supported on
    # the cutoff annulus) unless k - ℓ - 1 = n is possible
    smooth = m <= n + l and not _zero_set_meets(p.generators, annulus, rule)
    if smooth:
        notes.append("integrand supported on the cutoff annulus; ε = 0")
        ladder = (0.0,)
        domain = annulus
    else:
        ladder = tuple(p.ladder) if p.ladder else tuple(1e-2 * 4.0**-k for k in range(4))
        domain = Domain("ball", n, (R,))
        rule = Rule(**{**rule.__dict__, "grading": max(rule.grading, 10)})
        notes.append("singular integrand; ε-ladder extrapolation")
    forms = {eps: integrand(eps) for eps in ladder}
    results, evals, worst_res, worst_err = [], 0, 0.0, 0.0
    for z in p.points:
        params = param_binding(z)
        vals, errs = [], []
        for eps in ladder:
            r = integrate(form_density(forms[eps], params, frames=cols), domain, rule)
            vals.append(np.atleast_1d(r.value))
            errs.append(r.error)
            evals += r.evaluations
        qerr = max(errs)
        lad = None
        if len(ladder) > 1:
            ext = extrapolate(ladder, np.array(vals))
            psi = np.atleast_1d(ext.limit)
            err = qerr + ext.error
            lad = ext.as_dict()
        else:
            psi, err = vals[0], qerr
        residual = float(np.max(np.abs(_f_at(cx, l + 1, z) @ psi - _eval_phi(p, z))))
        worst_res, worst_err = max(worst_res, residual), max(worst_err, err)
        results.append(PointResult(tuple(z), psi, None, err, residual, lad))
    return DivisionResult("holomorphic", results, worst_res, worst_err, evals, time.perf_counter() - t0, notes)


# ---------------------------------------------------------------------------
# Doubled pipeline in C^{2n}
# ---------------------------------------------------------------------------


def min_resolved_eps(rule: Rule, R: float) -> float:
    """Smallest ε with ε ≥ h², h the radial node spacing at radius √ε."""
    edges = radial_edges(R, rule)

    def spacing(r):
        for a, b in zip(edges[:-1], edges[1:]):
            if a <= r <= b:
                return (b - a) / rule.radial_nodes
        return (edges[-1] - edges[-2]) / rule.radial_nodes

    lo = 1e-16
    for eps in np.logspace(-16, 0, 321):
        if eps >= spacing(np.sqrt(eps)) ** 2:
            return float(eps)
    return lo


def solve_doubled(p: DivisionProblem) -> DivisionResult:
    t0 = time.perf_counter()
    n, m, l = p.n, p.m, p.level
    N = 2 * n
    check_precondition(p)
    cx = koszul_complex(p.generators)
    gens2 = [lift_to_doubled(a) for a in p.generators]
    H = koszul_hefer(gens2)
    K = p.order if p.order is not None else default_order(n, p.M, p.k, p.c_n)
    phit = extend_vector(list(p.phi), K, m, binom_basis(m, l))
    pf = phi_field(phit, n, K)
    Phi = pf.form
    R = p.weight.R
    r1, r2 = p.weight.inner_radius, p.weight.outer_radius
    g = product_weight(N, [(r1, r2)] * N, doubled_base(n))
    ladder = tuple(p.ladder) if p.ladder else tuple(4e-2 * 4.0**-k for k in range(4))
    notes = [f"extension order K = {K}; ∂̄φ̃ vanishing order {pf.vanishing}"]
    if n == 1:
        zr = Rule(radial_nodes=12, angular_nodes=16, breaks=(r1, r2), grading=8, estimate_error=False)
        wr = Rule(radial_nodes=12, angular_nodes=16, breaks=(r1, r2), estimate_error=False)
        base_rule = p.rule or Rule(per_variable=(zr, wr), estimate_error=False, threads=p.threads)
        domain = Domain("polydisc", N, (R, R))
        eps_min = min_resolved_eps(base_rule.for_variable(0), R)
        if min(ladder) < eps_min:
            raise ValueError(f"ε = {min(ladder):g} is not resolved by the grid (needs ε ≥ {eps_min:.3g})")
    else:
        base_rule = p.rule or Rule(scheme="qmc", qmc_samples=2**18, threads=p.threads)
        domain = Domain("ball", N, (np.sqrt(N) * r2 * 1.01,))
        notes.append("real dimension 8: quasi-Monte Carlo")
    cols_t = _frame_columns(p, l + 1)
    cols_s = _frame_columns(p, l)
    forms_t, forms_s = {}, {}
    for eps in ladder:
        u = u_form(gens2, eps)
        forms_t[eps] = H.operator(u.wedge(Phi)).frame_component(l + 1).wedge(g).bidegree_component(N, N)
        forms_s[eps] = H.operator(r_form(gens2, eps).wedge(Phi)).frame_component(l).wedge(g).bidegree_component(N, N)
    singular = pf.vanishing != np.inf
    results, evals, worst_res, worst_err = [], 0, 0.0, 0.0
    for z in p.points:
        zz = [complex(x) for x in z]
        params = param_binding(zz)
        rule = base_rule
        if singular and base_rule.scheme != "qmc":
    
            rule = replace(base_rule, patch=Patch(tuple(zz + [np.conj(x) for x in zz]), 0.15))
        tv, sv, errs, resid = [], [], [], []
        phi_z = _eval_phi(p, zz)
        F = _f_at(cx, l + 1, zz)
        for eps in ladder:
            rt = integrate(form_density(forms_t[eps], params, frames=cols_t), domain, rule)
            rs = integrate(form_density(forms_s[eps], params, frames=cols_s), domain, rule)
            evals += rt.evaluations + rs.evaluations
            T, S = np.atleast_1d(rt.value), np.atleast_1d(rs.value)
            tv.append(T)
            sv.append(S)
            errs.extend([e for e in (rt.error, rs.error) if np.isfinite(e)])
            resid.append(float(np.max(np.abs(phi_z - F @ T - S))))
        et = extrapolate(ladder, np.array(tv))
        es = extrapolate(ladder, np.array(sv))
        residual = max(resid)
        err = max(errs, default=0.0) + et.error
        worst_res, worst_err = max(worst_res, residual), max(worst_err, err)
        results.append(PointResult(tuple(zz), np.atleast_1d(et.limit), np.atleast_1d(es.limit), err, residual,
                                   {"T": et.as_dict(), "S": es.as_dict(), "residual_per_eps": resid}))
    return DivisionResult("doubled", results, worst_res, worst_err, evals, time.perf_counter() - t0, notes)


def solve(p: DivisionProblem) -> DivisionResult:
    """Holomorphic data use the C^n pipeline; smooth data the doubled one."""
    return solve_holomorphic(p) if p.holomorphic else solve_doubled(p)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def residual_report(psi: np.ndarray, phi: np.ndarray, F: np.ndarray) -> dict:
    """Componentwise |F(z) ψ(z) − φ(z)| statistics; F has shape (P, r, c)."""
    psi = np.asarray(psi, complex).reshape(len(F), -1)
    phi = np.asarray(phi, complex).reshape(len(F), -1)
    r = np.abs(np.einsum("prc,pc->pr", F, psi) - phi)
    return {"max": float(np.max(r)), "mean": float(np.mean(r))}


def pointwise_solution(F_rows: Sequence[Sequence[Poly]] | Sequence[Poly], phi_exprs, points) -> np.ndarray:
    """Least-squares ψ = F*φ/|F|² for a column map F (pointwise injective off its zeros)."""
    pts = np.asarray(points, complex)
    if pts.ndim == 1:
        pts = pts[:, None]
    b = sym.bind(list(pts))
    col = [row[0] if isinstance(row, (list, tuple)) else row for row in F_rows]
    Fv = np.array([np.broadcast_to(q(*pts), pts.shape[1:]) for q in col])
    ph = np.array([np.broadcast_to(sym.evaluate(e, b), pts.shape[1:]) for e in phi_exprs])
    return np.sum(np.conj(Fv) * ph, axis=0) / np.sum(np.abs(Fv) ** 2, axis=0)


@dataclass
class ProbeFit:
    exponent: float
    stderr: float
    residual: float
    band: tuple


def regularity_probe(radii: Sequence[float], values: Sequence[complex], max_residual: float = 0.1) -> ProbeFit:
    """Fit |ψ(t·d)| ~ C t^γ along a ray; γ with a 95% band from the slope's standard error."""
    x = np.log(np.asarray(radii, float))
    y = np.log(np.maximum(np.abs(np.asarray(values)), 1e-300))
    fit = linregress(x, y)
    res = float(np.max(np.abs(y - (fit.intercept + fit.slope * x))))
    se = float(fit.stderr)
    if res > max_residual:
        raise ValueError(f"power-law fit residual {res:.3g} exceeds {max_residual}")
    return ProbeFit(float(fit.slope), se, res, (float(fit.slope) - 2 * se, float(fit.slope) + 2 * se))


def probe_ray(F_col: Sequence[Poly], phi_exprs, direction: Sequence[complex], radii: Sequence[float]) -> ProbeFit:
    d = np.asarray(direction, complex)
    d = d / np.linalg.norm(d)
    pts = d[:, None] * np.asarray(radii)[None, :]
    return regularity_probe(radii, pointwise_solution(F_col, phi_exprs, pts))
