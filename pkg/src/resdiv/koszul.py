"""Koszul complexes, the minimal section σ and ε-regularized residue currents.

Everything is expressed in the graded algebra of :mod:`resdiv.forms`: the
Koszul differential is the frame contraction ι_a, the form U is left
multiplication by u = Σ_k σ∧(∂̄σ)^{k-1}, and R_ε = 1 − ∇_f u with
∇_f = ι_a − ∂̄.  With σ regularized as ā_j/(|a|²+ε) the identity
∇_f U + U ∇_f = I − R_ε holds exactly for every ε > 0.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import symbolic as sym
from .forms import Form, HomForm, bits, binom_basis, popcount
from .poly import Poly
from .quadrature import Domain, Rule, form_density, integrate


@dataclass
class ComplexSpec:
    """Bounded complex E_N → ... → E_0 of trivial bundles over C^n.

    ``maps[k-1]`` is f_k : E_k → E_{k-1} as a rank(E_{k-1}) × rank(E_k)
    matrix of holomorphic polynomials.
    """

    n: int
    ranks: tuple
    maps: list
    generators: tuple = ()

    @property
    def length(self) -> int:
        return len(self.ranks) - 1

    def f(self, k: int) -> list:
        return self.maps[k - 1]

    def homform(self, k: int, at_params: bool = False) -> HomForm:
        """f_k as a HomForm of 0-forms (at ζ, or at the base point z)."""
        M = self.f(k)
        m = len(self.generators) if self.generators else None
        ent = [[Form.scalar(self.n, p.at_params() if at_params else p.to_expr()) for p in row] for row in M]
        if m is None:
            raise ValueError("homform needs a Koszul complex (frame basis)")
        return HomForm(self.n, m, k, k - 1, ent)

    def check(self, samples: int = 100, seed: int = 0) -> float:
        """Max |f_k f_{k+1}| over random points."""
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(self.n, samples)) + 1j * rng.normal(size=(self.n, samples))
        worst = 0.0
        for k in range(1, self.length):
            A = _eval_matrix(self.f(k), pts)
            B = _eval_matrix(self.f(k + 1), pts)
            prod = np.einsum("ijp,jkp->ikp", A, B)
            worst = max(worst, float(np.max(np.abs(prod), initial=0.0)))
        return worst


def _eval_matrix(M, pts) -> np.ndarray:
    P = pts.shape[1]
    out = np.zeros((len(M), len(M[0]) if M else 0, P), complex)
    for i, row in enumerate(M):
        for j, p in enumerate(row):
            out[i, j] = np.broadcast_to(p(*pts), (P,))
    return out


def interior_sign_matrix(m: int, k: int) -> list[list[tuple[int, int]]]:
    """For each column e_J (|J| = k): list of (row index, generator, sign) of ι e_J."""
    rows = {r: i for i, r in enumerate(binom_basis(m, k - 1))}
    cols = []
    for J in binom_basis(m, k):
        col = []
        for p, j in enumerate(bits(J)):
            col.append((rows[J & ~(1 << j)], j, -1 if p % 2 else 1))
        cols.append(col)
    return cols


def koszul_complex(a: Sequence[Poly]) -> ComplexSpec:
    """Koszul complex of a: E_k = Λ^k C^m, f_k = ι_a with ι_a e_J = Σ_p (−1)^p a_{J_p} e_{J∖J_p}."""
    a = tuple(a)
    if not a:
        raise ValueError("Koszul complex needs at least one generator")
    n = a[0].n
    for p in a:
        if not p.is_holomorphic():
            raise ValueError("Koszul generators must be holomorphic")
    m = len(a)
    zero = Poly.const(n, 0)
    maps = []
    for k in range(1, m + 1):
        M = [[zero for _ in range(comb(m, k))] for _ in range(comb(m, k - 1))]
        for c, col in enumerate(interior_sign_matrix(m, k)):
            for r, j, s in col:
                M[r][c] = a[j] * s
        maps.append(M)
    return ComplexSpec(n, tuple(comb(m, k) for k in range(m + 1)), maps, a)


# ---------------------------------------------------------------------------
# σ, u and R in the frame algebra
# ---------------------------------------------------------------------------


def _generator_exprs(a: Sequence[Poly]) -> list:
    return [p.to_expr() for p in a]


def koszul_map(a: Sequence[Poly], N: int | None = None) -> Callable[[Form], Form]:
    """The operator ι_{a(ζ)} on frame-valued forms."""
    ex = _generator_exprs(a)
    return lambda x: x.frame_interior(ex)


def sigma(a: Sequence[Poly], eps: float = 0.0) -> Form:
    """σ = Σ ā_j e_j / (|a|² + ε): the minimal-norm section with ι_a σ = 1 when ε = 0."""
    ex = _generator_exprs(a)
    n, m = a[0].n, len(a)
    inv = sym.recip(sym.add(sym.norm2(ex), sym.const(eps)))
    out = Form.zero(n, m)
    for j, e in enumerate(ex):
        out = out + Form(n, {(0, 0, 1 << j): sym.mul(sym.conj(e), inv)}, m)
    return out


def u_form(a: Sequence[Poly], eps: float = 0.0) -> Form:
    """u = Σ_{k≥1} σ∧(∂̄σ)^{k-1}; the part with k frames is U^ℓ_{ℓ+k} of bidegree (0, k−1)."""
    s = sigma(a, eps)
    ds = s.dbar()
    n, m = a[0].n, len(a)
    out = Form.zero(n, m)
    power = Form.scalar(n, 1, m)
    for _ in range(min(m, n + 1)):
        out = out + s.wedge(power)
        power = power.wedge(ds)
        if power.is_zero():
            break
    return out


def r_form(a: Sequence[Poly], eps: float) -> Form:
    """R_ε = 1 − ι_a u + ∂̄u."""
    u = u_form(a, eps)
    n, m = a[0].n, len(a)
    return Form.scalar(n, 1, m) - u.frame_interior(_generator_exprs(a)) + u.dbar()


def u_homform(a: Sequence[Poly], eps: float, src: int, dst: int) -> HomForm:
    u = u_form(a, eps)
    n, m = a[0].n, len(a)
    return HomForm.from_operator(n, m, src, dst, lambda x: u.wedge(x).frame_component(dst))


def r_homform(a: Sequence[Poly], eps: float, src: int, dst: int) -> HomForm:
    r = r_form(a, eps)
    n, m = a[0].n, len(a)
    return HomForm.from_operator(n, m, src, dst, lambda x: r.wedge(x).frame_component(dst))


def power_residue_shape(a0: Poly, s: int) -> Callable[[float], Form]:
    """ε ↦ ∂̄[ā0^s / (|a0|^{2s} + ε)], the regularized ∂̄(1/a0^s)."""
    if not a0.is_monomial() or not a0.is_holomorphic():
        raise ValueError("power_residue_shape needs a holomorphic monomial")
    if s < 1:
        raise ValueError("power must be positive")
    e = sym.power(a0.to_expr(), s)
    n = a0.n

    def build(eps: float) -> Form:
        f = sym.mul(sym.conj(e), sym.recip(sym.add(sym.abs2(e), sym.const(eps))))
        return Form.scalar(n, f).dbar()

    return build


def default_ladder(s: int, scale: float = 1.0, rungs: int = 4) -> tuple[float, ...]:
    eps0 = 1e-2 * scale ** (2 * s)
    return tuple(eps0 * 4.0**-k for k in range(rungs))


# ---------------------------------------------------------------------------
# Pairings and extrapolation
# ---------------------------------------------------------------------------


@dataclass
class Extrapolation:
    ladder: tuple
    values: np.ndarray
    limit: complex | np.ndarray
    alpha: float
    error: float
    converged: bool
    note: str = ""

    def as_dict(self) -> dict:
        v = np.asarray(self.values)
        lim = np.asarray(self.limit)
        return {
            "ladder": list(self.ladder),
            "values": _cjson(v),
            "limit": _cjson(lim),
            "rate": self.alpha,
            "error": self.error,
            "converged": self.converged,
            "note": self.note,
        }


def _cjson(x):
    x = np.asarray(x)
    if x.ndim == 0:
        return [float(x.real), float(x.imag)]
    return [_cjson(v) for v in x]


def _fit(eps: np.ndarray, vals: np.ndarray, alpha: float):
    A = np.stack([np.ones_like(eps), eps**alpha], axis=1).astype(complex)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    res = vals - A @ coef
    return coef, float(np.sqrt(np.sum(np.abs(res) ** 2)))


def _fit_power_law(eps, vals):
    """Best P0 + c ε^α over α ∈ [0.05, 4]."""
    def obj(alpha):
        return _fit(eps, vals, alpha)[1]

    opt = minimize_scalar(obj, bounds=(0.05, 4.0), method="bounded", options={"xatol": 1e-6})
    coef, res = _fit(eps, vals, opt.x)
    return coef[0], float(opt.x), res


def extrapolate(ladder: Sequence[float], values) -> Extrapolation:
    """Least-squares power-law extrapolation of pairings to ε → 0.

    Values may be vectors (one extrapolation per component).  The error
    estimate is the larger of the fit residual and the change of the limit when
    the coarsest rung is dropped.
    """
    eps = np.asarray(ladder, float)
    vals = np.asarray(values, complex)
    order = np.argsort(-eps)
    eps, vals = eps[order], vals[order]
    flat = vals.reshape(len(eps), -1)
    limits, errs, alphas = [], [], []
    converged = True
    for col in flat.T:
        scale = max(np.max(np.abs(col)), 1e-300)
        diffs = np.abs(np.diff(col))
        if np.all(diffs <= 1e-13 * scale):
            limits.append(col[-1])
            errs.append(float(np.max(diffs, initial=0.0)))
            alphas.append(float("inf"))
            continue
        p0, alpha, res = _fit_power_law(eps, col)
        err = res
        if len(eps) >= 4:
            p1, _, _ = _fit_power_law(eps[1:], col[1:])
            err = max(err, abs(p1 - p0))
        if len(diffs) >= 2 and diffs[-1] > 0.9 * diffs[-2] and diffs[-1] > 1e-8 * scale:
            converged = False
        limits.append(p0)
        errs.append(float(err))
        alphas.append(alpha)
    limit = np.array(limits).reshape(vals.shape[1:])
    if limit.ndim == 0:
        limit = complex(limit)
    finite = [a for a in alphas if np.isfinite(a)]
    return Extrapolation(tuple(eps), vals, limit, min(finite) if finite else float("inf"),
                         max(errs), converged, "" if converged else "ladder differences do not decrease")


class NonConvergentLadder(RuntimeError):
    def __init__(self, report: Extrapolation):
        self.report = report
        super().__init__(f"ε-ladder did not converge: {report.note}")


@dataclass
class PairingResult:
    value: complex
    error: float
    extrapolation: Extrapolation
    quadrature_error: float
    evaluations: int


def pairing_rule(s: int, radius: float, nodes: int = 24, angular: int = 64, levels: int | None = None) -> Rule:
    """Radially graded rule that resolves the ε-layer of ∂̄(1/ζ^s) down to the smallest rung."""
    if levels is None:
        levels = 10
    return Rule(radial_nodes=nodes, angular_nodes=angular, grading=levels, grading_ratio=0.5,
                breaks=(radius,))


def residue_pairing(current: Callable[[float], Form], test: Form, domain: Domain, rule: Rule | None = None,
                    ladder: Sequence[float] | None = None, params=None, threads: int = 1,
                    strict: bool = False) -> PairingResult:
    """⟨R_ε, test⟩ = ∫ (R_ε ∧ test)_{N,N} along the ε-ladder, extrapolated to 0."""
    ladder = tuple(ladder) if ladder is not None else default_ladder(1)
    rule = rule or Rule()

    def one(eps):
        alpha = current(eps).wedge(test)
        full = (1 << alpha.N) - 1
        alpha = alpha.bidegree_component(alpha.N, alpha.N)
        if any(h != full for h, _, _ in alpha.terms):
            raise ValueError("test form has the wrong bidegree")
        return integrate(form_density(alpha, params), domain, rule)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, ladder))
    else:
        results = [one(e) for e in ladder]
    vals = [r.value for r in results]
    ext = extrapolate(ladder, vals)
    if strict and not ext.converged:
        raise NonConvergentLadder(ext)
    qerr = max((r.error for r in results if np.isfinite(r.error)), default=0.0)
    return PairingResult(ext.limit, ext.error + qerr, ext, qerr, sum(r.evaluations for r in results))


def bump(N: int, r_inner: float, r_outer: float, coords=None):
    """Smooth bump ≡ 1 for |ζ| ≤ r_inner, 0 beyond r_outer (as an Expr)."""
    from .kernels import cutoff

    return cutoff(N, r_inner, r_outer, coords)


def cauchy_test_form(xi: Poly, r_inner: float = 0.3, r_outer: float = 0.8) -> Form:
    """(1/2πi) ξ·bump dζ_1∧...∧dζ_n."""
    n = xi.n
    c = sym.mul(sym.const(1 / (2j * np.pi)), xi.to_expr(), bump(n, r_inner, r_outer))
    out = Form.scalar(n, c)
    for j in range(n):
        out = out.wedge(Form.dz(n, j))
    return out


def frame_level_count(x: Form, level: int) -> int:
    return sum(1 for k in x.terms if popcount(k[2]) == level)
