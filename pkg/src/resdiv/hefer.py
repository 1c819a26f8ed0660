"""Hefer decompositions of polynomials and Hefer forms for Koszul complexes.

For the Koszul complex of a = (a_1..a_m) the Hefer forms come from scalar
telescoping data: with a_j(ζ) − a_j(z) = Σ_i h_ji (ζ_i − z_i) put
h_j = (1/2πi) Σ_i h_ji dζ_i and let δ_h x = Σ_j h_j ∧ ι_{e_j} x.  Since
[∇, δ_h] = ι_{a(ζ)} − ι_{a(z)} commutes with δ_h, the operator H = exp(δ_h)
satisfies ∇H = H f(ζ) − f(z) H; its block from level k to level ℓ is H^ℓ_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Sequence

import numpy as np

from . import symbolic as sym
from .forms import TWO_PI_I, Form, HomForm, binom_basis
from .koszul import ComplexSpec, koszul_complex
from .poly import Poly
from .symbolic import Var

HEFER_TOL = 1e-9


def zz_vars(n: int) -> tuple[Var, ...]:
    """Variables (ζ_1..ζ_n, z_1..z_n) of Hefer data."""
    return tuple(Var(j) for j in range(n)) + tuple(Var(j, False, True) for j in range(n))


def hefer_decompose(p: Poly) -> list[Poly]:
    """h_1..h_n with p(ζ) − p(z) = Σ h_i(ζ, z)(ζ_i − z_i), telescoping in ascending order."""
    if not p.is_holomorphic():
        raise ValueError("Hefer decomposition needs a holomorphic polynomial")
    n = p.n
    vars_ = zz_vars(n)
    out = []
    for i in range(n):
        terms = []
        for c, a, _ in p.split():
            if a[i] == 0:
                continue
            for k in range(a[i]):
                zeta_e = [0] * n
                z_e = [0] * n
                for j in range(n):
                    if j < i:
                        z_e[j] = a[j]
                    elif j > i:
                        zeta_e[j] = a[j]
                zeta_e[i] = k
                z_e[i] = a[i] - 1 - k
                terms.append((tuple(zeta_e) + tuple(z_e), c))
        out.append(Poly(vars_, terms))
    return out


def check_scalar_hefer(p: Poly, h: Sequence[Poly], samples: int = 1000, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    n = p.n
    zeta = rng.normal(size=(n, samples)) + 1j * rng.normal(size=(n, samples))
    z = rng.normal(size=(n, samples)) + 1j * rng.normal(size=(n, samples))
    lhs = p(*zeta) - p(*z)
    rhs = 0
    for i, hi in enumerate(h):
        rhs = rhs + _eval_zz(hi, zeta, z) * (zeta[i] - z[i])
    return float(np.max(np.abs(lhs - rhs)))


def _eval_zz(h: Poly, zeta, z):
    vals = list(zeta) + list(z)
    out = 0
    for e, c in h.terms:
        t = c
        for v, k in zip(vals, e):
            if k:
                t = t * v**k
        out = out + t
    return out


def _zz_expr(h: Poly) -> sym.Expr:
    return h.to_expr()


@dataclass
class HeferCollection:
    """H[(ℓ, k)] : E_k → E_ℓ for ℓ ≤ k, of bidegree (k − ℓ, 0)."""

    n: int
    m: int
    blocks: dict
    one_forms: list = field(default_factory=list)

    def __getitem__(self, key) -> HomForm:
        l, k = key
        if k < l:
            return HomForm.zero(self.n, self.m, k, l)
        return self.blocks[(l, k)]

    def operator(self, x: Form) -> Form:
        """H applied to a frame-valued form: exp(δ_h) x."""
        out = x
        term = x
        for j in range(1, self.m + 1):
            term = _delta(self.one_forms, term).scale(sym.const(1.0 / j))
            if term.is_zero():
                break
            out = out + term
        return out


def _delta(h: Sequence[Form], x: Form) -> Form:
    """δ_h x = Σ_j h_j ∧ ι_{e_j} x."""
    out = Form.zero(x.N, x.m)
    m = len(h)
    for j in range(m):
        w = [sym.ZERO] * max(m, x.m)
        w[j] = sym.ONE
        c = x.frame_interior(w)
        if not c.is_zero():
            out = out + h[j].wedge(c)
    return out


def hefer_one_forms(a: Sequence[Poly]) -> list[Form]:
    """h_j = (1/2πi) Σ_i h_ji dζ_i for each generator."""
    n, m = a[0].n, len(a)
    out = []
    for aj in a:
        hs = hefer_decompose(aj)
        f = Form.zero(n, m)
        for i, hi in enumerate(hs):
            if hi.is_zero():
                continue
            f = f + Form.dz(n, i, m).scale(sym.mul(sym.const(1 / TWO_PI_I), _zz_expr(hi)))
        out.append(f)
    return out


def koszul_hefer(a: Sequence[Poly], m: int | None = None, verify: bool = True, samples: int = 100) -> HeferCollection:
    """Hefer forms of the Koszul complex of a, self-checked against the Hefer identity."""
    a = tuple(a)
    if m is not None and m != len(a):
        raise ValueError("m must equal the number of generators")
    m = len(a)
    n = a[0].n
    h = hefer_one_forms(a)
    blocks = {}
    for k in range(m + 1):
        for l in range(k + 1):
            d = k - l

            def op(x, d=d):
                y = x
                for _ in range(d):
                    y = _delta(h, y)
                return y.scale(sym.const(1.0 / factorial(d)))

            blocks[(l, k)] = HomForm.from_operator(n, m, k, l, op)
    H = HeferCollection(n, m, blocks, h)
    if verify:
        rep = verify_hefer(H, koszul_complex(a), samples, tol=1e-10)
        if not rep.passed:
            raise RuntimeError(f"Hefer construction failed verification: {rep.summary()}")
    return H


@dataclass
class HeferReport:
    max_residual: float
    passed: bool
    tolerance: float
    worst: tuple | None
    per_block: dict

    def summary(self) -> str:
        return f"max residual {self.max_residual:.3e} (tol {self.tolerance:g}) worst at {self.worst}"


def verify_hefer(H: HeferCollection, cx: ComplexSpec, samples: int = 100, seed: int = 0,
                 tol: float = HEFER_TOL, points=None) -> HeferReport:
    """Max residual of ∇H^ℓ_k − (H^ℓ_{k−1} f_k(ζ) − f_{ℓ+1}(z) H^{ℓ+1}_k) at random (ζ, z)."""
    n, m = H.n, H.m
    if cx.length != m or cx.n != n:
        raise ValueError("Hefer collection and complex have incompatible shapes")
    if points is None:
        rng = np.random.default_rng(seed)
        zeta = rng.normal(size=(n, samples)) + 1j * rng.normal(size=(n, samples))
        z = rng.normal(size=(n, samples)) + 1j * rng.normal(size=(n, samples))
    else:
        zeta, z = points
    binding = sym.bind(list(zeta), list(z))
    base = [sym.zpar(j) for j in range(n)]
    cache: dict = {}
    F = {k: cx.homform(k).evaluate(binding, cache) for k in range(1, m + 1)}
    Fz = {k: cx.homform(k, at_params=True).evaluate(binding, cache) for k in range(1, m + 1)}
    Hn = {key: blk.evaluate(binding, cache) for key, blk in H.blocks.items()}
    worst, where, per = 0.0, None, {}
    for (l, k), blk in H.blocks.items():
        if blk.shape != (len(binom_basis(m, l)), len(binom_basis(m, k))):
            raise ValueError(f"block ({l},{k}) has shape {blk.shape}")
        lhs = blk.nabla(base).evaluate(binding, cache)
        rhs = HomForm.zero(n, m, k, l)
        if k - 1 >= l:
            rhs = rhs + Hn[(l, k - 1)].compose(F[k])
        if l + 1 <= k:
            rhs = rhs - Fz[l + 1].compose(Hn[(l + 1, k)])
        res = 0.0
        loc = None
        for i, (rl, rr) in enumerate(zip(lhs.entries, rhs.entries)):
            for j, (x, y) in enumerate(zip(rl, rr)):
                d = (x - y).max_abs()
                if d > res:
                    res, loc = d, (l, k, i, j)
        per[(l, k)] = res
        if res > worst:
            worst, where = res, loc
    return HeferReport(worst, worst <= tol, tol, where, per)
