"""Bochner–Martinelli forms and weights with respect to a base point.

The base point is always symbolic (parameter variables), so a kernel is built
once and evaluated for many base points by binding the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from . import symbolic as sym
from .forms import TWO_PI_I, Form
from .symbolic import Expr, Var

INV_2PI_I = 1 / TWO_PI_I


def base_params(n: int) -> list[Expr]:
    """The point z as parameters z_1..z_n."""
    return [sym.zpar(j) for j in range(n)]


def doubled_base(n: int) -> list[Expr]:
    """The point (z, z̄) in doubled space C^{2n}."""
    return [sym.zpar(j) for j in range(n)] + [sym.zparbar(j) for j in range(n)]


def _coords(N: int) -> list[Expr]:
    return [sym.var(Var(j)) for j in range(N)]


def bm_b(N: int, base: Sequence[Expr] | None = None) -> Form:
    """b = Σ conj(ζ_j − w_j) dζ_j / (2πi |ζ − w|²)."""
    base = base_params(N) if base is None else list(base)
    diffs = [sym.add(c, sym.neg(w)) for c, w in zip(_coords(N), base)]
    inv = sym.recip(sym.norm2(diffs))
    out = Form.zero(N)
    for j, d in enumerate(diffs):
        out = out + Form.dz(N, j).scale(sym.mul(sym.const(INV_2PI_I), sym.conj(d), inv))
    return out


def _geometric_tail(s: Form, N: int) -> Form:
    """s ∧ (1 + ∂̄s + ... + (∂̄s)^{N-1})."""
    ds = s.dbar()
    power = Form.scalar(N, 1)
    acc = Form.zero(N)
    for _ in range(N):
        acc = acc + s.wedge(power)
        power = power.wedge(ds)
        if power.is_zero():
            break
    return acc


def bm_full(N: int, base: Sequence[Expr] | None = None) -> Form:
    """Full Bochner–Martinelli form v = Σ_k b ∧ (∂̄b)^k, with ∇v = 1 off the base point."""
    return _geometric_tail(bm_b(N, base), N)


def doubled_bm(n: int) -> Form:
    """Full BM form in C^{2n} (coordinates ζ then ω) at base point (z, z̄)."""
    return bm_full(2 * n, doubled_base(n))


def cutoff(N: int, r1: float, r2: float, coords: Sequence[int] | None = None) -> Expr:
    """χ(Σ|ζ_j|²) over the given coordinates: 1 inside radius r1, 0 outside r2."""
    if not 0 < r1 < r2:
        raise ValueError("cutoff radii must satisfy 0 < r1 < r2")
    idx = range(N) if coords is None else coords
    t = sym.norm2([sym.var(Var(j)) for j in idx])
    return sym.apply(sym.cutoff_atom(r1 * r1, r2 * r2), t)


def ball_weight(N: int, R: float = 1.0, r1: float | None = None, r2: float | None = None,
                base: Sequence[Expr] | None = None) -> Form:
    """Weight g = χ − ∂̄χ ∧ u for the ball of radius R.

    u = s ∧ Σ(∂̄s)^k with s = Σ ζ̄_j dζ_j / (2πi(|ζ|² − Σ z_j ζ̄_j)); g is
    holomorphic in z and its positive-degree part lives on r1 ≤ |ζ| ≤ r2.
    """
    r1 = 0.7 * R if r1 is None else r1
    r2 = 0.95 * R if r2 is None else r2
    if not 0 < r1 < r2 < R or r2 > R:
        raise ValueError("ball weight needs 0 < r1 < r2 < R")
    base = base_params(N) if base is None else list(base)
    zs = _coords(N)
    den = sym.add(sym.norm2(zs), sym.neg(sym.add(*(sym.mul(w, sym.conj(c)) for w, c in zip(base, zs)))))
    inv = sym.recip(den)
    s = Form.zero(N)
    for j, c in enumerate(zs):
        s = s + Form.dz(N, j).scale(sym.mul(sym.const(INV_2PI_I), sym.conj(c), inv))
    u = _geometric_tail(s, N)
    chi = Form.scalar(N, cutoff(N, r1, r2))
    return chi - chi.dbar().wedge(u)


def disc_weight(N: int, j: int, w: Expr, r1: float, r2: float) -> Form:
    """One-variable ball weight in coordinate j with base value w."""
    chi = Form.scalar(N, cutoff(N, r1, r2, [j]))
    s = Form.dz(N, j).scale(sym.mul(sym.const(INV_2PI_I), sym.recip(sym.add(sym.var(Var(j)), sym.neg(w)))))
    return chi - chi.dbar().wedge(s)


def product_weight(N: int, radii: Sequence[tuple[float, float]], base: Sequence[Expr] | None = None) -> Form:
    """Wedge of one-variable weights: a weight for the polydisc."""
    base = base_params(N) if base is None else list(base)
    g = Form.scalar(N, 1)
    for j in range(N):
        g = g.wedge(disc_weight(N, j, base[j], *radii[j]))
    return g


def weight_product(g1: Form, g2: Form) -> Form:
    """g1 ∧ g2 is again a weight when one factor is smooth."""
    return g1.wedge(g2)


@dataclass(frozen=True)
class WeightSpec:
    kind: str = "ball"
    R: float = 1.0
    r1: float | None = None
    r2: float | None = None
    radii: tuple = field(default_factory=tuple)

    def build(self, N: int, base: Sequence[Expr] | None = None) -> Form:
        if self.kind == "ball":
            return ball_weight(N, self.R, self.r1, self.r2, base)
        if self.kind == "product":
            radii = self.radii or tuple((0.7 * self.R, 0.95 * self.R) for _ in range(N))
            return product_weight(N, radii, base)
        raise ValueError(f"unknown weight kind {self.kind!r}")

    @property
    def inner_radius(self) -> float:
        return 0.7 * self.R if self.r1 is None else self.r1

    @property
    def outer_radius(self) -> float:
        return 0.95 * self.R if self.r2 is None else self.r2
