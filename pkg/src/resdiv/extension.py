"""Almost-holomorphic extensions to doubled space and the field Φ^z.

Doubled space C^{2n} has coordinates (ζ, ω) stored as variables 0..n-1 and
n..2n-1.  An extension φ̃(ζ, ω) agrees with φ on ω = ζ̄ and its ∂̄ vanishes to
high order there, so Φ^z = φ̃ − ∂̄φ̃ ∧ v^z is smooth and ∇-closed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial, inf
from typing import Callable, Sequence

import numpy as np
from scipy.stats import linregress

from . import symbolic as sym
from .forms import Form
from .kernels import doubled_bm
from .poly import Poly, zeta_vars
from .symbolic import Expr, Var


def default_order(n: int, M: int = 0, k: int = 0, c_n: int | None = None) -> int:
    """K = c_n + M + k with the conservative default c_n = 4n + 2."""
    return (4 * n + 2 if c_n is None else c_n) + M + k


def kernel_order(n: int) -> int:
    """Singularity order of the doubled Bochner–Martinelli form, |x|^{-(4n-1)}."""
    return 4 * n - 1


@dataclass(frozen=True)
class SmoothGerm:
    """Smooth data φ(ζ) with ∂̄-derivatives up to order ``kmax``.

    Either a polynomial in (ζ, ζ̄) (exact derivatives of every order) or an
    expression with a derivative oracle α ↦ ∂^α_{ζ̄} φ.
    """

    n: int
    expr: Expr
    poly: Poly | None = None
    oracle: Callable[[tuple], Expr] | None = None
    kmax: float = inf

    @classmethod
    def from_poly(cls, p: Poly) -> "SmoothGerm":
        return cls(p.n, p.to_expr(), p, None, inf)

    @classmethod
    def from_expr(cls, n: int, e: Expr, kmax: int | None = None) -> "SmoothGerm":
        """Expression germ; symbolic differentiation serves as the oracle."""
        def oracle(alpha):
            out = e
            for j, a in enumerate(alpha):
                for _ in range(a):
                    out = sym.partial(out, Var(j, True))
            return out

        return cls(n, e, None, oracle, inf if kmax is None else kmax)

    def dbar_derivative(self, alpha: Sequence[int]) -> Expr:
        if sum(alpha) > self.kmax:
            raise ValueError(f"derivative order {sum(alpha)} exceeds available order {self.kmax}")
        if self.poly is not None:
            p = self.poly
            for j, a in enumerate(alpha):
                for _ in range(a):
                    p = p.partial(Var(j, True))
            return p.to_expr()
        return self.oracle(tuple(alpha))

    def zbar_degree(self) -> float:
        if self.poly is None:
            return inf
        n = self.n
        return max((sum(e[n:]) for e, _ in self.poly.terms), default=0)


def _multi_indices(n: int, K: int):
    for total in range(K + 1):
        for alpha in itertools.product(range(total + 1), repeat=n):
            if sum(alpha) == total:
                yield alpha


def _offsets(n: int) -> list[Expr]:
    """ω_j − ζ̄_j in doubled coordinates."""
    return [sym.add(sym.var(Var(n + j)), sym.neg(sym.var(Var(j, True)))) for j in range(n)]


def almost_holo_finite(phi: SmoothGerm, K: int) -> Expr:
    """φ̃ = Σ_{|α|≤K} ∂^α_{ζ̄}φ(ζ) (ω − ζ̄)^α / α!."""
    n = phi.n
    if K > phi.kmax:
        raise ValueError(f"order {K} exceeds available derivative order {phi.kmax}")
    if phi.poly is not None:
        return _finite_poly(phi.poly, K).to_expr()
    off = _offsets(n)
    terms = []
    for alpha in _multi_indices(n, int(min(K, phi.zbar_degree()))):
        d = phi.dbar_derivative(alpha)
        if d.is_zero():
            continue
        fact = np.prod([factorial(a) for a in alpha])
        terms.append(sym.mul(sym.const(1.0 / fact), d, *(sym.power(o, a) for o, a in zip(off, alpha) if a)))
    return sym.add(*terms) if terms else sym.ZERO


def _lift_poly(p: Poly) -> Poly:
    """A (ζ, ζ̄)-polynomial as a polynomial on doubled space (ω-exponents zero)."""
    n = p.n
    z = (0,) * n
    return Poly(zeta_vars(2 * n), [(tuple(a) + z + tuple(b) + z, c) for c, a, b in p.split()])


def _finite_poly(p: Poly, K: int) -> Poly:
    """Expanded finite extension of a polynomial germ; exact cancellations vanish."""
    n = p.n
    V = zeta_vars(2 * n)
    offs = []
    for j in range(n):
        e_w = [0] * (4 * n)
        e_w[n + j] = 1
        e_b = [0] * (4 * n)
        e_b[2 * n + j] = 1
        offs.append(Poly(V, [(tuple(e_w), 1), (tuple(e_b), -1)]))
    out = Poly(V)
    for alpha in _multi_indices(n, int(min(K, max((sum(b) for _, _, b in p.split()), default=0)))):
        d = p
        for j, a in enumerate(alpha):
            for _ in range(a):
                d = d.partial(Var(j, True))
        if d.is_zero():
            continue
        t = _lift_poly(d) * (1.0 / np.prod([factorial(a) for a in alpha]))
        for o, a in zip(offs, alpha):
            for _ in range(a):
                t = t * o
        out = out + t
    return out.chop()


def almost_holo_series(phi: SmoothGerm, K_trunc: int, lambdas: Sequence[float] | None = None,
                       radius: float = 1.0) -> Expr:
    """Truncated Borel-type extension with cutoffs χ(λ_{|α|}² |ω − ζ̄|²) on the corrections."""
    n = phi.n
    if K_trunc > phi.kmax:
        raise ValueError(f"order {K_trunc} exceeds available derivative order {phi.kmax}")
    lambdas = [2.0**k for k in range(K_trunc + 1)] if lambdas is None else list(lambdas)
    off = _offsets(n)
    dist2 = sym.norm2(off)
    atom = sym.cutoff_atom(radius**2, (2 * radius) ** 2)
    terms = []
    for alpha in _multi_indices(n, int(min(K_trunc, phi.zbar_degree()))):
        d = phi.dbar_derivative(alpha)
        if d.is_zero():
            continue
        fact = np.prod([factorial(a) for a in alpha])
        t = sym.mul(sym.const(1.0 / fact), d, *(sym.power(o, a) for o, a in zip(off, alpha) if a))
        k = sum(alpha)
        if k:
            t = sym.mul(t, sym.apply(atom, sym.mul(sym.const(lambdas[k] ** 2), dist2)))
        terms.append(t)
    return sym.add(*terms) if terms else sym.ZERO


def extend_vector(components: Sequence[SmoothGerm], K: int, m: int, level_basis: Sequence[int]) -> Form:
    """Frame-valued extension Σ_J φ̃_J e_J in doubled space."""
    n = components[0].n
    out = Form.zero(2 * n, m)
    for germ, J in zip(components, level_basis):
        e = almost_holo_finite(germ, K)
        out = out + Form(2 * n, {(0, 0, J): e}, m)
    return out


@dataclass
class PhiField:
    form: Form
    vanishing: float
    kernel_order: int
    bounded: bool


def phi_field(phi_tilde: Form | Expr, n: int, K: float | None = None, require_bounded: bool = True) -> PhiField:
    """Φ^z = φ̃ − ∂̄φ̃ ∧ v^z in C^{2n}, v^z the BM form at (z, z̄).

    ``K`` is the vanishing order of ∂̄φ̃ along ω = ζ̄; exact holomorphy counts as ∞.
    """
    N = 2 * n
    if isinstance(phi_tilde, Expr):
        phi_tilde = Form.scalar(N, phi_tilde)
    d = phi_tilde.dbar()
    order = inf if d.is_zero() else (K if K is not None else 0)
    bounded = order >= kernel_order(n)
    if require_bounded and not bounded:
        raise ValueError(f"vanishing order {order} is below the kernel singularity order {kernel_order(n)}")
    if d.is_zero():
        return PhiField(phi_tilde, order, kernel_order(n), True)
    v = doubled_bm(n)
    out = phi_tilde
    for J, comp in split_frames(d).items():
        out = out - attach_frame(comp.wedge(v), J, phi_tilde.m)
    return PhiField(out, order, kernel_order(n), bounded)


def split_frames(x: Form) -> dict[int, Form]:
    parts: dict[int, dict] = {}
    for (h, a, f), c in x.terms.items():
        parts.setdefault(f, {})[(h, a, 0)] = c
    return {f: Form(x.N, t) for f, t in parts.items()}


def attach_frame(x: Form, J: int, m: int) -> Form:
    """x ∧ e_J for a form x without frame generators."""
    return Form(x.N, {(h, a, J): c for (h, a, _), c in x.terms.items()}, m)


@dataclass
class OrderFit:
    order: float
    residual: float
    slopes: list


def vanishing_order(e: Expr | Form, n: int, samples: int = 8, seed: int = 0, t0: float = 0.1,
                    rungs: int = 8, ratio: float = 0.5, points=None, noise_factor: float = 1e3) -> OrderFit:
    """Log-log slope of |e| against |ω − ζ̄| along random rays off the diagonal.

    The value on the diagonal itself measures the cancellation noise of each
    ray; rungs within ``noise_factor`` of it are not fitted, and rays with
    fewer than three usable rungs are skipped.  Returns the minimum slope over
    the remaining rays and the worst fit residual; an identically vanishing
    input has order ∞.
    """
    rng = np.random.default_rng(seed)
    if points is None:
        zeta = 0.4 * (rng.normal(size=(n, samples)) + 1j * rng.normal(size=(n, samples)))
    else:
        zeta = np.asarray(points, complex).reshape(n, -1)
        samples = zeta.shape[1]
    d = rng.normal(size=(n, samples)) + 1j * rng.normal(size=(n, samples))
    d /= np.linalg.norm(d, axis=0, keepdims=True)
    ts = t0 * ratio ** np.arange(rungs)

    def magnitude(t):
        binding = sym.bind(list(zeta) + list(np.conj(zeta) + t * d))
        if isinstance(e, Form):
            ev = e.evaluate(binding)
            if not ev.terms:
                return np.zeros(samples)
            return np.max(np.stack([np.broadcast_to(np.abs(c), (samples,)) for c in ev.terms.values()]), axis=0)
        return np.broadcast_to(np.abs(sym.evaluate(e, binding)), (samples,))

    mags = np.array([magnitude(t) for t in ts])
    if np.all(mags == 0):
        return OrderFit(inf, 0.0, [inf] * samples)
    noise = noise_factor * magnitude(0.0)
    slopes, resid = [], 0.0
    for s in range(samples):
        y = mags[:, s]
        if np.all(y == 0):
            slopes.append(inf)
            continue
        keep = y > noise[s]
        if keep.sum() < 3:
            slopes.append(float("nan"))
            continue
        x, y = np.log(ts[keep]), np.log(y[keep])
        fit = linregress(x, y)
        slopes.append(float(fit.slope))
        r = y - (fit.intercept + fit.slope * x)
        resid = max(resid, float(np.max(np.abs(r))))
    usable = [v for v in slopes if not np.isnan(v)]
    if not usable:
        raise ValueError("every sample ray is below the cancellation noise floor")
    return OrderFit(min(usable), resid, slopes)


def restriction_error(phi: SmoothGerm, phi_tilde: Expr, samples: int = 100, seed: int = 0) -> float:
    """max |φ̃(ζ, ζ̄) − φ(ζ)| over random points of the unit polydisc."""
    rng = np.random.default_rng(seed)
    n = phi.n
    zeta = np.sqrt(rng.random((n, samples))) * np.exp(2j * np.pi * rng.random((n, samples)))
    on = sym.evaluate(phi_tilde, sym.bind(list(zeta) + list(np.conj(zeta))))
    ref = sym.evaluate(phi.expr, sym.bind(list(zeta)))
    return float(np.max(np.abs(on - ref)))
