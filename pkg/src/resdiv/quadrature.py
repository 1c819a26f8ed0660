"""Deterministic quadrature for top-degree forms on balls, polydiscs and tori.

Each complex variable is handled in polar coordinates: Gauss–Legendre panels
in the radius and the trapezoid rule in the angle (spectrally accurate for
periodic integrands).  The ball in C^2 uses Hopf coordinates; higher
dimensions fall back to scrambled Sobol points.  A smooth partition of unity
around a declared singular point splits the integral into a base part and a
polar patch whose Jacobian r^{2N-1} absorbs Bochner–Martinelli singularities.

The quadrature core only sees densities: callables mapping an (N, P) array of
complex points to P values (or a P×K block of values).
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from . import symbolic as sym
from .forms import Form, popcount, top_densities, top_sign
from .symbolic import DivisionByZeroError, Var, _logistic_bump_jet

DEFAULT_SEED = 0x5EED


class QuadratureAbort(RuntimeError):
    """A node produced a non-finite value or a division by zero."""

    def __init__(self, message: str, node=None):
        self.node = None if node is None else np.asarray(node)
        super().__init__(message if node is None else f"{message} at node {np.round(self.node, 12).tolist()}")


@dataclass(frozen=True)
class Patch:
    center: tuple
    radius: float
    inner_fraction: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("patch radius must be positive")
        if not 0 < self.inner_fraction < 1:
            raise ValueError("inner_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Domain:
    """Integration domain.

    kind: "ball" (|ζ - c| < R), "polydisc" (|ζ_j - c_j| < R_j), "sphere"
    (|ζ - c| = R, for (N, N-1)-forms) or "circle-product" (|ζ_j - c_j| = R_j,
    for holomorphic contour integrals).  ``support`` restricts the radial
    range of a ball when the integrand is known to vanish outside it.
    """

    kind: str
    N: int
    radii: tuple = (1.0,)
    center: tuple = ()
    support: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("ball", "polydisc", "sphere", "circle-product"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")

    @property
    def center_array(self) -> np.ndarray:
        c = np.zeros(self.N, complex)
        if self.center:
            c[:] = np.asarray(self.center, complex)
        return c

    def radius(self, j: int = 0) -> float:
        return self.radii[j] if len(self.radii) > j else self.radii[0]


@dataclass(frozen=True)
class Rule:
    """Node scheme.

    radial_nodes: Gauss–Legendre nodes per radial panel; angular_nodes:
    trapezoid nodes per angle; polar_nodes: Gauss nodes in the Hopf angle;
    breaks: extra radial panel boundaries (absolute radii, per variable or
    shared); grading: number of geometric panels refining toward the centre
    (ratio ``grading_ratio``); qmc settings for real dimension > 4.
    """

    scheme: str = "tensor-gauss"
    radial_nodes: int = 32
    angular_nodes: int = 64
    polar_nodes: int = 24
    breaks: tuple = ()
    grading: int = 0
    grading_ratio: float = 0.5
    qmc_samples: int = 2**20
    qmc_batches: int = 16
    seed: int = DEFAULT_SEED
    patch: Patch | None = None
    chunk: int = 1 << 16
    threads: int = 1
    estimate_error: bool = True
    per_variable: tuple = ()

    def __post_init__(self):
        if self.scheme not in ("tensor-gauss", "qmc"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.radial_nodes < 1 or self.angular_nodes < 1:
            raise ValueError("node counts must be positive")

    def coarse(self) -> "Rule":
        return replace(self, radial_nodes=max(2, self.radial_nodes // 2),
                       angular_nodes=max(2, self.angular_nodes // 2),
                       polar_nodes=max(2, self.polar_nodes // 2),
                       qmc_samples=max(1024, self.qmc_samples // 4),
                       per_variable=tuple(replace(r, radial_nodes=max(2, r.radial_nodes // 2),
                                                  angular_nodes=max(2, r.angular_nodes // 2))
                                          for r in self.per_variable),
                       estimate_error=False)

    def for_variable(self, j: int) -> "Rule":
        return self.per_variable[j] if j < len(self.per_variable) else self


@dataclass
class QuadResult:
    value: complex | np.ndarray
    error: float
    evaluations: int
    details: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# One-dimensional building blocks
# ---------------------------------------------------------------------------


def gauss_panels(edges: Sequence[float], n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        xs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def radial_edges(R: float, rule: Rule, lo: float = 0.0, hi: float | None = None) -> list[float]:
    hi = R if hi is None else hi
    edges = {lo, hi}
    for b in rule.breaks:
        if lo < b < hi:
            edges.add(float(b))
    if rule.grading:
        first = min(e for e in edges if e > lo)
        r = first
        for _ in range(rule.grading):
            r *= rule.grading_ratio
            if r > lo:
                edges.add(r)
    return sorted(edges)


def trapezoid_angles(n: int, offset: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    t = 2 * np.pi * (np.arange(n) + offset) / n
    return t, np.full(n, 2 * np.pi / n)


def disc_rule(R: float, rule: Rule, lo: float = 0.0, hi: float | None = None):
    """Nodes ζ (complex) and area weights for the disc |ζ| < R (or an annulus)."""
    r, wr = gauss_panels(radial_edges(R, rule, lo, hi), rule.radial_nodes)
    t, wt = trapezoid_angles(rule.angular_nodes, 0.5)
    pts = (r[:, None] * np.exp(1j * t)[None, :]).ravel()
    w = ((r * wr)[:, None] * wt[None, :]).ravel()
    return pts, w


def _tensor(parts: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Tensor product of per-variable (points, weights)."""
    grids = np.meshgrid(*[p for p, _ in parts], indexing="ij")
    wgrids = np.meshgrid(*[w for _, w in parts], indexing="ij")
    pts = np.stack([g.ravel() for g in grids])
    w = np.prod(np.stack([g.ravel() for g in wgrids]), axis=0)
    return pts, w


def hopf_ball_rule(R: float, rule: Rule, lo: float = 0.0, hi: float | None = None):
    """Ball in C^2: ζ1 = ρ cosφ e^{iθ1}, ζ2 = ρ sinφ e^{iθ2}, dV = ρ³ cosφ sinφ."""
    rho, wr = gauss_panels(radial_edges(R, rule, lo, hi), rule.radial_nodes)
    phi, wp = gauss_panels([0.0, np.pi / 2], rule.polar_nodes)
    t, wt = trapezoid_angles(rule.angular_nodes, 0.5)
    P, F, T1, T2 = np.meshgrid(rho, phi, t, t, indexing="ij")
    W = np.einsum("a,b,c,d->abcd", wr * rho**3, wp * np.cos(phi) * np.sin(phi), wt, wt)
    pts = np.stack([(P * np.cos(F) * np.exp(1j * T1)).ravel(), (P * np.sin(F) * np.exp(1j * T2)).ravel()])
    return pts, W.ravel()


def sphere_rule(N: int, rule: Rule):
    """Unit sphere in C^N (N ≤ 2): points and surface weights."""
    t, wt = trapezoid_angles(rule.angular_nodes, 0.5)
    if N == 1:
        return np.exp(1j * t)[None, :], wt
    if N == 2:
        phi, wp = gauss_panels([0.0, np.pi / 2], rule.polar_nodes)
        F, T1, T2 = np.meshgrid(phi, t, t, indexing="ij")
        W = np.einsum("b,c,d->bcd", wp * np.cos(phi) * np.sin(phi), wt, wt)
        pts = np.stack([(np.cos(F) * np.exp(1j * T1)).ravel(), (np.sin(F) * np.exp(1j * T2)).ravel()])
        return pts, W.ravel()
    raise ValueError("tensor sphere rule implemented for N ≤ 2")


def _unit_ball_qmc(N: int, n: int, seed) -> tuple[np.ndarray, float]:
    """Volume-preserving map of scrambled Sobol points to the unit ball of C^N."""
    from scipy.special import ndtri

    u = qmc.Sobol(d=2 * N + 1, scramble=True, seed=seed).random(n)
    u = np.clip(u, 1e-15, 1 - 1e-15)
    g = ndtri(u[:, : 2 * N])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = u[:, 2 * N] ** (1.0 / (2 * N))
    x = g * rad[:, None]
    pts = (x[:, :N] + 1j * x[:, N:]).T
    vol = np.pi**N / math.factorial(N)
    return pts, vol / n


# ---------------------------------------------------------------------------
# Node sets
# ---------------------------------------------------------------------------


def nodes(domain: Domain, rule: Rule) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (points, weights); points has shape (N, P)."""
    N, c = domain.N, domain.center_array
    if domain.kind == "polydisc":
        parts = []
        for j in range(N):
            rj = rule.for_variable(j)
            p, w = disc_rule(domain.radius(j), rj)
            parts.append((p + c[j], w))
        return _tensor(parts)
    if domain.kind == "ball":
        R = domain.radius()
        lo, hi = domain.support if domain.support else (0.0, R)
        if rule.scheme == "qmc":
            raise ValueError("qmc nodes are produced in batches; use integrate")
        if N == 1:
            p, w = disc_rule(R, rule, lo, hi)
            return (p + c[0])[None, :], w
        if N == 2:
            p, w = hopf_ball_rule(R, rule, lo, hi)
            return p + c[:, None], w
        raise ValueError("tensor rules on balls exist for N ≤ 2; use scheme='qmc'")
    if domain.kind == "sphere":
        p, w = sphere_rule(N, rule)
        R = domain.radius()
        return R * p + c[:, None], w * R ** (2 * N - 1)
    # circle product: weights carry dζ_1...dζ_N
    parts = []
    for j in range(N):
        t, wt = trapezoid_angles(rule.for_variable(j).angular_nodes, 0.0)
        r = domain.radius(j)
        e = np.exp(1j * t)
        parts.append((c[j] + r * e, 1j * r * e * wt))
    return _tensor(parts)


def polar_patch(z: Sequence[complex], rho: float, rule: Rule, N: int | None = None):
    """Nodes in polar coordinates centred at z within radius rho; weights include r^{2N-1}."""
    z = np.asarray(z, complex)
    N = len(z) if N is None else N
    if not rho > 0:
        raise ValueError("patch radius must be positive")
    r, wr = gauss_panels([0.0, rho], rule.radial_nodes)
    s, ws = sphere_rule(N, rule)
    pts = z[:, None, None] + r[None, :, None] * s[:, None, :]
    w = (wr * r ** (2 * N - 1))[:, None] * ws[None, :]
    return pts.reshape(N, -1), w.ravel()


def patch_weight(points: np.ndarray, patch: Patch) -> np.ndarray:
    """Smooth κ: 1 within inner_fraction·radius of the centre, 0 beyond radius."""
    c = np.asarray(patch.center, complex)[:, None]
    t = np.sum(np.abs(points - c) ** 2, axis=0)
    outer = patch.radius**2
    inner = (patch.inner_fraction * patch.radius) ** 2
    return _logistic_bump_jet((outer - t) / (outer - inner), 0)


def _check_patch_inside(domain: Domain, patch: Patch):
    c = np.asarray(patch.center, complex)
    d = domain.center_array
    if domain.kind == "ball":
        ok = np.linalg.norm(c - d) + patch.radius < domain.radius()
    elif domain.kind == "polydisc":
        ok = all(abs(c[j] - d[j]) + patch.radius < domain.radius(j) for j in range(domain.N))
    else:
        ok = False
    if not ok:
        raise ValueError("polar patch escapes the integration domain")


# ---------------------------------------------------------------------------
# Evaluation and reduction
# ---------------------------------------------------------------------------


def _eval_chunked(density: Callable, pts: np.ndarray, threads: int, chunk: int):
    P = pts.shape[1]
    bounds = [(s, min(P, s + chunk)) for s in range(0, P, chunk)] or [(0, 0)]

    def run(b):
        a, e = b
        sub = pts[:, a:e]
        try:
            v = np.asarray(density(sub))
        except DivisionByZeroError as exc:
            for k in range(sub.shape[1]):
                try:
                    density(sub[:, k:k + 1])
                except DivisionByZeroError:
                    raise QuadratureAbort(f"division by zero ({exc})", sub[:, k]) from exc
            raise QuadratureAbort(str(exc)) from exc
        if v.ndim == 0:
            v = np.full(e - a, v)
        bad = ~np.isfinite(v)
        if np.any(bad):
            k = np.argwhere(bad)[0][0]
            raise QuadratureAbort("non-finite integrand value", sub[:, k])
        return v

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return np.concatenate(parts, axis=0)


def _reduce(values: np.ndarray, weights: np.ndarray):
    # np.sum reduces pairwise in a fixed order for a fixed array shape
    if values.ndim == 1:
        return np.sum(values * weights)
    return np.sum(values * weights[:, None], axis=0)


_DEBUG_TARGET: str | None = None
_DUMP_LOCK = threading.Lock()


def set_debug_nodes(path: str | None) -> None:
    """Dump every node, weight and integrand value to ``path`` (None switches dumping off)."""
    global _DEBUG_TARGET
    _DEBUG_TARGET = path


def _dump(path, pts, w, vals):
    cols = [pts.real.T, pts.imag.T, w[:, None]]
    v = vals if vals.ndim == 2 else vals[:, None]
    cols += [v.real, v.imag]
    N = pts.shape[0]
    header = " ".join([f"re_z{j + 1}" for j in range(N)] + [f"im_z{j + 1}" for j in range(N)] + ["weight"]
                      + [f"re_f{k}" for k in range(v.shape[1])] + [f"im_f{k}" for k in range(v.shape[1])])
    with _DUMP_LOCK, open(path, "a") as fh:
        np.savetxt(fh, np.hstack(cols), header=header, fmt="%.17g")


def _integrate_once(density, domain: Domain, rule: Rule, debug_nodes=None):
    if rule.scheme == "qmc":
        return _integrate_qmc(density, domain, rule, debug_nodes)
    pts, w = nodes(domain, rule)
    evals = 0
    if rule.patch is not None:
        _check_patch_inside(domain, rule.patch)
        kappa = patch_weight(pts, rule.patch)
        keep = kappa < 1.0
        pts, w = pts[:, keep], w[keep] * (1.0 - kappa[keep])
    vals = _eval_chunked(density, pts, rule.threads, rule.chunk)
    evals += pts.shape[1]
    total = _reduce(vals, w)
    if debug_nodes:
        _dump(debug_nodes, pts, w, vals)
    if rule.patch is not None:
        pp, pw = polar_patch(rule.patch.center, rule.patch.radius, rule, domain.N)
        pw = pw * patch_weight(pp, rule.patch)
        keep = pw != 0
        pp, pw = pp[:, keep], pw[keep]
        pv = _eval_chunked(density, pp, rule.threads, rule.chunk)
        evals += pp.shape[1]
        total = total + _reduce(pv, pw)
        if debug_nodes:
            _dump(debug_nodes, pp, pw, pv)
    return total, evals


def _integrate_qmc(density, domain: Domain, rule: Rule, debug_nodes=None):
    if domain.kind != "ball":
        raise ValueError("qmc is implemented for balls")
    R, c = domain.radius(), domain.center_array
    per = max(1, rule.qmc_samples // rule.qmc_batches)
    per = 1 << int(round(math.log2(per)))
    seeds = np.random.SeedSequence(rule.seed).spawn(rule.qmc_batches)
    estimates = []
    for s in seeds:
        p, w = _unit_ball_qmc(domain.N, per, np.random.default_rng(s))
        p = R * p + c[:, None]
        vals = _eval_chunked(density, p, rule.threads, rule.chunk)
        ww = np.full(per, w * R ** (2 * domain.N))
        estimates.append(_reduce(vals, ww))
        if debug_nodes:
            _dump(debug_nodes, p, ww, vals)
    est = np.array(estimates)
    mean = np.mean(est, axis=0)
    err = float(np.max(np.abs(np.std(est, axis=0, ddof=1) / np.sqrt(len(est))))) if len(est) > 1 else float("nan")
    return mean, per * rule.qmc_batches, err


def integrate(density: Callable, domain: Domain, rule: Rule | None = None, debug_nodes=None) -> QuadResult:
    """Integrate a Lebesgue density (or surface/contour density) over ``domain``."""
    rule = Rule() if rule is None else rule
    debug_nodes = debug_nodes or _DEBUG_TARGET
    if rule.scheme == "qmc":
        value, evals, err = _integrate_qmc(density, domain, rule, debug_nodes)
        return QuadResult(value, err, evals, {"scheme": "qmc", "batches": rule.qmc_batches})
    value, evals = _integrate_once(density, domain, rule, debug_nodes)
    err = float("nan")
    if rule.estimate_error:
        coarse, ce = _integrate_once(density, domain, rule.coarse())
        evals += ce
        err = float(np.max(np.abs(np.asarray(value) - np.asarray(coarse))))
    return QuadResult(value, err, evals, {"scheme": "tensor-gauss"})


# ---------------------------------------------------------------------------
# Forms
# ---------------------------------------------------------------------------


def point_binding(pts: np.ndarray, params: Mapping[Var, object] | None = None) -> dict:
    binding = sym.bind(list(pts))
    if params:
        binding.update(params)
    return binding


def param_binding(z: Sequence[complex]) -> dict:
    return {k: v for k, v in sym.bind((), list(z)).items()}


def form_density(alpha: Form, params: Mapping[Var, object] | None = None, frames: Sequence[int] | None = None):
    """Density callable for the (N,N) part of ``alpha``.

    Frame-valued forms give one output column per frame bitset in ``frames``.
    """
    dens = top_densities(alpha)
    if frames is None:
        frames = sorted(dens) if dens else [0]
        single = frames == [0]
    else:
        single = False
    exprs = [dens.get(f, sym.ZERO) for f in frames]

    def density(pts):
        binding = point_binding(pts, params)
        cache: dict = {}
        cols = [np.broadcast_to(sym.evaluate(e, binding, cache), pts.shape[1:]) for e in exprs]
        return cols[0] if single else np.stack(cols, axis=1)

    density.frames = frames
    return density


def integrate_form(alpha: Form, domain: Domain, rule: Rule | None = None,
                   params: Mapping[Var, object] | None = None, debug_nodes=None) -> QuadResult:
    """∫ of the (N,N) part of a form over a ball or polydisc."""
    if domain.kind not in ("ball", "polydisc"):
        raise ValueError("integrate_form needs a solid domain")
    full = (1 << alpha.N) - 1
    if any(h != full or a != full for h, a, _ in alpha.terms):
        raise ValueError("integrate_form needs a pure (N,N) form; project with bidegree_component")
    return integrate(form_density(alpha, params), domain, rule, debug_nodes)


def integrate_sphere_form(alpha: Form, domain: Domain, rule: Rule | None = None,
                          params: Mapping[Var, object] | None = None) -> QuadResult:
    """∫ over the sphere |ζ − c| = R of a form of total degree 2N − 1 (boundary orientation).

    A term missing dζ̄_j equals (−1)^{N+j} ι_{∂/∂ζ̄_j} of the top monomial, and
    one missing dζ_j equals (−1)^j ι_{∂/∂ζ_j}; the contraction against the
    outward unit normal ν gives ν_j/2 and conj(ν_j)/2 respectively.
    """
    N = alpha.N
    full = (1 << N) - 1
    lam0 = top_sign(N)
    pieces = []
    for (h, a, f), c in alpha.terms.items():
        if f:
            raise ValueError("frame-valued forms are not supported on spheres")
        if h == full and popcount(a) == N - 1:
            j = (full & ~a).bit_length() - 1
            pieces.append((c, j, False, (-1) ** (N + j)))
        elif a == full and popcount(h) == N - 1:
            j = (full & ~h).bit_length() - 1
            pieces.append((c, j, True, (-1) ** j))
        else:
            raise ValueError("sphere integration needs degree 2N-1 forms")
    center = domain.center_array[:, None]
    R = domain.radius()

    def density(pts):
        nu = (pts - center) / R
        binding = point_binding(pts, params)
        cache: dict = {}
        out = np.zeros(pts.shape[1], complex)
        for c, j, holo, sign in pieces:
            val = sym.evaluate(c, binding, cache)
            normal = np.conj(nu[j]) / 2 if holo else nu[j] / 2
            out = out + sign * lam0 * val * normal
        return out

    return integrate(density, domain, rule)


def contour_integral(f: Callable, centers: Sequence[complex], radii: Sequence[float], n: int = 128):
    """∮...∮ f(ζ) dζ_1...dζ_N over a product of circles (trapezoid rule)."""
    dom = Domain("circle-product", len(centers), tuple(radii), tuple(centers))
    return integrate(f, dom, Rule(angular_nodes=n, estimate_error=False)).value
