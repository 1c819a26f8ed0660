"""Exterior algebra of (p,q)-forms with optional odd frame generators.

A term is a coefficient times a canonical monomial

    dζ_H ∧ dζ̄_A ∧ e_F

with H, A, F stored as bitsets and each block in ascending index order.  The
frame generators e_1..e_m are a basis of the Koszul module, treated as odd, so
that Hom-valued forms and their compositions live in one graded algebra and
every sign is a permutation parity.

Coefficients are either symbolic :class:`Expr` values or numbers/numpy arrays
(after :meth:`Form.evaluate`).  All operations are pure.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import symbolic as sym
from .symbolic import Expr, Var

TWO_PI_I = 2j * np.pi


def popcount(x: int) -> int:
    return bin(x).count("1")


def bits(x: int) -> list[int]:
    out, i = [], 0
    while x:
        if x & 1:
            out.append(i)
        x >>= 1
        i += 1
    return out


def mask(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


def _inversions(x: int, y: int) -> int:
    """Pairs (i in x, j in y) with i > j: parity of merging x before y."""
    n = 0
    for j in bits(y):
        n += popcount(x >> (j + 1))
    return n


def _below(x: int, j: int) -> int:
    return popcount(x & ((1 << j) - 1))


def _is_zero(c) -> bool:
    if isinstance(c, Expr):
        return c.is_zero()
    if isinstance(c, np.ndarray):
        return False
    return c == 0


def _neg(c):
    return sym.neg(c) if isinstance(c, Expr) else -c


def _signed(c, odd: bool):
    return _neg(c) if odd else c


class Form:
    """Finite sum of coefficient × canonical exterior monomial."""

    __slots__ = ("N", "m", "terms")

    def __init__(self, N: int, terms: Mapping[tuple[int, int, int], object] | None = None, m: int = 0):
        if N < 1 or N > 32:
            raise ValueError("ambient dimension must be in [1, 32]")
        self.N = N
        self.m = m
        self.terms: dict[tuple[int, int, int], object] = {}
        for key, c in (terms or {}).items():
            if not _is_zero(c):
                self.terms[key] = c

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, N: int, m: int = 0) -> "Form":
        return cls(N, {}, m)

    @classmethod
    def scalar(cls, N: int, c, m: int = 0) -> "Form":
        if isinstance(c, (int, float, complex)):
            c = sym.const(c)
        return cls(N, {(0, 0, 0): c}, m)

    @classmethod
    def dz(cls, N: int, j: int, m: int = 0) -> "Form":
        return cls(N, {(1 << j, 0, 0): sym.ONE}, m)

    @classmethod
    def dzbar(cls, N: int, j: int, m: int = 0) -> "Form":
        return cls(N, {(0, 1 << j, 0): sym.ONE}, m)

    @classmethod
    def frame(cls, N: int, m: int, indices: Sequence[int], coeff=sym.ONE) -> "Form":
        """The frame monomial e_{i1}∧...∧e_{ik} (indices in the given order)."""
        out = cls(N, {(0, 0, 0): coeff}, m)
        for i in indices:
            out = out.wedge(cls(N, {(0, 0, 1 << i): sym.ONE}, m))
        return out

    # basic structure --------------------------------------------------------
    def _check(self, other: "Form"):
        if self.N != other.N:
            raise ValueError(f"ambient dimension mismatch: {self.N} vs {other.N}")

    def _frames(self, other: "Form") -> int:
        return max(self.m, other.m)

    def __repr__(self) -> str:
        if not self.terms:
            return "Form(0)"
        parts = []
        for (h, a, f), c in sorted(self.terms.items()):
            gens = [f"dζ{j + 1}" for j in bits(h)] + [f"dζ̄{j + 1}" for j in bits(a)] + [f"e{j + 1}" for j in bits(f)]
            parts.append(f"({c!r})" + ("·" + "∧".join(gens) if gens else ""))
        return " + ".join(parts)

    def is_zero(self) -> bool:
        return not self.terms

    def degree_set(self) -> set[int]:
        return {popcount(h) + popcount(a) + popcount(f) for h, a, f in self.terms}

    def bidegrees(self) -> set[tuple[int, int]]:
        return {(popcount(h), popcount(a)) for h, a, _ in self.terms}

    def coeff(self, holo: Iterable[int] = (), anti: Iterable[int] = (), frame: Iterable[int] = ()):
        return self.terms.get((mask(holo), mask(anti), mask(frame)), sym.ZERO)

    def map_coeffs(self, fn: Callable[[object], object]) -> "Form":
        return Form(self.N, {k: fn(c) for k, c in self.terms.items()}, self.m)

    # linear structure -------------------------------------------------------
    def __add__(self, other: "Form") -> "Form":
        if not isinstance(other, Form):
            other = Form.scalar(self.N, other, self.m)
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out[k] + c if k in out else c
        return Form(self.N, out, self._frames(other))

    __radd__ = __add__

    def __neg__(self) -> "Form":
        return self.map_coeffs(_neg)

    def __sub__(self, other: "Form") -> "Form":
        if not isinstance(other, Form):
            other = Form.scalar(self.N, other, self.m)
        return self + (-other)

    def __rsub__(self, other) -> "Form":
        return (-self) + other

    def scale(self, c) -> "Form":
        """Multiply every coefficient by a 0-form coefficient ``c``."""
        if isinstance(c, Expr):
            return self.map_coeffs(lambda x: sym.mul(c, x))
        return self.map_coeffs(lambda x: c * x)

    def __mul__(self, other):
        if isinstance(other, Form):
            return self.wedge(other)
        if isinstance(other, (int, float, complex)) and self._symbolic():
            other = sym.const(other)
        return self.scale(other)

    __rmul__ = __mul__

    def __xor__(self, other: "Form") -> "Form":
        return self.wedge(other)

    def _symbolic(self) -> bool:
        return all(isinstance(c, Expr) for c in self.terms.values())

    # products ---------------------------------------------------------------
    def wedge(self, other: "Form") -> "Form":
        self._check(other)
        out: dict = {}
        for (h1, a1, f1), c1 in self.terms.items():
            n_a1, n_f1 = popcount(a1), popcount(f1)
            for (h2, a2, f2), c2 in other.terms.items():
                if h1 & h2 or a1 & a2 or f1 & f2:
                    continue
                s = popcount(h2) * (n_a1 + n_f1) + popcount(a2) * n_f1
                s += _inversions(h1, h2) + _inversions(a1, a2) + _inversions(f1, f2)
                c = c1 * c2
                c = _signed(c, s & 1)
                k = (h1 | h2, a1 | a2, f1 | f2)
                out[k] = out[k] + c if k in out else c
        return Form(self.N, out, self._frames(other))

    # derivations ------------------------------------------------------------
    def dbar(self) -> "Form":
        """∂̄ in the integration variables; parameters are constants."""
        out: dict = {}
        for (h, a, f), c in self.terms.items():
            if not isinstance(c, Expr):
                raise TypeError("dbar needs symbolic coefficients")
            nh = popcount(h)
            for j in range(self.N):
                if a >> j & 1:
                    continue
                d = sym.partial(c, Var(j, True))
                if d.is_zero():
                    continue
                d = _signed(d, (nh + _below(a, j)) & 1)
                k = (h, a | (1 << j), f)
                out[k] = out[k] + d if k in out else d
        return Form(self.N, out, self.m)

    def interior(self, w: Sequence) -> "Form":
        """Contraction with Σ w_j ∂/∂ζ_j (an odd derivation)."""
        if len(w) != self.N:
            raise ValueError(f"need {self.N} contraction weights, got {len(w)}")
        w = [sym._lift(x) if not isinstance(x, (np.ndarray, Expr)) and self._symbolic() else x for x in w]
        out: dict = {}
        for (h, a, f), c in self.terms.items():
            for p, j in enumerate(bits(h)):
                if _is_zero(w[j]):
                    continue
                d = _signed(w[j] * c, p & 1)
                k = (h & ~(1 << j), a, f)
                out[k] = out[k] + d if k in out else d
        return Form(self.N, out, self.m)

    def frame_interior(self, w: Sequence) -> "Form":
        """Contraction of the frame generators with Σ w_i e_i^* (odd derivation)."""
        if len(w) < self.m:
            raise ValueError(f"need {self.m} frame weights, got {len(w)}")
        out: dict = {}
        for (h, a, f), c in self.terms.items():
            base = popcount(h) + popcount(a)
            for p, i in enumerate(bits(f)):
                if _is_zero(w[i]):
                    continue
                d = _signed(w[i] * c, (base + p) & 1)
                k = (h, a, f & ~(1 << i))
                out[k] = out[k] + d if k in out else d
        return Form(self.N, out, self.m)

    def nabla(self, base: Sequence) -> "Form":
        """∇ = interior(2πi(ζ − base)) − ∂̄, base given as parameter expressions."""
        w = [sym.mul(sym.const(TWO_PI_I), sym.add(sym.var(Var(j)), sym.neg(sym._lift(base[j]))))
             for j in range(self.N)]
        return self.interior(w) - self.dbar()

    # projections -------------------------------------------------------------
    def bidegree_component(self, p: int, q: int) -> "Form":
        return Form(self.N, {k: c for k, c in self.terms.items()
                             if popcount(k[0]) == p and popcount(k[1]) == q}, self.m)

    def frame_component(self, level: int) -> "Form":
        return Form(self.N, {k: c for k, c in self.terms.items() if popcount(k[2]) == level}, self.m)

    def scalar_part(self):
        return self.terms.get((0, 0, 0), sym.ZERO)

    # evaluation -------------------------------------------------------------
    def evaluate(self, point: Mapping[Var, object], cache: dict | None = None) -> "Form":
        cache = {} if cache is None else cache
        return Form(self.N, {k: sym.evaluate(c, point, cache) if isinstance(c, Expr) else c
                             for k, c in self.terms.items()}, self.m)

    def simplify(self) -> "Form":
        return self.map_coeffs(lambda c: sym.simplify(c) if isinstance(c, Expr) else c)

    def max_abs(self) -> float:
        """Largest coefficient magnitude of a numeric form."""
        vals = [np.max(np.abs(c)) for c in self.terms.values()]
        return float(max(vals)) if vals else 0.0


def top_sign(N: int) -> complex:
    """λ/c for c·dζ_1..dζ_N∧dζ̄_1..dζ̄_N: reorder to pairs, then dζ∧dζ̄ = −2i dx∧dy."""
    return (-1) ** (N * (N - 1) // 2) * (-2j) ** N


def top_density(alpha: Form):
    """Lebesgue density of a form of pure bidegree (N,N) without frame generators."""
    full = (1 << alpha.N) - 1
    for h, a, f in alpha.terms:
        if h != full or a != full or f:
            raise ValueError("top_density needs a pure (N,N) form")
    c = alpha.terms.get((full, full, 0), sym.ZERO)
    s = top_sign(alpha.N)
    return sym.mul(sym.const(s), c) if isinstance(c, Expr) else s * c


def top_densities(alpha: Form) -> dict[int, object]:
    """Densities of the (N,N) part of ``alpha`` per frame monomial e_F."""
    full = (1 << alpha.N) - 1
    s = top_sign(alpha.N)
    out = {}
    for (h, a, f), c in alpha.terms.items():
        if h == full and a == full:
            out[f] = sym.mul(sym.const(s), c) if isinstance(c, Expr) else s * c
    return out


def binom_basis(m: int, k: int) -> list[int]:
    """Frame bitsets of size k in lexicographic index order."""
    return [mask(c) for c in combinations(range(m), k)]


class HomForm:
    """Form-valued matrix of a map from frame level ``src`` to level ``dst``.

    The column for basis element e_J holds the image op(e_J) = Σ_I ω_IJ ∧ e_I.
    Composition carries the super sign (−1)^{deg β·(|I|−|K|)}, which is what
    the one-algebra picture of :class:`Form` produces.
    """

    def __init__(self, N: int, m: int, src: int, dst: int, entries: Sequence[Sequence[Form]]):
        self.N, self.m, self.src, self.dst = N, m, src, dst
        self.rows = binom_basis(m, dst)
        self.cols = binom_basis(m, src)
        self.entries = [list(r) for r in entries]
        if len(self.entries) != len(self.rows) or any(len(r) != len(self.cols) for r in self.entries):
            raise ValueError("HomForm shape does not match frame ranks")
        for r in self.entries:
            for e in r:
                if e.N != N:
                    raise ValueError("HomForm entries must share the ambient dimension")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.cols)

    @classmethod
    def zero(cls, N, m, src, dst) -> "HomForm":
        r, c = len(binom_basis(m, dst)), len(binom_basis(m, src))
        return cls(N, m, src, dst, [[Form.zero(N) for _ in range(c)] for _ in range(r)])

    @classmethod
    def identity(cls, N, m, level) -> "HomForm":
        n = len(binom_basis(m, level))
        return cls(N, m, level, level, [[Form.scalar(N, 1 if i == j else 0) for j in range(n)] for i in range(n)])

    @classmethod
    def from_operator(cls, N: int, m: int, src: int, dst: int, op: Callable[[Form], Form]) -> "HomForm":
        """Matrix of a frame-level operator acting on the big algebra."""
        rows = binom_basis(m, dst)
        cols = binom_basis(m, src)
        ent = [[Form.zero(N) for _ in cols] for _ in rows]
        row_of = {r: i for i, r in enumerate(rows)}
        for j, J in enumerate(cols):
            img = op(Form.frame(N, m, bits(J)))
            acc: dict[int, dict] = {}
            for (h, a, f), c in img.terms.items():
                if f not in row_of:
                    if not _is_zero(c):
                        raise ValueError("operator image leaves the target level")
                    continue
                acc.setdefault(f, {})[(h, a, 0)] = c
            for f, t in acc.items():
                ent[row_of[f]][j] = Form(N, t)
        return cls(N, m, src, dst, ent)

    def apply(self, x: Form) -> Form:
        """Image of a frame-valued form x = Σ_K x_K ∧ e_K at level ``src``."""
        out = Form.zero(self.N, self.m)
        shift = self.dst - self.src
        for j, J in enumerate(self.cols):
            xk = Form(self.N, {(h, a, 0): c for (h, a, f), c in x.terms.items() if f == J})
            if xk.is_zero():
                continue
            xk = _parity_twist(xk, shift)
            for i, I in enumerate(self.rows):
                if self.entries[i][j].is_zero():
                    continue
                out = out + self.entries[i][j].wedge(xk).wedge(Form(self.N, {(0, 0, I): sym.ONE}, self.m))
        return out

    def compose(self, other: "HomForm") -> "HomForm":
        """(self ∘ other), other applied first."""
        if other.dst != self.src or other.N != self.N:
            raise ValueError("HomForm composition shape mismatch")
        shift = self.dst - self.src
        ent = []
        for i in range(len(self.rows)):
            row = []
            for j in range(len(other.cols)):
                acc = Form.zero(self.N)
                for k in range(len(self.cols)):
                    a, b = self.entries[i][k], other.entries[k][j]
                    if a.is_zero() or b.is_zero():
                        continue
                    acc = acc + a.wedge(_parity_twist(b, shift))
                row.append(acc)
            ent.append(row)
        return HomForm(self.N, self.m, other.src, self.dst, ent)

    def __add__(self, other: "HomForm") -> "HomForm":
        if (self.src, self.dst) != (other.src, other.dst):
            raise ValueError("HomForm sum shape mismatch")
        return HomForm(self.N, self.m, self.src, self.dst,
                       [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __sub__(self, other: "HomForm") -> "HomForm":
        return self + other.scale(-1)

    def scale(self, c) -> "HomForm":
        return HomForm(self.N, self.m, self.src, self.dst,
                       [[e.scale(sym.const(c)) if e._symbolic() else e.scale(c) for e in r] for r in self.entries])

    def map(self, fn: Callable[[Form], Form]) -> "HomForm":
        return HomForm(self.N, self.m, self.src, self.dst, [[fn(e) for e in r] for r in self.entries])

    def nabla(self, base: Sequence) -> "HomForm":
        return self.map(lambda e: e.nabla(base))

    def evaluate(self, point, cache=None) -> "HomForm":
        cache = {} if cache is None else cache
        return self.map(lambda e: e.evaluate(point, cache))

    def max_abs(self) -> float:
        return max((e.max_abs() for r in self.entries for e in r), default=0.0)


def _parity_twist(x: Form, shift: int) -> Form:
    """Multiply each term of x by (−1)^{deg·shift}."""
    if shift % 2 == 0:
        return x
    return Form(x.N, {k: _signed(c, (popcount(k[0]) + popcount(k[1])) & 1) for k, c in x.terms.items()}, x.m)
