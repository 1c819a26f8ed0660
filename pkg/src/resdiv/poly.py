"""Sparse polynomials in a fixed tuple of variables with complex coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import symbolic as sym
from .symbolic import Expr, Var


def zeta_vars(n: int) -> tuple[Var, ...]:
    return tuple(Var(j) for j in range(n)) + tuple(Var(j, True) for j in range(n))


@dataclass(frozen=True)
class Poly:
    """Σ c_e ∏ v_i^{e_i} over ``vars``; zero coefficients are dropped."""

    vars: tuple
    terms: tuple  # sorted ((exponent tuple, complex), ...)

    def __init__(self, vars: Sequence[Var], terms: Mapping[tuple, complex] | Iterable = ()):
        vars = tuple(vars)
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[tuple, complex] = {}
        for e, c in items:
            e = tuple(int(x) for x in e)
            if len(e) != len(vars) or min(e, default=0) < 0:
                raise ValueError(f"bad exponent {e} for {len(vars)} variables")
            acc[e] = acc.get(e, 0) + complex(c)
        object.__setattr__(self, "vars", vars)
        object.__setattr__(self, "terms", tuple(sorted((e, c) for e, c in acc.items() if c != 0)))

    # constructors ---------------------------------------------------------
    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[complex, Sequence[int], Sequence[int]]]) -> "Poly":
        """Terms (coefficient, ζ-exponents, ζ̄-exponents) in n variables."""
        return cls(zeta_vars(n), [(tuple(a) + tuple(b), c) for c, a, b in terms])

    @classmethod
    def monomial(cls, n: int, zexp: Sequence[int], zbarexp: Sequence[int] | None = None, c: complex = 1) -> "Poly":
        return cls.from_terms(n, [(c, zexp, zbarexp or [0] * n)])

    @classmethod
    def coordinate(cls, n: int, j: int) -> "Poly":
        e = [0] * n
        e[j] = 1
        return cls.monomial(n, e)

    @classmethod
    def const(cls, n: int, c: complex) -> "Poly":
        return cls.monomial(n, [0] * n, None, c)

    # structure --------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.vars) // 2

    def as_dict(self) -> dict:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def is_holomorphic(self) -> bool:
        return all(e[i] == 0 for e, _ in self.terms for i, v in enumerate(self.vars) if v.conjugated)

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def split(self) -> list[tuple[complex, tuple, tuple]]:
        """Terms as (coefficient, ζ-exponents, ζ̄-exponents) for ζ-variable polys."""
        n = self.n
        return [(c, e[:n], e[n:]) for e, c in self.terms]

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms:
            mon = "·".join(f"{v!r}^{k}" if k > 1 else repr(v) for v, k in zip(self.vars, e) if k)
            parts.append(f"{c:g}" + ("·" + mon if mon else ""))
        return " + ".join(parts)

    # algebra ----------------------------------------------------------------
    def _same(self, other: "Poly"):
        if self.vars != other.vars:
            raise ValueError("polynomials over different variable tuples")

    def __add__(self, other: "Poly") -> "Poly":
        self._same(other)
        return Poly(self.vars, list(self.terms) + list(other.terms))

    def __neg__(self) -> "Poly":
        return Poly(self.vars, [(e, -c) for e, c in self.terms])

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly(self.vars, [(e, c * other) for e, c in self.terms])
        self._same(other)
        out = []
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                out.append((tuple(a + b for a, b in zip(e1, e2)), c1 * c2))
        return Poly(self.vars, out)

    __rmul__ = __mul__

    def chop(self, tol: float = 1e-13) -> "Poly":
        """Drop coefficients below tol relative to the largest one."""
        if not self.terms:
            return self
        big = max(abs(c) for _, c in self.terms)
        return Poly(self.vars, [(e, c) for e, c in self.terms if abs(c) > tol * big])

    def partial(self, v: Var) -> "Poly":
        i = self.vars.index(v)
        out = []
        for e, c in self.terms:
            if e[i]:
                e2 = list(e)
                e2[i] -= 1
                out.append((tuple(e2), c * e[i]))
        return Poly(self.vars, out)

    def conj(self) -> "Poly":
        """Complex conjugate, for polys over ζ-variables and their conjugates."""
        idx = {v: i for i, v in enumerate(self.vars)}
        out = []
        for e, c in self.terms:
            e2 = [0] * len(e)
            for i, v in enumerate(self.vars):
                e2[idx[v.conj()]] = e[i]
            out.append((tuple(e2), c.conjugate()))
        return Poly(self.vars, out)

    # conversion ---------------------------------------------------------------
    def to_expr(self, rename: Mapping[Var, Expr] | None = None) -> Expr:
        rename = rename or {}
        leaves = [rename.get(v, sym.var(v)) for v in self.vars]
        out = []
        for e, c in self.terms:
            out.append(sym.mul(sym.const(c), *(sym.power(x, k) for x, k in zip(leaves, e) if k)))
        return sym.add(*out) if out else sym.ZERO

    def at_params(self) -> Expr:
        """The same polynomial with ζ replaced by the base-point parameters z."""
        return self.to_expr({v: sym.var(Var(v.index, v.conjugated, True)) for v in self.vars})

    def __call__(self, *values):
        """Evaluate at ζ = values (one value or array per coordinate); conjugates are derived."""
        vals = {}
        for v in self.vars:
            if v.conjugated:
                vals[v] = np.conj(np.asarray(values[v.index], complex))
            else:
                vals[v] = np.asarray(values[v.index], complex)
        out = 0
        for e, c in self.terms:
            t = c
            for v, k in zip(self.vars, e):
                if k:
                    t = t * vals[v] ** k
            out = out + t
        return out
