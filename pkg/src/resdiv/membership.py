"""Membership of smooth polynomial germs in powers of monomial ideals.

Germs are polynomials in (z, z̄) with exact (Gaussian rational) coefficients.
The derivative bound |∂^α_{z̄}φ| ≤ C|a|^{μ+r−1} is decided monomial by
monomial via the Newton polyhedron of the ideal, in exact arithmetic, and a
passing germ is written as Σ ξ_I a^I with explicit smooth coefficients ξ_I.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


# ---------------------------------------------------------------------------
# Exact coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QQi:
    """Gaussian rational re + i·im."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @classmethod
    def of(cls, x) -> "QQi":
        if isinstance(x, QQi):
            return x
        if isinstance(x, (tuple, list)):
            return cls(Fraction(x[0]), Fraction(x[1]))
        if isinstance(x, complex):
            return cls(Fraction(x.real), Fraction(x.imag))
        if isinstance(x, str):
            return cls(Fraction(x))
        return cls(Fraction(x))

    def __add__(self, o):
        o = QQi.of(o)
        return QQi(self.re + o.re, self.im + o.im)

    def __mul__(self, o):
        o = QQi.of(o)
        return QQi(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __bool__(self):
        return bool(self.re or self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __abs__(self):
        return abs(complex(self))

    def to_json(self) -> list[str]:
        return [str(self.re), str(self.im)]


@dataclass(frozen=True)
class GermTerm:
    coeff: QQi
    a: tuple  # holomorphic exponents
    b: tuple  # anti-holomorphic exponents

    def __post_init__(self):
        object.__setattr__(self, "coeff", QQi.of(self.coeff))
        object.__setattr__(self, "a", tuple(int(x) for x in self.a))
        object.__setattr__(self, "b", tuple(int(x) for x in self.b))
        if len(self.a) != len(self.b) or min(self.a + self.b, default=0) < 0:
            raise ValueError("bad exponents")


def normalize(terms: Iterable[GermTerm]) -> list[GermTerm]:
    """Merge equal monomials and drop zeros; deterministic order."""
    acc: dict[tuple, QQi] = {}
    for t in terms:
        key = (t.a, t.b)
        acc[key] = acc.get(key, QQi()) + t.coeff
    return [GermTerm(c, a, b) for (a, b), c in sorted(acc.items()) if c]


def germ(triples: Iterable[tuple]) -> list[GermTerm]:
    """Build a germ from (coefficient, a, b) triples."""
    return normalize(GermTerm(QQi.of(c), a, b) for c, a, b in triples)


def dbar_derivative(terms: Sequence[GermTerm], alpha: Sequence[int]) -> list[GermTerm]:
    out = []
    for t in terms:
        if any(x < y for x, y in zip(t.b, alpha)):
            continue
        c = t.coeff
        for bi, ai in zip(t.b, alpha):
            for j in range(ai):
                c = c * (bi - j)
        out.append(GermTerm(c, t.a, tuple(x - y for x, y in zip(t.b, alpha))))
    return normalize(out)


def dbar_indices(terms: Sequence[GermTerm]) -> list[tuple]:
    """All α with α_i ≤ max z̄_i-degree (every possibly nonzero ∂^α_{z̄})."""
    if not terms:
        return [()]
    n = len(terms[0].a)
    top = [max(t.b[i] for t in terms) for i in range(n)]
    return list(itertools.product(*(range(d + 1) for d in top)))


# ---------------------------------------------------------------------------
# Ideals and Newton polyhedra
# ---------------------------------------------------------------------------


def divides(g: Sequence[int], a: Sequence[int]) -> bool:
    return all(x <= y for x, y in zip(g, a))


@dataclass(frozen=True)
class MonomialIdeal:
    generators: tuple
    n: int

    def __post_init__(self):
        gens = tuple(tuple(int(x) for x in g) for g in self.generators)
        object.__setattr__(self, "generators", gens)
        if not gens:
            raise ValueError("ideal needs at least one generator")
        if any(len(g) != self.n or min(g) < 0 for g in gens):
            raise ValueError("generator exponents must be nonnegative vectors of length n")
        for i, g in enumerate(gens):
            for j, h in enumerate(gens):
                if i != j and divides(g, h):
                    raise ValueError(f"generators are not minimal: z^{g} divides z^{h}")

    @classmethod
    def minimal(cls, generators: Iterable[Sequence[int]], n: int | None = None) -> "MonomialIdeal":
        gens = sorted({tuple(int(x) for x in g) for g in generators})
        n = len(gens[0]) if n is None else n
        keep = [g for g in gens if not any(h != g and divides(h, g) for h in gens)]
        return cls(tuple(keep), n)

    @property
    def m(self) -> int:
        return len(self.generators)

    @property
    def mu(self) -> int:
        return min(self.m, self.n)

    def contains_monomial(self, a: Sequence[int]) -> bool:
        return any(divides(g, a) for g in self.generators)

    def in_newton_polyhedron(self, point: Sequence[Fraction]) -> bool:
        """point ∈ conv(generators) + R^n_{≥0}, decided exactly."""
        return newton_feasible([[Fraction(x) for x in g] for g in self.generators], [Fraction(x) for x in point])

    def abs_value(self, z: np.ndarray) -> np.ndarray:
        """|a(z)| = Σ_j |z^{g_j}| at points z of shape (n, P)."""
        z = np.abs(np.asarray(z))
        return sum(np.prod(z ** np.asarray(g)[:, None], axis=0) for g in self.generators)


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction] | None:
    """Gaussian elimination over Q for a square system; None if singular."""
    n = len(A)
    M = [row[:] + [bb] for row, bb in zip(A, b)]
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return None
        M[c], M[piv] = M[piv], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c] / M[c][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[c])]
    return [M[i][n] / M[i][i] for i in range(n)]


def newton_feasible(gens: list[list[Fraction]], p: list[Fraction]) -> bool:
    """Exists λ ≥ 0, Σλ = 1, s ≥ 0 with Σ λ_i g_i + s = p.

    The feasible set is a pointed polyhedron, so it is nonempty iff it has a
    vertex; vertices are enumerated as basic solutions of the equality system.
    """
    m, n = len(gens), len(p)
    cols = [[g[k] for k in range(n)] + [Fraction(1)] for g in gens]
    cols += [[Fraction(1 if k == j else 0) for k in range(n)] + [Fraction(0)] for j in range(n)]
    rhs = list(p) + [Fraction(1)]
    rows = n + 1
    # quick accept: some generator lies below p
    if any(all(g[k] <= p[k] for k in range(n)) for g in gens):
        return True
    for basis in itertools.combinations(range(m + n), rows):
        A = [[cols[j][i] for j in basis] for i in range(rows)]
        x = _solve_exact(A, rhs)
        if x is not None and all(v >= 0 for v in x):
            return True
    return False


# ---------------------------------------------------------------------------
# Briançon–Skoda type condition and certificates
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    passed: bool
    exponent: int
    witness: dict | None = None
    checked: int = 0
    samples: int = 0

    def as_dict(self) -> dict:
        return {"passed": self.passed, "exponent": self.exponent, "witness": self.witness,
                "monomials_checked": self.checked, "spot_samples": self.samples}


def bs_condition(phi: Sequence[GermTerm], ideal: MonomialIdeal, r: int, mu: int | None = None,
                 samples: int = 1000, seed: int = 0) -> Verdict:
    """Decide |∂^α_{z̄}φ| ≤ C|a|^{μ+r−1} for all α, monomial by monomial.

    z^{a'}z̄^{b'} satisfies the bound near 0 iff (a'+b')/(μ+r−1) lies in the
    Newton polyhedron of the ideal (boundary included).  A passing verdict is
    corroborated at ``samples`` points of the unit polydisc with C = Σ|c|.
    """
    phi = normalize(phi)
    mu = ideal.mu if mu is None else mu
    k = mu + r - 1
    checked = 0
    for alpha in dbar_indices(phi):
        for t in dbar_derivative(phi, alpha):
            checked += 1
            pt = [Fraction(x + y, k) for x, y in zip(t.a, t.b)]
            if not ideal.in_newton_polyhedron(pt):
                return Verdict(False, k, {"alpha": list(alpha), "a": list(t.a), "b": list(t.b),
                                          "coeff": t.coeff.to_json()}, checked)
    n_s = _spot_check(phi, ideal, k, samples, seed) if samples and phi else 0
    return Verdict(True, k, None, checked, n_s)


def _eval_terms(terms: Sequence[GermTerm], z: np.ndarray) -> np.ndarray:
    out = np.zeros(z.shape[1], complex)
    for t in terms:
        v = complex(t.coeff) * np.ones(z.shape[1], complex)
        for j in range(z.shape[0]):
            v = v * z[j] ** t.a[j] * np.conj(z[j]) ** t.b[j]
        out += v
    return out


def _spot_check(phi, ideal: MonomialIdeal, k: int, samples: int, seed: int) -> int:
    rng = np.random.default_rng(seed)
    n = ideal.n
    rad = np.exp(rng.uniform(np.log(1e-3), 0, size=(n, samples)))
    z = rad * np.exp(2j * np.pi * rng.random((n, samples)))
    bound = ideal.abs_value(z) ** k
    for alpha in dbar_indices(phi):
        d = dbar_derivative(phi, alpha)
        if not d:
            continue
        C = sum(abs(t.coeff) for t in d)
        val = np.abs(_eval_terms(d, z))
        bad = val > C * bound * (1 + 1e-9) + 1e-300
        if np.any(bad):
            i = int(np.argmax(bad))
            raise AssertionError(f"spot check contradicts the symbolic verdict at z = {z[:, i]}, α = {alpha}")
    return samples


@dataclass
class Certificate:
    ok: bool
    xi: dict = field(default_factory=dict)  # multiset (tuple of generator indices) -> germ terms
    failed_term: GermTerm | None = None

    def as_dict(self) -> dict:
        if not self.ok:
            t = self.failed_term
            return {"ok": False, "failed_term": {"a": list(t.a), "b": list(t.b), "coeff": t.coeff.to_json()}}
        return {"ok": True, "xi": [{"generators": list(I), "terms": [
            {"coeff": t.coeff.to_json(), "zexp": list(t.a), "zbarexp": list(t.b)} for t in terms]}
            for I, terms in sorted(self.xi.items())]}


def bs_certificate(phi: Sequence[GermTerm], ideal: MonomialIdeal, r: int) -> Certificate:
    """φ = Σ_{|I|=r} ξ_I a^I by exact division of each term by the first r-fold generator product dividing it."""
    phi = normalize(phi)
    products = []
    for I in itertools.combinations_with_replacement(range(ideal.m), r):
        e = tuple(sum(ideal.generators[i][j] for i in I) for j in range(ideal.n))
        products.append((I, e))
    xi: dict[tuple, list] = {}
    for t in phi:
        for I, e in products:
            if divides(e, t.a):
                xi.setdefault(I, []).append(GermTerm(t.coeff, tuple(x - y for x, y in zip(t.a, e)), t.b))
                break
        else:
            return Certificate(False, {}, t)
    cert = Certificate(True, {I: normalize(v) for I, v in xi.items()})
    if expand_certificate(cert, ideal) != phi:
        raise AssertionError("certificate does not re-expand to φ")
    return cert


def expand_certificate(cert: Certificate, ideal: MonomialIdeal) -> list[GermTerm]:
    out = []
    for I, terms in cert.xi.items():
        e = [sum(ideal.generators[i][j] for i in I) for j in range(ideal.n)]
        for t in terms:
            out.append(GermTerm(t.coeff, tuple(x + y for x, y in zip(t.a, e)), t.b))
    return normalize(out)


# ---------------------------------------------------------------------------
# Residue annihilation for principal monomial ideals
# ---------------------------------------------------------------------------


@dataclass
class Annihilation:
    annihilates: bool
    pairing: complex | None = None
    pairing_error: float | None = None
    test_power: int | None = None


def annihilation_rule(a: Sequence[int], b: Sequence[int], T: Sequence[int], s: int) -> bool:
    """z^a z̄^b · ∂̄(1/a0^s) = 0 for a0 = z^T: every variable of a0 is killed by z^{sT_i} or a z̄_i."""
    return all(ai >= s * ti or bi >= 1 for ai, bi, ti in zip(a, b, T) if ti >= 1)


def annihilation_test(term: GermTerm, T: Sequence[int], s: int, numeric: bool = True,
                      ladder: Sequence[float] | None = None) -> Annihilation:
    """Symbolic annihilation verdict, corroborated by an ε-regularized pairing.

    The numeric check runs when a0 = z_i^{t}: it pairs ∂̄(1/z_i^{ts}) with
    z_i^{a_i} z̄_i^{b_i}·(1/2πi) z_i^p bump dz_i, where p = ts − 1 − a_i makes the
    pairing equal to 1 for a non-annihilating term.
    """
    verdict = annihilation_rule(term.a, term.b, T, s)
    support = [i for i, t in enumerate(T) if t]
    if not numeric or len(support) != 1:
        return Annihilation(verdict)
    i = support[0]
    q = s * T[i]
    p = max(q - 1 - term.a[i], 0)
    val, err = monomial_pairing(q, term.a[i] + p, term.b[i], ladder)
    return Annihilation(verdict, val, err, p)


def monomial_pairing(q: int, a: int, b: int, ladder: Sequence[float] | None = None) -> tuple[complex, float]:
    """⟨∂̄(1/ζ^q), (1/2πi) ζ^a ζ̄^b bump dζ⟩ extrapolated to ε → 0."""
    from .koszul import cauchy_test_form, default_ladder, power_residue_shape, residue_pairing
    from .poly import Poly
    from .quadrature import Domain, Rule

    r_in, r_out = 0.3, 0.8
    cur = power_residue_shape(Poly.coordinate(1, 0), q)
    test = cauchy_test_form(Poly.monomial(1, [a], [b]), r_in, r_out)
    ladder = default_ladder(q, r_in) if ladder is None else ladder
    rule = Rule(radial_nodes=24, angular_nodes=max(32, 4 * (a + b + q) + 8), grading=12,
                breaks=(r_in, r_out), estimate_error=False)
    res = residue_pairing(cur, test, Domain("ball", 1, (0.9,)), rule, ladder)
    return complex(res.value), float(res.error)


def divisibility_member(phi: Sequence[GermTerm], T: Sequence[int], s: int) -> bool:
    """φ ∈ ℰ·(z^{sT}) for a polynomial germ iff every term has a_i ≥ s·T_i."""
    return all(all(ai >= s * ti for ai, ti in zip(t.a, T)) for t in normalize(phi))


@dataclass
class ResidueMembership:
    member: bool
    oracle: bool
    failing: list
    certificate: list | None

    @property
    def consistent(self) -> bool:
        return self.member == self.oracle


def residue_membership(phi: Sequence[GermTerm], T: Sequence[int], s: int) -> ResidueMembership:
    """Member iff every term of every ∂^α_{z̄}φ annihilates ∂̄(1/(z^T)^s)."""
    phi = normalize(phi)
    if not any(T):
        raise ValueError("a0 must be a nonconstant monomial")
    failing = []
    for alpha in dbar_indices(phi):
        for t in dbar_derivative(phi, alpha):
            if not annihilation_rule(t.a, t.b, T, s):
                failing.append({"alpha": list(alpha), "a": list(t.a), "b": list(t.b)})
    member = not failing
    cert = None
    if member:
        sT = [s * t for t in T]
        cert = normalize(GermTerm(t.coeff, tuple(x - y for x, y in zip(t.a, sT)), t.b) for t in phi)
    return ResidueMembership(member, divisibility_member(phi, T, s), failing, cert)


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------


def random_ideal(rng: np.random.Generator, n: int, m: int, max_exp: int = 3) -> MonomialIdeal:
    while True:
        gens = [tuple(int(x) for x in rng.integers(0, max_exp + 1, size=n)) for _ in range(m)]
        gens = [g for g in gens if any(g)]
        if not gens:
            continue
        return MonomialIdeal.minimal(gens, n)


def random_germ(rng: np.random.Generator, n: int, terms: int = 3, max_exp: int = 5, max_bar: int = 2) -> list[GermTerm]:
    out = []
    for _ in range(terms):
        a = tuple(int(x) for x in rng.integers(0, max_exp + 1, size=n))
        b = tuple(int(x) for x in rng.integers(0, max_bar + 1, size=n))
        c = QQi(Fraction(int(rng.integers(-5, 6)) or 1, int(rng.integers(1, 4))), Fraction(int(rng.integers(-2, 3))))
        out.append(GermTerm(c, a, b))
    return normalize(out)
