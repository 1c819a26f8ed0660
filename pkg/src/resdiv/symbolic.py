"""Expression trees over complex coordinates and their conjugates.

Expressions are hash-consed: structurally equal trees are the same object, so
``is``/``==`` are structural comparisons and memoised evaluation shares every
repeated subtree.  Smart constructors fold constants, flatten sums/products,
collect like terms and push conjugation down to the leaves.

Evaluation is vectorised: a point binds each variable to a complex scalar or a
numpy array, and all arithmetic broadcasts.
"""

from __future__ import annotations

import math
import threading
import weakref
import zlib
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit

CONST, VAR, ADD, MUL, POW, RECIP, CONJ, APPLY = range(8)
_KIND_NAMES = ("const", "var", "add", "mul", "pow", "recip", "conj", "apply")


class ExprError(Exception):
    """Base class for evaluation and differentiation failures."""


class UnassignedVariableError(ExprError):
    pass


class DivisionByZeroError(ExprError):
    def __init__(self, path, subtree):
        self.path = tuple(path)
        self.subtree = subtree
        super().__init__(f"division by zero at path {list(self.path)}: 1/({subtree!r})")


class UnregisteredAtomError(ExprError):
    pass


@dataclass(frozen=True, order=True)
class Var:
    """A complex coordinate (``param=False``) or a base-point parameter.

    Integration coordinates are numbered 0..N-1; in doubled space the indices
    n..2n-1 are the omega block.  Parameters (the point z) are constants for
    the anti-holomorphic derivative of forms.
    """

    index: int
    conjugated: bool = False
    param: bool = False

    def conj(self) -> "Var":
        return Var(self.index, not self.conjugated, self.param)

    @property
    def base(self) -> "Var":
        return Var(self.index, False, self.param)

    def __repr__(self) -> str:
        s = ("z" if self.param else "ζ") + str(self.index + 1)
        return s + "̄" if self.conjugated else s


# ---------------------------------------------------------------------------
# Atoms: smooth functions of one real argument
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[], "Atom"] | None = None
    real: bool = True


_ATOMS: dict[str, Atom] = {}
_ATOM_LOCK = threading.Lock()


def register_atom(atom: Atom) -> Atom:
    with _ATOM_LOCK:
        return _ATOMS.setdefault(atom.name, atom)


def get_atom(name: str) -> Atom:
    try:
        return _ATOMS[name]
    except KeyError:
        raise UnregisteredAtomError(f"atom {name!r} is not registered") from None


def atom_derivative(name: str) -> Atom:
    atom = get_atom(name)
    if atom.derivative is None:
        raise UnregisteredAtomError(f"atom {name!r} has no derivative rule")
    return register_atom(atom.derivative())


def _logistic_bump_jet(s: np.ndarray, order: int) -> np.ndarray:
    """``order``-th derivative of h(s) = E(s)/(E(s)+E(1-s)), E(s) = exp(-1/s).

    h = expit(-q) with q = 1/s - 1/(1-s); Taylor coefficients of h are obtained
    from the series recurrence of y' = y(1-y)x', x = -q.  Outside (0.002, 0.998)
    all derivatives are below 1e-180 and are flushed to their limits.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    lo, hi = 0.002, 0.998
    if order == 0:
        out[s >= hi] = 1.0
    inside = (s > lo) & (s < hi)
    if not np.any(inside):
        return out
    t = s[inside]
    # Taylor coefficients of x = -q = -1/s + 1/(1-s)
    x = [-(((-1.0) ** k) / t ** (k + 1)) + 1.0 / (1.0 - t) ** (k + 1) for k in range(order + 1)]
    y = [expit(x[0])]
    p = []
    for k in range(order):
        p.append(y[k] - sum(y[i] * y[k - i] for i in range(k + 1)))
        acc = sum(p[j] * (k - j + 1) * x[k - j + 1] for j in range(k + 1))
        y.append(acc / (k + 1))
    out[inside] = y[order] * math.factorial(order)
    return out


def cutoff_atom(t_inner: float, t_outer: float, order: int = 0) -> Atom:
    """chi(t) = h((t_outer - t)/(t_outer - t_inner)) and its derivatives in t.

    chi is 1 for t <= t_inner and 0 for t >= t_outer.  Callers feed t = |ζ|^2,
    so the radii are sqrt(t_inner) < sqrt(t_outer).
    """
    if not 0 <= t_inner < t_outer:
        raise ValueError("cutoff needs 0 <= t_inner < t_outer")
    width = t_outer - t_inner
    scale = (-1.0 / width) ** order

    def func(t):
        return scale * _logistic_bump_jet((t_outer - np.asarray(t, float)) / width, order)

    name = f"cutoff[{t_inner!r},{t_outer!r}]^({order})"
    return register_atom(
        Atom(name, func, lambda: cutoff_atom(t_inner, t_outer, order + 1), real=True)
    )


def power_atom(exponent: float, scale: float = 1.0) -> Atom:
    """t -> scale * t**exponent on t > 0."""

    def func(t):
        t = np.asarray(t, float)
        if np.any(t <= 0):
            raise DivisionByZeroError((), f"t**{exponent} at t <= 0")
        return scale * t**exponent

    name = f"pow[{exponent!r}]*{scale!r}"
    return register_atom(
        Atom(name, func, lambda: power_atom(exponent - 1.0, scale * exponent), real=True)
    )


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------


class Expr:
    __slots__ = ("kind", "data", "args", "_key", "__weakref__")
    __array_ufunc__ = None  # keep numpy from broadcasting over Expr objects

    kind: int
    data: object
    args: tuple

    def __hash__(self) -> int:
        return self._key

    # equality is identity; interning makes it structural
    def __repr__(self) -> str:
        return _show(self)

    # arithmetic sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return mul(self, recip(_lift(other)))

    def __rtruediv__(self, other):
        return mul(_lift(other), recip(self))

    def __pow__(self, k: int):
        return power(self, k)

    @property
    def is_const(self) -> bool:
        return self.kind == CONST

    def is_zero(self) -> bool:
        return self.kind == CONST and self.data == 0

    def conj(self) -> "Expr":
        return conj(self)


_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_INTERN_LOCK = threading.Lock()


def _data_key(kind, data):
    # keys order operands, so they must not depend on the process (hash(None) is address-based)
    if kind == APPLY:
        return zlib.crc32(data.encode())
    if data is None:
        return 0
    return data


def _make(kind: int, data, args: tuple) -> Expr:
    key = (kind, data, args)
    with _INTERN_LOCK:
        node = _INTERN.get(key)
        if node is None:
            node = object.__new__(Expr)
            node.kind, node.data, node.args = kind, data, args
            node._key = hash((kind, _data_key(kind, data), tuple(a._key for a in args)))
            _INTERN[key] = node
    return node


def const(c) -> Expr:
    c = complex(c)
    if c == 0:
        c = 0j  # fold signed zeros
    return _make(CONST, c, ())


ZERO = const(0)
ONE = const(1)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Var):
        return var(x)
    if isinstance(x, (int, float, complex, np.number)):
        return const(x)
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


def var(v: Var) -> Expr:
    return _make(VAR, v, ())


def zeta(j: int) -> Expr:
    return var(Var(j))


def zetabar(j: int) -> Expr:
    return var(Var(j, True))


def zpar(j: int) -> Expr:
    return var(Var(j, False, True))


def zparbar(j: int) -> Expr:
    return var(Var(j, True, True))


def _split_coeff(e: Expr) -> tuple[complex, Expr]:
    if e.kind == CONST:
        return e.data, ONE
    if e.kind == MUL and e.args[0].kind == CONST:
        rest = e.args[1:]
        return e.args[0].data, rest[0] if len(rest) == 1 else _make(MUL, None, rest)
    return 1.0, e


def add(*terms) -> Expr:
    flat: list[Expr] = []
    stack = [_lift(t) for t in terms]
    while stack:
        t = stack.pop()
        if t.kind == ADD:
            stack.extend(t.args)
        else:
            flat.append(t)
    c0 = 0j
    groups: dict[Expr, complex] = {}
    order: list[Expr] = []
    for t in flat:
        if t.kind == CONST:
            c0 += t.data
            continue
        c, rest = _split_coeff(t)
        if rest in groups:
            groups[rest] += c
        else:
            groups[rest] = c
            order.append(rest)
    out = []
    for rest in order:
        c = groups[rest]
        if c == 0:
            continue
        out.append(rest if c == 1 else _scaled(c, rest))
    if not out:
        return const(c0)
    if c0 != 0:
        out.append(const(c0))
    if len(out) == 1:
        return out[0]
    out.sort(key=lambda e: e._key)
    return _make(ADD, None, tuple(out))


def _scaled(c: complex, rest: Expr) -> Expr:
    if rest.kind == MUL:
        return _make(MUL, None, (const(c),) + rest.args)
    return _make(MUL, None, (const(c), rest))


def neg(e: Expr) -> Expr:
    return mul(const(-1), e)


def _base_exp(f: Expr) -> tuple[Expr, int]:
    if f.kind == POW:
        return f.args[0], f.data
    if f.kind == RECIP:
        b, k = _base_exp(f.args[0])
        return b, -k
    return f, 1


def _from_base_exp(b: Expr, k: int) -> Expr:
    if k == 1:
        return b
    if k > 1:
        return _make(POW, k, (b,))
    if k == -1:
        return _make(RECIP, None, (b,))
    return _make(RECIP, None, (_make(POW, -k, (b,)),))


def mul(*factors) -> Expr:
    flat: list[Expr] = []
    stack = [_lift(f) for f in factors]
    while stack:
        f = stack.pop()
        if f.kind == MUL:
            stack.extend(f.args)
        else:
            flat.append(f)
    c = 1 + 0j
    exps: dict[Expr, int] = {}
    order: list[Expr] = []
    for f in flat:
        if f.kind == CONST:
            c *= f.data
            continue
        b, k = _base_exp(f)
        if b in exps:
            exps[b] += k
        else:
            exps[b] = k
            order.append(b)
    if c == 0:
        return ZERO
    out = [_from_base_exp(b, exps[b]) for b in order if exps[b] != 0]
    if not out:
        return const(c)
    out.sort(key=lambda e: e._key)
    if c != 1:
        out.insert(0, const(c))
    if len(out) == 1:
        return out[0]
    return _make(MUL, None, tuple(out))


def power(e, k: int) -> Expr:
    e = _lift(e)
    if not isinstance(k, (int, np.integer)):
        raise TypeError("only integer powers are supported; use power_atom for real exponents")
    k = int(k)
    if k == 0:
        return ONE
    if k < 0:
        return recip(power(e, -k))
    if e.kind == CONST:
        return const(e.data**k)
    if e.kind == MUL:
        return mul(*(power(f, k) for f in e.args))
    b, j = _base_exp(e)
    return mul(_from_base_exp(b, j * k))


def recip(e) -> Expr:
    e = _lift(e)
    if e.kind == CONST:
        if e.data == 0:
            raise DivisionByZeroError((), e)
        return const(1 / e.data)
    if e.kind == MUL:
        return mul(*(recip(f) for f in e.args))
    if e.kind == RECIP:
        return e.args[0]
    b, k = _base_exp(e)
    return _from_base_exp(b, -k)


def conj(e) -> Expr:
    e = _lift(e)
    k = e.kind
    if k == CONST:
        return const(e.data.conjugate())
    if k == VAR:
        return var(e.data.conj())
    if k == ADD:
        return add(*(conj(a) for a in e.args))
    if k == MUL:
        return mul(*(conj(a) for a in e.args))
    if k == POW:
        return power(conj(e.args[0]), e.data)
    if k == RECIP:
        return recip(conj(e.args[0]))
    if k == CONJ:
        return e.args[0]
    if get_atom(e.data).real:
        return e
    return _make(CONJ, None, (e,))


def apply(atom: Atom | str, arg) -> Expr:
    """Apply a registered one-argument atom to a real-valued expression."""
    name = atom if isinstance(atom, str) else register_atom(atom).name
    get_atom(name)
    arg = _lift(arg)
    if arg.kind == CONST:
        return const(complex(get_atom(name).func(np.array([arg.data.real]))[0]))
    return _make(APPLY, name, (arg,))


def abs2(e) -> Expr:
    e = _lift(e)
    return mul(e, conj(e))


def norm2(exprs) -> Expr:
    return add(*(abs2(e) for e in exprs))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def bind(zeta=(), z=()) -> dict[Var, object]:
    """Point assignment for coordinates ``zeta`` and parameters ``z``."""
    p: dict[Var, object] = {}
    for j, v in enumerate(zeta):
        v = np.asarray(v, dtype=complex) if not np.isscalar(v) else complex(v)
        p[Var(j)] = v
        p[Var(j, True)] = np.conj(v)
    for j, v in enumerate(z):
        v = np.asarray(v, dtype=complex) if not np.isscalar(v) else complex(v)
        p[Var(j, False, True)] = v
        p[Var(j, True, True)] = np.conj(v)
    return p


def evaluate(e: Expr, point: Mapping[Var, object], cache: dict | None = None):
    """Evaluate ``e`` at ``point``; ``cache`` may be shared between calls."""
    if cache is None:
        cache = {}
    return _eval(e, point, cache, [])


def _eval(e: Expr, point, cache, path):
    hit = cache.get(e)
    if hit is not None:
        return hit
    k = e.kind
    if k == CONST:
        val = e.data
    elif k == VAR:
        v = e.data
        if v in point:
            val = point[v]
        elif v.conj() in point:
            val = np.conj(point[v.conj()])
        else:
            raise UnassignedVariableError(f"variable {v!r} is not assigned")
    elif k == ADD:
        val = _eval(e.args[0], point, cache, path + [0])
        for i, a in enumerate(e.args[1:], 1):
            val = val + _eval(a, point, cache, path + [i])
    elif k == MUL:
        val = _eval(e.args[0], point, cache, path + [0])
        for i, a in enumerate(e.args[1:], 1):
            val = val * _eval(a, point, cache, path + [i])
    elif k == POW:
        val = _eval(e.args[0], point, cache, path + [0]) ** e.data
    elif k == RECIP:
        den = _eval(e.args[0], point, cache, path + [0])
        if np.any(den == 0):
            raise DivisionByZeroError(path, e.args[0])
        val = 1 / den
    elif k == CONJ:
        val = np.conj(_eval(e.args[0], point, cache, path + [0]))
    else:
        arg = _eval(e.args[0], point, cache, path + [0])
        val = get_atom(e.data).func(np.real(arg))
        if np.ndim(val) == 0:
            val = complex(val) if not get_atom(e.data).real else float(val)
    cache[e] = val
    return val


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def partial(e: Expr, v: Var, _memo: dict | None = None) -> Expr:
    """Formal Wirtinger derivative; v and conj(v) are independent symbols."""
    if _memo is None:
        _memo = {}
    hit = _memo.get(e)
    if hit is not None:
        return hit
    k = e.kind
    if k == CONST:
        d = ZERO
    elif k == VAR:
        d = ONE if e.data == v else ZERO
    elif k == ADD:
        d = add(*(partial(a, v, _memo) for a in e.args))
    elif k == MUL:
        terms = []
        for i, a in enumerate(e.args):
            da = partial(a, v, _memo)
            if not da.is_zero():
                terms.append(mul(da, *(b for j, b in enumerate(e.args) if j != i)))
        d = add(*terms)
    elif k == POW:
        base = e.args[0]
        d = mul(const(e.data), power(base, e.data - 1), partial(base, v, _memo))
    elif k == RECIP:
        base = e.args[0]
        d = mul(const(-1), partial(base, v, _memo), recip(power(base, 2)))
    elif k == CONJ:
        d = conj(partial(e.args[0], v.conj()))
    else:
        inner = partial(e.args[0], v, _memo)
        d = ZERO if inner.is_zero() else mul(_make(APPLY, atom_derivative(e.data).name, e.args), inner)
    _memo[e] = d
    return d


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` through the smart constructors (idempotent)."""
    memo: dict[Expr, Expr] = {}

    def go(x: Expr) -> Expr:
        if x in memo:
            return memo[x]
        k = x.kind
        if k in (CONST, VAR):
            r = x
        elif k == ADD:
            r = add(*(go(a) for a in x.args))
        elif k == MUL:
            r = mul(*(go(a) for a in x.args))
        elif k == POW:
            r = power(go(x.args[0]), x.data)
        elif k == RECIP:
            r = recip(go(x.args[0]))
        elif k == CONJ:
            r = conj(go(x.args[0]))
        else:
            r = apply(x.data, go(x.args[0]))
        memo[x] = r
        return r

    return go(e)


def free_vars(e: Expr) -> set[Var]:
    seen: set[Expr] = set()
    out: set[Var] = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        if x.kind == VAR:
            out.add(x.data)
        stack.extend(x.args)
    return out


def substitute(e: Expr, mapping: Mapping[Var, Expr]) -> Expr:
    """Replace variables; conjugates follow automatically."""
    full = dict(mapping)
    for v, r in mapping.items():
        full.setdefault(v.conj(), conj(r))
    memo: dict[Expr, Expr] = {}

    def go(x: Expr) -> Expr:
        if x in memo:
            return memo[x]
        k = x.kind
        if k == CONST:
            r = x
        elif k == VAR:
            r = full.get(x.data, x)
        elif k == ADD:
            r = add(*(go(a) for a in x.args))
        elif k == MUL:
            r = mul(*(go(a) for a in x.args))
        elif k == POW:
            r = power(go(x.args[0]), x.data)
        elif k == RECIP:
            r = recip(go(x.args[0]))
        elif k == CONJ:
            r = conj(go(x.args[0]))
        else:
            r = apply(x.data, go(x.args[0]))
        memo[x] = r
        return r

    return go(e)


def size(e: Expr) -> int:
    """Number of distinct nodes (shared subtrees counted once)."""
    seen: set[Expr] = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if x not in seen:
            seen.add(x)
            stack.extend(x.args)
    return len(seen)


def _show(e: Expr) -> str:
    k = e.kind
    if k == CONST:
        c = e.data
        if c.imag == 0:
            r = c.real
            return str(int(r)) if r == int(r) and abs(r) < 1e15 else repr(r)
        return repr(c)
    if k == VAR:
        return repr(e.data)
    if k == ADD:
        return "(" + " + ".join(_show(a) for a in e.args) + ")"
    if k == MUL:
        return "·".join(_show(a) for a in e.args)
    if k == POW:
        return f"{_show(e.args[0])}^{e.data}"
    if k == RECIP:
        return f"1/{_show(e.args[0])}"
    if k == CONJ:
        return f"conj({_show(e.args[0])})"
    return f"{e.data}({_show(e.args[0])})"
