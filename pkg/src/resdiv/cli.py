"""Problem-file driver.

``resdiv PROBLEM`` reads a JSON problem (a path or ``builtin:<name>``),
validates it, runs the task and prints a summary table.  ``--report`` writes
the full JSON report.  Exit codes: 0 all checks pass, 1 some check failed,
2 input error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from . import symbolic as sym
from .division import DivisionProblem, PreconditionError, default_points, probe_ray, solve
from .extension import SmoothGerm
from .identities import bm_identity, extension_identities, hefer_identity, leibniz_identity, reproduce, \
    weight_identity
from .kernels import WeightSpec
from .koszul import NonConvergentLadder, cauchy_test_form, default_ladder, power_residue_shape, residue_pairing
from .membership import GermTerm, MonomialIdeal, QQi, annihilation_test, bs_certificate, bs_condition, \
    normalize, random_germ, random_ideal, residue_membership
from .poly import Poly
from .quadrature import Domain, QuadratureAbort, Rule, contour_integral, set_debug_nodes

FORMAT_VERSION = "1"
TASKS = ("verify-identities", "reproduce", "divide", "residue-pairing", "membership", "counterexample-demo")
EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    """Problem file is unreadable or invalid; ``pointer`` locates the offending value."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

_NUMBER = {"type": "number"}
_CPLX = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}]}
_POINT = {"type": "array", "items": _CPLX, "minItems": 1}
_EXPS = {"type": "array", "items": {"type": "integer", "minimum": 0}}
_COEFF = {"oneOf": [_NUMBER, {"type": "string", "pattern": r"^-?\d+(/\d+)?$"}]}
_TERM = {
    "type": "object",
    "properties": {"re": _COEFF, "im": _COEFF, "zexp": _EXPS, "zbarexp": _EXPS},
    "required": ["zexp"],
    "additionalProperties": False,
}
_POLY = {"type": "array", "items": _TERM}
_COMPONENT = {
    "type": "object",
    "oneOf": [{"required": ["poly"]}, {"required": ["expr"]}],
    "properties": {"poly": _POLY, "expr": {}},
    "additionalProperties": False,
}
_RULE = {
    "type": ["object", "null"],
    "properties": {
        "scheme": {"enum": ["tensor-gauss", "qmc"]},
        "radial_nodes": {"type": "integer", "minimum": 1},
        "angular_nodes": {"type": "integer", "minimum": 1},
        "polar_nodes": {"type": "integer", "minimum": 1},
        "breaks": {"type": "array", "items": _NUMBER},
        "grading": {"type": "integer", "minimum": 0},
        "grading_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "qmc_samples": {"type": "integer", "minimum": 1},
        "qmc_batches": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "estimate_error": {"type": "boolean"},
    },
    "additionalProperties": False,
}
_WEIGHT = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["ball", "product"]},
        "R": {"type": "number", "exclusiveMinimum": 0},
        "r1": {"type": ["number", "null"]},
        "r2": {"type": ["number", "null"]},
    },
    "additionalProperties": False,
}
_LADDER = {"type": ["array", "null"], "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3}
_TOL = {"type": "object", "additionalProperties": {"type": "number"}}

_IDENTITY = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["weight", "bochner-martinelli", "leibniz", "hefer", "extension"]},
        "dimensions": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 4}},
        "n": {"type": "integer", "minimum": 1},
        "generators": {"type": "array", "items": _POLY, "minItems": 1},
        "germ": _POLY,
        "order": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}
_INSTANCE = {
    "type": "object",
    "required": ["name", "column", "phi", "direction", "radii"],
    "properties": {
        "name": {"type": "string"},
        "column": {"type": "array", "items": _POLY, "minItems": 1},
        "phi": {"type": "array", "items": _COMPONENT, "minItems": 1},
        "direction": _POINT,
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3},
        "exponent": _NUMBER,
        "tolerance": _NUMBER,
        "min_exponent": _NUMBER,
    },
    "additionalProperties": False,
}

def _when(task: str, then: dict) -> dict:
    # an absent task must not satisfy every branch vacuously
    return {"if": {"required": ["task"], "properties": {"task": {"const": task}}}, "then": then}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "task"],
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "task": {"enum": list(TASKS)},
        "name": {"type": "string"},
        "tag": {"type": "string"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 1, "maximum": 4},
        "seed": {"type": "integer", "minimum": 0},
        "samples": {"type": "integer", "minimum": 1},
        "weight": _WEIGHT,
        "rule": _RULE,
        "ladder": _LADDER,
        "points": {"type": "array", "items": _POINT, "minItems": 1},
        "monomials": {"type": "array", "items": _EXPS, "minItems": 1},
        "max_degree": {"type": "integer", "minimum": 0},
        "identities": {"type": "array", "items": _IDENTITY, "minItems": 1},
        "generators": {"type": "array", "items": _POLY, "minItems": 1},
        "level": {"type": "integer", "minimum": 0},
        "phi": {"type": "array", "items": _COMPONENT, "minItems": 1},
        "expected": {"type": ["array", "null"], "items": _COMPONENT},
        "M": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 0},
        "c_n": {"type": ["integer", "null"], "minimum": 0},
        "powers": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "tests": {"type": "array", "items": _POLY, "minItems": 1},
        "bump": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
        "mode": {"enum": ["bs", "residue", "bs-suite", "annihilation-suite"]},
        "ideal": {"type": "array", "items": _EXPS, "minItems": 1},
        "germ": _POLY,
        "r": {"type": "integer", "minimum": 1},
        "s": {"type": "integer", "minimum": 1},
        "count": {"type": "integer", "minimum": 1},
        "controls": {"type": "integer", "minimum": 0},
        "instances": {"type": "array", "items": _INSTANCE, "minItems": 1},
        "tolerances": _TOL,
    },
    "additionalProperties": False,
    "allOf": [
        _when("reproduce", {"required": ["n", "points"],
                            "anyOf": [{"required": ["monomials"]}, {"required": ["max_degree"]}]}),
        _when("verify-identities", {"required": ["identities"]}),
        _when("divide", {"required": ["generators", "level", "phi"]}),
        _when("residue-pairing", {"required": ["powers", "tests"]}),
        _when("membership", {"required": ["mode"]}),
        _when("counterexample-demo", {"required": ["instances"]}),
    ],
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate(problem: Any) -> None:
    """Raise InputError at the JSON pointer of the first (deepest-path) schema violation."""
    errors = sorted(_VALIDATOR.iter_errors(problem), key=lambda e: (list(e.absolute_path), e.message))
    if not errors:
        return
    err = jsonschema.exceptions.best_match(errors)
    pointer = _pointer(err.absolute_path)
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            pointer += f"/{missing[0]}"
    raise InputError(err.message, pointer)


# ---------------------------------------------------------------------------
# Literals
# ---------------------------------------------------------------------------


def _cplx(x) -> complex:
    if isinstance(x, (complex, np.complexfloating)):
        return complex(x)
    if isinstance(x, (list, tuple)):
        return complex(float(x[0]), float(x[1]))
    return complex(float(x))


def _cplx_json(z: complex) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _coeff_float(c) -> float:
    return float(Fraction(c)) if isinstance(c, str) else float(c)


def parse_poly(terms: list, n: int, pointer: str = "") -> Poly:
    out = []
    for i, t in enumerate(terms):
        za = list(t["zexp"])
        zb = list(t.get("zbarexp", [0] * n))
        if len(za) != n or len(zb) != n:
            raise InputError(f"exponent vectors must have length {n}", f"{pointer}/{i}")
        out.append((complex(_coeff_float(t.get("re", 1)), _coeff_float(t.get("im", 0))), za, zb))
    return Poly.from_terms(n, out)


def poly_json(p: Poly) -> list[dict]:
    return [{"re": float(c.real), "im": float(c.imag), "zexp": list(a), "zbarexp": list(b)}
            for c, a, b in sorted(p.split(), key=lambda t: (t[1], t[2]))]


def parse_exact_germ(terms: list, n: int, pointer: str = "") -> list[GermTerm]:
    out = []
    for i, t in enumerate(terms):
        za, zb = list(t["zexp"]), list(t.get("zbarexp", [0] * n))
        if len(za) != n or len(zb) != n:
            raise InputError(f"exponent vectors must have length {n}", f"{pointer}/{i}")
        c = QQi(Fraction(t.get("re", 1)), Fraction(t.get("im", 0)))
        out.append(GermTerm(c, tuple(za), tuple(zb)))
    return normalize(out)


def exact_germ_json(terms) -> list[dict]:
    return [{"re": str(t.coeff.re), "im": str(t.coeff.im), "zexp": list(t.a), "zbarexp": list(t.b)}
            for t in normalize(terms)]


_UNARY = {"neg": sym.neg, "recip": sym.recip, "conj": sym.conj, "abs2": sym.abs2}
_ATOMS = {
    "cutoff": (sym.cutoff_atom, ("t_inner", "t_outer")),
    "power": (sym.power_atom, ("exponent", "scale")),
}


def parse_expr(tree, n: int, pointer: str = "") -> sym.Expr:
    """Prefix term tree: numbers, ["const", re, im], ["z", j], ["zbar", j],
    ["add", ...], ["mul", ...], ["pow", e, k], ["norm2", ...], unary
    ["neg"|"recip"|"conj"|"abs2", e] and ["atom", "cutoff"|"power", {params}, e]."""
    if isinstance(tree, (int, float)) and not isinstance(tree, bool):
        return sym.const(float(tree))
    if not isinstance(tree, list) or not tree or not isinstance(tree[0], str):
        raise InputError("expression node must be a number or [op, ...]", pointer)
    op, args = tree[0], tree[1:]

    def sub(i):
        return parse_expr(args[i], n, f"{pointer}/{i + 1}")

    try:
        if op == "const":
            return sym.const(complex(float(args[0]), float(args[1]) if len(args) > 1 else 0.0))
        if op in ("z", "zbar"):
            j = int(args[0])
            if not 0 <= j < n:
                raise InputError(f"variable index {j} out of range for n = {n}", f"{pointer}/1")
            return sym.zeta(j) if op == "z" else sym.zetabar(j)
        if op == "add":
            return sym.add(*(sub(i) for i in range(len(args))))
        if op == "mul":
            return sym.mul(*(sub(i) for i in range(len(args))))
        if op == "norm2":
            return sym.norm2([sub(i) for i in range(len(args))])
        if op == "pow":
            return sym.power(sub(0), int(args[1]))
        if op in _UNARY:
            return _UNARY[op](sub(0))
        if op == "atom":
            name, params = args[0], args[1]
            if name not in _ATOMS:
                raise InputError(f"unknown atom {name!r}; available: {sorted(_ATOMS)}", f"{pointer}/1")
            make, keys = _ATOMS[name]
            unknown = set(params) - set(keys)
            if unknown:
                raise InputError(f"unknown atom parameters {sorted(unknown)}", f"{pointer}/2")
            return sym.apply(make(**{k: float(v) for k, v in params.items()}), sub(2))
    except (IndexError, TypeError, KeyError, AttributeError) as exc:
        raise InputError(f"malformed {op!r} node ({exc})", pointer) from exc
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed {op!r} node ({exc})", pointer) from exc
    raise InputError(f"unknown operator {op!r}", pointer)


def parse_component(c: dict, n: int, pointer: str) -> tuple[sym.Expr, Poly | None]:
    if "poly" in c:
        p = parse_poly(c["poly"], n, f"{pointer}/poly")
        return p.to_expr(), p
    return parse_expr(c["expr"], n, f"{pointer}/expr"), None


def _germ_of(c: dict, n: int, pointer: str) -> SmoothGerm:
    e, p = parse_component(c, n, pointer)
    return SmoothGerm.from_poly(p) if p is not None else SmoothGerm.from_expr(n, e)


def parse_rule(d: dict | None, threads: int = 1) -> Rule | None:
    if d is None:
        return None
    d = dict(d)
    if "breaks" in d:
        d["breaks"] = tuple(d["breaks"])
    return Rule(**d, threads=threads)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

_DEFAULTS: dict[str, dict] = {
    "reproduce": {"weight": {"kind": "ball", "R": 1.0, "r1": None, "r2": None}, "rule": None,
                  "tolerances": {"rel_error": 1e-8}},
    "verify-identities": {"samples": 100, "seed": 0, "tolerances": {"residual": 1e-9}},
    "divide": {"weight": {"kind": "ball", "R": 1.0, "r1": None, "r2": None}, "rule": None, "ladder": None,
               "expected": None, "M": 0, "k": 0, "c_n": None, "tolerances": {"residual": 1e-3}},
    "residue-pairing": {"bump": [0.3, 0.8], "rule": None, "ladder": None, "tolerances": {"rel_error": 1e-4}},
    "membership": {"seed": 0},
    "counterexample-demo": {},
}
_TOL_DEFAULTS = {
    ("membership", "annihilation-suite"): {"annihilated": 1e-3, "control": 0.1},
}


def _norm_component(c: dict, n: int, pointer: str) -> dict:
    if "poly" in c:
        return {"poly": poly_json(parse_poly(c["poly"], n, f"{pointer}/poly"))}
    parse_expr(c["expr"], n, f"{pointer}/expr")
    return {"expr": c["expr"]}


def _norm_point(p) -> list:
    return [_cplx_json(_cplx(x)) for x in p]


def normalize_problem(problem: dict) -> dict:
    """Validate and fill defaults; normalize(normalize(x)) == normalize(x)."""
    validate(problem)
    task = problem["task"]
    out = json.loads(json.dumps(problem))
    for k, v in _DEFAULTS[task].items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**v, **out[k]}
        else:
            out.setdefault(k, json.loads(json.dumps(v)))
    if task == "membership":
        tol = _TOL_DEFAULTS.get((task, out["mode"]), {})
        out["tolerances"] = {**tol, **out.get("tolerances", {})}
    n = out.get("n")
    if "points" in out:
        out["points"] = [_norm_point(p) for p in out["points"]]
    if task == "reproduce":
        if "monomials" not in out:
            D = out.pop("max_degree")
            out["monomials"] = [list(a) for a in _monomials(n, D)]
        out.pop("max_degree", None)
    if task == "divide":
        gens = out["generators"]
        n = out.setdefault("n", len(gens[0][0]["zexp"]) if gens[0] else 1)
        out["generators"] = [poly_json(parse_poly(g, n, f"/generators/{i}")) for i, g in enumerate(gens)]
        out["phi"] = [_norm_component(c, n, f"/phi/{i}") for i, c in enumerate(out["phi"])]
        if out["expected"] is not None:
            out["expected"] = [_norm_component(c, n, f"/expected/{i}") for i, c in enumerate(out["expected"])]
        if "points" not in out:
            out["points"] = [_norm_point(p) for p in default_points(n)]
    if task == "residue-pairing":
        out["tests"] = [poly_json(parse_poly(t, 1, f"/tests/{i}")) for i, t in enumerate(out["tests"])]
    if task == "membership" and "germ" in out:
        nn = len(out["germ"][0]["zexp"]) if out["germ"] else len(out.get("ideal", [[0]])[0])
        out["germ"] = exact_germ_json(parse_exact_germ(out["germ"], nn, "/germ"))
    if task == "counterexample-demo":
        for i, inst in enumerate(out["instances"]):
            nn = len(inst["direction"])
            inst["direction"] = _norm_point(inst["direction"])
            inst["column"] = [poly_json(parse_poly(c, nn, f"/instances/{i}/column/{j}"))
                              for j, c in enumerate(inst["column"])]
            inst["phi"] = [_norm_component(c, nn, f"/instances/{i}/phi/{j}") for j, c in enumerate(inst["phi"])]
    if task == "verify-identities":
        for i, ident in enumerate(out["identities"]):
            if ident["kind"] in ("weight", "bochner-martinelli", "leibniz"):
                ident.setdefault("dimensions", [1, 2, 3])
            elif ident["kind"] == "hefer":
                if "generators" not in ident:
                    raise InputError("hefer identity needs generators", f"/identities/{i}/generators")
                nn = len(ident["generators"][0][0]["zexp"])
                ident["generators"] = [poly_json(parse_poly(g, nn, f"/identities/{i}/generators/{j}"))
                                       for j, g in enumerate(ident["generators"])]
            else:
                for key in ("germ", "order"):
                    if key not in ident:
                        raise InputError(f"extension identity needs {key!r}", f"/identities/{i}/{key}")
                nn = len(ident["germ"][0]["zexp"])
                ident["germ"] = poly_json(parse_poly(ident["germ"], nn, f"/identities/{i}/germ"))
    validate(out)
    return out


def _monomials(n: int, D: int):
    import itertools

    return [a for d in range(D + 1) for a in sorted(itertools.product(range(d + 1), repeat=n), reverse=True)
            if sum(a) == d]


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    comparison: str = "<="

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.tolerance if self.comparison == "<=" else self.value >= self.tolerance

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "comparison": self.comparison,
                "tolerance": self.tolerance, "passed": self.passed}


@dataclass
class Outcome:
    results: dict
    checks: list
    timings: dict = field(default_factory=dict)


def jsonable(x):
    """Plain JSON data: complex as [re, im], non-finite floats as strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def build_report(problem: dict, outcome: Outcome) -> dict:
    checks = [c.as_dict() for c in outcome.checks]
    return jsonable({
        "format": FORMAT_VERSION,
        "resdiv": __version__,
        "task": problem["task"],
        "name": problem.get("name", ""),
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
        "results": outcome.results,
        "problem": problem,
        "timings": outcome.timings,
    })


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def comparable(report: dict) -> dict:
    """The deterministic part of a report (everything except timings)."""
    return {k: v for k, v in report.items() if k != "timings"}


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------


def _points(problem: dict, n: int) -> list[tuple]:
    pts = [tuple(_cplx(x) for x in p) for p in problem["points"]]
    for i, p in enumerate(pts):
        if len(p) != n:
            raise InputError(f"point has {len(p)} coordinates, expected {n}", f"/points/{i}")
    return pts


def _weight(problem: dict) -> WeightSpec:
    w = problem["weight"]
    return WeightSpec(w["kind"], w["R"], w["r1"], w["r2"])


def task_reproduce(problem: dict, threads: int) -> Outcome:
    n = problem["n"]
    mons = problem["monomials"]
    for i, a in enumerate(mons):
        if len(a) != n:
            raise InputError(f"monomial needs {n} exponents", f"/monomials/{i}")
    rule = parse_rule(problem["rule"], threads)
    rep = reproduce(n, mons, _points(problem, n), _weight(problem), rule)
    tol = problem["tolerances"]
    checks = [Check("max relative error", float(np.max(rep.rel_error)), tol["rel_error"])]
    if "max_evaluations" in tol:
        checks.append(Check("integrand evaluations", float(rep.evaluations), tol["max_evaluations"]))
    per = [{"z": z, "monomials": [
        {"zexp": list(a), "value": rep.values[i, j], "exact": rep.exact[i, j], "rel_error": rep.rel_error[i, j],
         "quadrature_error": rep.quad_error[i, j]} for j, a in enumerate(mons)]}
        for i, z in enumerate(problem["points"])]
    return Outcome({"points": per, "evaluations": rep.evaluations}, checks, {"quadrature": rep.seconds})


def task_identities(problem: dict, threads: int) -> Outcome:
    samples, seed = problem["samples"], problem["seed"]
    tol = problem["tolerances"]
    results, checks, timings = [], [], {}
    runners = {"weight": weight_identity, "bochner-martinelli": bm_identity, "leibniz": leibniz_identity}
    for i, ident in enumerate(problem["identities"]):
        kind = ident["kind"]
        t0 = time.perf_counter()
        if kind in runners:
            for N in ident["dimensions"]:
                if kind == "weight":
                    r = weight_identity(N, samples=samples, seed=seed)
                else:
                    r = runners[kind](N, samples, seed)
                results.append({"dimension": N, **r.as_dict()})
                checks.append(Check(f"{kind} N={N}", r.residual, tol["residual"]))
        elif kind == "hefer":
            nn = len(ident["generators"][0][0]["zexp"])
            gens = [parse_poly(g, nn) for g in ident["generators"]]
            if not all(g.is_holomorphic() for g in gens):
                raise InputError("Hefer generators must be holomorphic", f"/identities/{i}/generators")
            r = hefer_identity(gens, samples, seed)
            results.append({"generators": ident["generators"], **r.as_dict()})
            checks.append(Check(f"hefer m={len(gens)} n={nn}", r.residual, tol["residual"]))
        else:
            nn = len(ident["germ"][0]["zexp"])
            K = ident["order"]
            r = extension_identities(parse_poly(ident["germ"], nn), K, samples, seed)
            results.append({"germ": ident["germ"], **r.as_dict()})
            checks.append(Check(f"extension K={K} nabla residual", r.residual, tol["residual"]))
            checks.append(Check(f"extension K={K} restriction", r.details["restriction_error"],
                                tol.get("restriction", 1e-12)))
            if math.isfinite(r.details["vanishing_order"]):
                checks.append(Check(f"extension K={K} vanishing order deviation",
                                    abs(r.details["vanishing_order"] - K), tol.get("order", 0.1)))
        timings[f"{i}:{kind}"] = time.perf_counter() - t0
    return Outcome({"identities": results}, checks, timings)


def task_divide(problem: dict, threads: int) -> Outcome:
    n = problem["n"]
    gens = [parse_poly(g, n, f"/generators/{i}") for i, g in enumerate(problem["generators"])]
    phi = [_germ_of(c, n, f"/phi/{i}") for i, c in enumerate(problem["phi"])]
    pts = _points(problem, n)
    ladder = problem["ladder"]
    p = DivisionProblem(gens, problem["level"], phi, pts, _weight(problem), parse_rule(problem["rule"], threads),
                        tuple(ladder) if ladder else None, problem["M"], problem["k"], problem["c_n"],
                        threads=threads)
    res = solve(p)
    tol = problem["tolerances"]
    checks = [Check("max residual |f psi - phi|" if res.pipeline == "holomorphic"
                    else "max decomposition residual", res.max_residual, tol["residual"])]
    per = []
    exp_err = 0.0
    expected = None
    if problem["expected"] is not None:
        expected = [parse_component(c, n, f"/expected/{i}")[0] for i, c in enumerate(problem["expected"])]
    for pr in res.points:
        row = {"z": [_cplx_json(x) for x in pr.z], "psi": pr.psi, "error": pr.error, "residual": pr.residual}
        if pr.residue is not None:
            row["residue_term"] = pr.residue
        if pr.ladder is not None:
            row["ladder"] = pr.ladder
        if expected is not None:
            b = sym.bind([complex(x) for x in pr.z])
            ex = np.array([complex(np.asarray(sym.evaluate(e, b)).ravel()[0]) for e in expected])
            if ex.shape != np.asarray(pr.psi).ravel().shape:
                raise InputError(f"expected has {len(ex)} components, solution has {np.size(pr.psi)}", "/expected")
            d = float(np.max(np.abs(np.asarray(pr.psi).ravel() - ex)))
            row["expected"] = ex
            row["deviation"] = d
            exp_err = max(exp_err, d)
        per.append(row)
    if expected is not None:
        checks.append(Check("max |psi - expected|", exp_err, tol.get("expected", tol["residual"])))
    results = {"pipeline": res.pipeline, "points": per, "max_error_bound": res.max_error,
               "evaluations": res.evaluations, "notes": res.notes}
    return Outcome(results, checks, {"solve": res.seconds})


def pairing_oracle(xi: Poly, t: int, radius: float = 0.5, nodes: int = 128) -> complex:
    """(1/2πi)∮ ξ(ζ) ζ^{-t} dζ, the Cauchy value ξ^{(t-1)}(0)/(t-1)!."""
    def f(pts):
        return np.broadcast_to(xi(pts[0]), pts.shape[1:]) * pts[0] ** (-t)

    return complex(contour_integral(f, [0.0], [radius], nodes)) / (2j * np.pi)


def task_pairing(problem: dict, threads: int) -> Outcome:
    r_in, r_out = problem["bump"]
    if not r_in < r_out:
        raise InputError("bump radii must increase", "/bump")
    tol = problem["tolerances"]["rel_error"]
    results, checks, worst = [], [], 0.0
    z1 = Poly.coordinate(1, 0)
    t0 = time.perf_counter()
    for t in problem["powers"]:
        cur = power_residue_shape(z1, t)
        for i, terms in enumerate(problem["tests"]):
            xi = parse_poly(terms, 1, f"/tests/{i}")
            rule = parse_rule(problem["rule"], threads) or Rule(
                radial_nodes=24, angular_nodes=max(32, 4 * (t + _degree(xi)) + 8), grading=12,
                breaks=(r_in, r_out), estimate_error=False, threads=threads)
            ladder = tuple(problem["ladder"]) if problem["ladder"] else default_ladder(t, r_in)
            res = residue_pairing(cur, cauchy_test_form(xi, r_in, r_out), Domain("ball", 1, (r_out + 0.1,)),
                                  rule, ladder, threads=threads)
            exact = pairing_oracle(xi, t)
            rel = abs(res.value - exact) / max(abs(exact), 1.0)
            worst = max(worst, rel)
            results.append({"power": t, "test": terms, "value": res.value, "oracle": exact, "rel_error": rel,
                            "error_bound": res.error, "extrapolation": res.extrapolation.as_dict(),
                            "evaluations": res.evaluations})
            checks.append(Check(f"pairing t={t} test={i}", rel, tol))
    return Outcome({"pairings": results, "max_rel_error": worst}, checks,
                   {"pairings": time.perf_counter() - t0})


def _degree(p: Poly) -> int:
    return max((sum(a) + sum(b) for _, a, b in p.split()), default=0)


def _annihilation_instances(rng: np.random.Generator, count: int, controls: int):
    """(term, T, s, annihilating) for n = 1: z̄-factor, a0^s-factor and control terms."""
    out = []
    for i in range(count + controls):
        t = int(rng.integers(1, 3))
        s = int(rng.integers(1, 4))
        q = s * t
        if i >= count:
            a, b, kind = int(rng.integers(0, q)), 0, "control"
        elif i % 2 == 0:
            a, b, kind = int(rng.integers(0, q + 2)), int(rng.integers(1, 3)), "zbar-factor"
        else:
            a, b, kind = q + int(rng.integers(0, 3)), 0, "power-factor"
        out.append((GermTerm(QQi.of(1), (a,), (b,)), (t,), s, kind))
    return out


def task_membership(problem: dict, threads: int) -> Outcome:
    mode = problem["mode"]
    tol = problem.get("tolerances", {})
    rng = np.random.default_rng(problem["seed"])
    t0 = time.perf_counter()
    if mode in ("bs", "residue"):
        for key in ("germ", "ideal", "r") if mode == "bs" else ("germ", "ideal", "s"):
            if key not in problem:
                raise InputError(f"mode {mode!r} needs {key!r}", f"/{key}")
        n = len(problem["ideal"][0])
        phi = parse_exact_germ(problem["germ"], n, "/germ")
        if mode == "bs":
            try:
                ideal = MonomialIdeal(tuple(map(tuple, problem["ideal"])), n)
            except ValueError as exc:
                raise InputError(str(exc), "/ideal") from exc
            v = bs_condition(phi, ideal, problem["r"], seed=problem["seed"])
            cert = bs_certificate(phi, ideal, problem["r"]) if v.passed else None
            results = {"condition": v.as_dict(), "certificate": cert.as_dict() if cert else None}
            checks = [Check("certificate re-expands when the condition holds",
                            0.0 if (cert is None or cert.ok) else 1.0, 0.0)]
        else:
            if len(problem["ideal"]) != 1:
                raise InputError("residue mode needs a principal monomial ideal", "/ideal")
            rm = residue_membership(phi, problem["ideal"][0], problem["s"])
            results = {"member": rm.member, "oracle": rm.oracle, "failing": rm.failing,
                       "quotient": exact_germ_json(rm.certificate) if rm.certificate is not None else None}
            checks = [Check("disagreement with the divisibility oracle", 0.0 if rm.consistent else 1.0, 0.0)]
        return Outcome(results, checks, {"membership": time.perf_counter() - t0})
    if mode == "annihilation-suite":
        count, controls = problem.get("count", 50), problem.get("controls", 10)
        rows, worst_ann, worst_ctrl, mismatch = [], 0.0, math.inf, 0
        for term, T, s, kind in _annihilation_instances(rng, count, controls):
            ann = annihilation_test(term, T, s)
            mag = abs(ann.pairing)
            expect = kind != "control"
            mismatch += ann.annihilates != expect
            if expect:
                worst_ann = max(worst_ann, mag)
            else:
                worst_ctrl = min(worst_ctrl, mag)
            rows.append({"kind": kind, "a": list(term.a), "b": list(term.b), "T": list(T), "s": s,
                         "annihilates": ann.annihilates, "pairing": ann.pairing, "error": ann.pairing_error})
        checks = [Check("max |pairing| on annihilated instances", worst_ann, tol["annihilated"]),
                  Check("symbolic verdict mismatches", float(mismatch), 0.0)]
        if controls:
            checks.append(Check("min |pairing| on controls", worst_ctrl, tol["control"], ">="))
        return Outcome({"instances": rows}, checks, {"pairings": time.perf_counter() - t0})
    # bs-suite
    count = problem.get("count", 200)
    rows, failures, passed, principal_bad = [], 0, 0, 0
    for i in range(count):
        n, m, r = (int(x) for x in rng.integers(1, 4, size=3))
        ideal = random_ideal(rng, n, m)
        phi = random_germ(rng, n)
        if i % 2 == 0:
            g = ideal.generators[0]
            phi = normalize(GermTerm(t.coeff, tuple(x + (r + ideal.mu - 1) * y for x, y in zip(t.a, g)), t.b)
                            for t in phi)
        v = bs_condition(phi, ideal, r, seed=i)
        ok = None
        if v.passed:
            passed += 1
            ok = bs_certificate(phi, ideal, r).ok
            failures += not ok
        rm = residue_membership(phi, ideal.generators[0], r)
        principal_bad += not rm.consistent
        rows.append({"n": n, "r": r, "ideal": [list(g) for g in ideal.generators], "condition": v.passed,
                     "certificate": ok, "principal_member": rm.member})
    checks = [Check("certificate failures among passing instances", float(failures), 0.0),
              Check("principal residue/divisibility disagreements", float(principal_bad), 0.0)]
    return Outcome({"instances": rows, "condition_passed": passed}, checks,
                   {"suite": time.perf_counter() - t0})


def task_counterexample(problem: dict, threads: int) -> Outcome:
    rows, checks = [], []
    t0 = time.perf_counter()
    for i, inst in enumerate(problem["instances"]):
        nn = len(inst["direction"])
        col = [parse_poly(c, nn) for c in inst["column"]]
        phi = [parse_component(c, nn, f"/instances/{i}/phi/{j}")[0] for j, c in enumerate(inst["phi"])]
        if len(col) != len(phi):
            raise InputError("column and phi must have equal length", f"/instances/{i}/phi")
        fit = probe_ray(col, phi, [_cplx(x) for x in inst["direction"]], inst["radii"])
        rows.append({"name": inst["name"], "exponent": fit.exponent, "stderr": fit.stderr,
                     "fit_residual": fit.residual, "band": list(fit.band)})
        if "exponent" in inst:
            checks.append(Check(f"{inst['name']}: |exponent - {inst['exponent']:g}|",
                                abs(fit.exponent - inst["exponent"]), inst.get("tolerance", 0.05)))
        if "min_exponent" in inst:
            checks.append(Check(f"{inst['name']}: exponent", fit.exponent, inst["min_exponent"], ">="))
    return Outcome({"instances": rows}, checks, {"probe": time.perf_counter() - t0})


RUNNERS = {
    "reproduce": task_reproduce,
    "verify-identities": task_identities,
    "divide": task_divide,
    "residue-pairing": task_pairing,
    "membership": task_membership,
    "counterexample-demo": task_counterexample,
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def list_builtins() -> list[dict]:
    out = []
    for f in sorted(resources.files("resdiv").joinpath("problems").iterdir(), key=lambda p: p.name):
        if f.name.endswith(".json"):
            d = json.loads(f.read_text())
            out.append({"name": f.name[:-5], "task": d["task"], "tag": d.get("tag", ""),
                        "description": d.get("description", "")})
    return out


def load_problem(source: str) -> dict:
    if source.startswith("builtin:"):
        name = source[len("builtin:"):]
        f = resources.files("resdiv").joinpath("problems", f"{name}.json")
        if not f.is_file():
            raise InputError(f"no built-in problem {name!r}; see --list-builtins")
        text = f.read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def run(problem: dict, threads: int = 1) -> dict:
    """Normalize, execute and build the report for a parsed problem."""
    t0 = time.perf_counter()
    norm = normalize_problem(problem)
    outcome = RUNNERS[norm["task"]](norm, max(1, threads))
    outcome.timings["total"] = time.perf_counter() - t0
    return build_report(norm, outcome)


def _fmt(x) -> str:
    return f"{x:.3e}" if isinstance(x, float) else str(x)


def summary(report: dict) -> str:
    lines = [f"{report['task']}  {report['name']}", ""]
    w = max((len(c["name"]) for c in report["checks"]), default=10)
    lines.append(f"{'check':<{w}}  {'value':>10}  {'':2}  {'tolerance':>10}  result")
    for c in report["checks"]:
        lines.append(f"{c['name']:<{w}}  {_fmt(c['value']):>10}  {c['comparison']:2}  "
                     f"{_fmt(c['tolerance']):>10}  {'PASS' if c['passed'] else 'FAIL'}")
    lines += ["", "timings (s)"]
    lines += [f"  {k}: {v:.3f}" for k, v in sorted(report["timings"].items())]
    lines += ["", "PASS" if report["passed"] else "FAIL"]
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="resdiv", description="Run a division/residue problem file.")
    ap.add_argument("problem", nargs="?", help="problem file path or builtin:<name>")
    ap.add_argument("--report", help="write the JSON report here")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    ap.add_argument("--debug-nodes", help="append quadrature nodes, weights and integrand values here")
    ap.add_argument("--list-builtins", action="store_true", help="list bundled problems and exit")
    ap.add_argument("--normalize", action="store_true", help="print the normalized problem and exit")
    args = ap.parse_args(argv)

    if args.list_builtins:
        for b in list_builtins():
            print(f"{b['name']:<32} {b['task']:<20} {b['tag']}")
        return EXIT_PASS
    if not args.problem:
        ap.error("a problem file is required")
    set_debug_nodes(args.debug_nodes)
    try:
        problem = load_problem(args.problem)
        if args.normalize:
            print(json.dumps(normalize_problem(problem), indent=2, sort_keys=True, ensure_ascii=False))
            return EXIT_PASS
        report = run(problem, args.threads)
    except (InputError, PreconditionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (QuadratureAbort, NonConvergentLadder, sym.ExprError, ArithmeticError, RuntimeError,
            AssertionError, np.linalg.LinAlgError) as exc:
        print(f"numeric abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        set_debug_nodes(None)
    if args.report:
        Path(args.report).write_text(dumps(report))
    print(summary(report))
    return EXIT_PASS if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
