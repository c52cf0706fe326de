"""Problem container and the `.optproblem.json` file format.

A problem file is a JSON object with keys, in this order:

    variables    list of {"name", "kind", "dim"?, "domain"}
    sense        "minimize" | "maximize"
    objective    expression object {"op": ..., "args": [...]}
    constraints  list of {"lhs", "relation", "rhs", "cone"?}
    parameters   {"name": number, ...}

Variable kinds: "scalar", "vector" (with "dim"), "symmetric-matrix" (with
"dim" = side length; it occupies dim*dim row-major slots).  Domains: "free",
"nonnegative", "strictly-positive".  Relations: "<=", "=", ">=", "in-cone"
with cone "second-order" or "positive-semidefinite" (lhs then must be a bare
variable reference and rhs the constant 0).

The serializer is byte-stable: fixed key order, two-space indent, floats in
shortest round-trip form.  A ">=" row is stored exactly as written; only
classifiers and solvers flip it to "<=" internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from . import expr as ex
from .config import DIMENSION_CAP, DEFAULT_TOLERANCES
from .errors import ProblemFormatError, UnboundParameterError

SENSES = ("minimize", "maximize")
RELATIONS = ("<=", "=", ">=", "in-cone")
CONES = ("second-order", "positive-semidefinite")
KINDS = ("scalar", "vector", "symmetric-matrix")
DOMAINS = ("free", "nonnegative", "strictly-positive")


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str = "scalar"
    dim: int = 1
    domain: str = "free"

    @property
    def flat_size(self) -> int:
        if self.kind == "symmetric-matrix":
            return self.dim * self.dim
        return self.dim if self.kind == "vector" else 1


@dataclass(frozen=True)
class Constraint:
    lhs: ex.Expr
    relation: str
    rhs: ex.Expr
    cone: str | None = None


@dataclass(frozen=True)
class Problem:
    variables: tuple[VariableSpec, ...]
    sense: str
    objective: ex.Expr
    constraints: tuple[Constraint, ...] = ()
    parameters: Mapping[str, float] = field(default_factory=dict)

    def spec(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)


def layout_of(p: Problem) -> ex.Layout:
    return ex.Layout.build([(v.name, v.flat_size) for v in p.variables])


# ---------------------------------------------------------------------------
# parsing

def _fail(msg, where=None):
    raise ProblemFormatError(msg, where=where)


def _parse_expr(obj, where: str) -> ex.Expr:
    if not isinstance(obj, dict):
        _fail(f"{where}: expression must be an object, got {type(obj).__name__}", where)
    extra = set(obj) - {"op", "args"}
    if extra:
        _fail(f"{where}: unknown expression keys {sorted(extra)}", where)
    op = obj.get("op")
    if op not in ex.OPS:
        _fail(f"{where}: unknown op '{op}'", where)
    args = obj.get("args")
    if not isinstance(args, list):
        _fail(f"{where}: args must be a list", where)

    def sub(i):
        return _parse_expr(args[i], f"{where}.args[{i}]")

    def num(i, what="a number"):
        if not isinstance(args[i], (int, float)) or isinstance(args[i], bool):
            _fail(f"{where}: args[{i}] must be {what}", where)
        return float(args[i])

    def name(i):
        if not isinstance(args[i], str):
            _fail(f"{where}: args[{i}] must be a variable name", where)
        return args[i]

    def vec(i):
        v = args[i]
        if not isinstance(v, list) or not all(
                isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
            _fail(f"{where}: args[{i}] must be a numeric vector", where)
        return v

    def mat(i):
        m = args[i]
        if (not isinstance(m, list) or not m
                or not all(isinstance(r, list) for r in m)
                or len({len(r) for r in m}) != 1
                or not all(isinstance(t, (int, float)) and not isinstance(t, bool)
                           for r in m for t in r)):
            _fail(f"{where}: args[{i}] must be a numeric matrix (list of equal-length rows)",
                  where)
        return m

    try:
        if op == "const":
            if len(args) != 1:
                _fail(f"{where}: const takes one argument", where)
            if isinstance(args[0], str):
                return ex.const(args[0])
            return ex.const(num(0))
        if op == "var":
            if len(args) == 1:
                return ex.var(name(0))
            if len(args) == 2:
                if not isinstance(args[1], int) or isinstance(args[1], bool):
                    _fail(f"{where}: var index must be an integer", where)
                return ex.var(name(0), args[1])
            _fail(f"{where}: var takes a name and an optional index", where)
        if op == "add":
            if len(args) != 2:
                _fail(f"{where}: add takes exactly two subexpressions", where)
            return ex.add(sub(0), sub(1))
        if op == "sum":
            if len(args) < 1:
                _fail(f"{where}: sum takes at least one subexpression", where)
            return ex.sum_terms(sub(i) for i in range(len(args)))
        if op == "neg":
            if len(args) != 1:
                _fail(f"{where}: neg takes one subexpression", where)
            return ex.neg(sub(0))
        if op == "scale":
            if len(args) != 2:
                _fail(f"{where}: scale takes a factor and a subexpression", where)
            factor = args[0] if isinstance(args[0], str) else num(0)
            return ex.scale(factor, sub(1))
        if op == "dot":
            if len(args) != 2:
                _fail(f"{where}: dot takes a coefficient vector and a variable name", where)
            return ex.dot(vec(0), name(1))
        if op == "quad":
            if len(args) != 2:
                _fail(f"{where}: quad takes a matrix and a variable name", where)
            return ex.quad(mat(0), name(1))
        if op == "norm2":
            if len(args) != 3:
                _fail(f"{where}: norm2 takes a matrix, an offset vector and a variable name",
                      where)
            return ex.norm2(mat(0), vec(1), name(2))
        if op == "exp":
            if len(args) != 1:
                _fail(f"{where}: exp takes one subexpression", where)
            return ex.exp(sub(0))
        if op == "log":
            if len(args) != 1:
                _fail(f"{where}: log takes one subexpression", where)
            return ex.log(sub(0))
        if op == "pow":
            if len(args) != 2:
                _fail(f"{where}: pow takes a subexpression and a real exponent", where)
            return ex.power(sub(0), num(1, "a real exponent"))
        if op == "monomial":
            if len(args) != 3:
                _fail(f"{where}: monomial takes a coefficient, an exponent vector "
                      "and a variable name", where)
            return ex.monomial(num(0), vec(1), name(2))
    except ValueError as err:
        _fail(f"{where}: {err}", where)
    raise AssertionError("unreachable")


def parse_problem(text: str) -> Problem:
    """Parse problem JSON; raises ProblemFormatError with position or field."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProblemFormatError(
            f"invalid JSON at line {err.lineno}, column {err.colno}: {err.msg}",
            line=err.lineno, col=err.colno) from None
    if not isinstance(raw, dict):
        _fail("top level must be a JSON object")
    extra = set(raw) - {"variables", "sense", "objective", "constraints", "parameters"}
    if extra:
        _fail(f"unknown top-level keys {sorted(extra)}")
    for key in ("variables", "sense", "objective"):
        if key not in raw:
            _fail(f"missing required key '{key}'", key)

    if not isinstance(raw["variables"], list) or not raw["variables"]:
        _fail("variables must be a non-empty list", "variables")
    specs = []
    for i, v in enumerate(raw["variables"]):
        where = f"variables[{i}]"
        if not isinstance(v, dict):
            _fail(f"{where}: must be an object", where)
        extra = set(v) - {"name", "kind", "dim", "domain"}
        if extra:
            _fail(f"{where}: unknown keys {sorted(extra)}", where)
        vname = v.get("name")
        if not isinstance(vname, str) or not vname:
            _fail(f"{where}: name must be a non-empty string", where)
        kind = v.get("kind", "scalar")
        if kind not in KINDS:
            _fail(f"{where}: kind must be one of {KINDS}", where)
        domain = v.get("domain", "free")
        if domain not in DOMAINS:
            _fail(f"{where}: domain must be one of {DOMAINS}", where)
        dim = v.get("dim", 1)
        if kind == "scalar":
            if dim != 1:
                _fail(f"{where}: scalar variables have dim 1", where)
        else:
            if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
                _fail(f"{where}: dim must be a positive integer", where)
        specs.append(VariableSpec(vname, kind, dim, domain))

    sense = raw["sense"]
    if sense not in SENSES:
        _fail(f"sense must be 'minimize' or 'maximize', got {sense!r}", "sense")

    objective = _parse_expr(raw["objective"], "objective")

    constraints = []
    raw_cons = raw.get("constraints", [])
    if not isinstance(raw_cons, list):
        _fail("constraints must be a list", "constraints")
    for i, c in enumerate(raw_cons):
        where = f"constraints[{i}]"
        if not isinstance(c, dict):
            _fail(f"{where}: must be an object", where)
        extra = set(c) - {"lhs", "relation", "rhs", "cone"}
        if extra:
            _fail(f"{where}: unknown keys {sorted(extra)}", where)
        rel = c.get("relation")
        if rel not in RELATIONS:
            _fail(f"{where}: relation must be one of {RELATIONS}", where)
        cone = c.get("cone")
        if rel == "in-cone":
            if cone not in CONES:
                _fail(f"{where}: cone must be one of {CONES}", where)
        elif cone is not None:
            _fail(f"{where}: cone tag is only valid with relation 'in-cone'", where)
        if "lhs" not in c or "rhs" not in c:
            _fail(f"{where}: needs lhs and rhs", where)
        lhs = _parse_expr(c["lhs"], f"{where}.lhs")
        rhs = _parse_expr(c["rhs"], f"{where}.rhs")
        constraints.append(Constraint(lhs, rel, rhs, cone))

    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        _fail("parameters must be an object", "parameters")
    for k, v in params.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            _fail(f"parameters['{k}'] must be a number", "parameters")
    params = {k: float(v) for k, v in params.items()}

    p = Problem(tuple(specs), sense, objective, tuple(constraints), params)

    # reference errors are parse errors: report them with the offending field
    declared = {v.name for v in specs}
    _check_references(p.objective, declared, "objective")
    for i, c in enumerate(p.constraints):
        _check_references(c.lhs, declared, f"constraints[{i}].lhs")
        _check_references(c.rhs, declared, f"constraints[{i}].rhs")
    return p


def _check_references(e: ex.Expr, declared: set[str], where: str):
    missing = ex.referenced_names(e) - declared
    if missing:
        _fail(f"{where}: undeclared variable '{sorted(missing)[0]}'", where)


# ---------------------------------------------------------------------------
# serialization

def _num_json(v: float):
    f = float(v)
    if f == int(f) and abs(f) < 1e15:
        return int(f)
    return f


def _expr_json(e: ex.Expr):
    args = []
    for a in e.args:
        if isinstance(a, ex.Expr):
            args.append(_expr_json(a))
        elif isinstance(a, str):
            args.append(a)
        elif isinstance(a, np.ndarray):
            if a.ndim == 1:
                args.append([_num_json(t) for t in a])
            else:
                args.append([[_num_json(t) for t in row] for row in a])
        elif isinstance(a, int):
            args.append(a)
        else:
            args.append(_num_json(a))
    return {"op": e.op, "args": args}


def serialize_problem(p: Problem) -> str:
    """Byte-stable JSON: fixed key order, two-space indent, trailing newline."""
    out = {"variables": []}
    for v in p.variables:
        entry = {"name": v.name, "kind": v.kind}
        if v.kind != "scalar":
            entry["dim"] = v.dim
        entry["domain"] = v.domain
        out["variables"].append(entry)
    out["sense"] = p.sense
    out["objective"] = _expr_json(p.objective)
    out["constraints"] = []
    for c in p.constraints:
        entry = {"lhs": _expr_json(c.lhs), "relation": c.relation,
                 "rhs": _expr_json(c.rhs)}
        if c.cone is not None:
            entry["cone"] = c.cone
        out["constraints"].append(entry)
    out["parameters"] = {k: _num_json(p.parameters[k]) for k in sorted(p.parameters)}
    return json.dumps(out, indent=2) + "\n"


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    where: str

    def __str__(self):
        return f"{self.code} at {self.where}: {self.message}"


def _payload_var_sizes(e: ex.Expr) -> Iterable[tuple[str, int, str]]:
    """Yield (varname, required_flat_size, where-ish) for payload-bearing atoms."""
    if e.op == "dot":
        yield e.args[1], e.args[0].size, "dot"
    elif e.op == "quad":
        yield e.args[1], e.args[0].shape[0], "quad"
    elif e.op == "norm2":
        yield e.args[2], e.args[0].shape[1], "norm2"
    elif e.op == "monomial":
        yield e.args[2], e.args[1].size, "monomial"
    for c in e.children():
        yield from _payload_var_sizes(c)


def _walk(e: ex.Expr):
    yield e
    for c in e.children():
        yield from _walk(c)


def validate(p: Problem) -> list[Violation]:
    """Check model invariants; an empty list means the problem is well formed."""
    out: list[Violation] = []
    seen = set()
    total = 0
    for v in p.variables:
        if v.name in seen:
            out.append(Violation("DUPLICATE_VARIABLE", f"variable '{v.name}' declared twice",
                                 "variables"))
        seen.add(v.name)
        total += v.flat_size
    if total > DIMENSION_CAP:
        out.append(Violation("DIMENSION_CAP",
                             f"{total} scalar components exceed the cap of {DIMENSION_CAP}",
                             "variables"))
    clash = seen & set(p.parameters)
    for name in sorted(clash):
        out.append(Violation("PARAM_NAME_CLASH",
                             f"'{name}' is both a variable and a parameter", "parameters"))
    for k, v in p.parameters.items():
        if not np.isfinite(v):
            out.append(Violation("NONFINITE_PAYLOAD", f"parameter '{k}' is not finite",
                                 "parameters"))

    sizes = {v.name: v.flat_size for v in p.variables}
    kinds = {v.name: v.kind for v in p.variables}

    def check_expr(e: ex.Expr, where: str, cone_lhs: bool = False):
        for name in ex.referenced_names(e) - set(sizes):
            out.append(Violation("UNDECLARED_VARIABLE",
                                 f"undeclared variable '{name}'", where))
        for name in ex.parameter_names(e) - set(p.parameters):
            out.append(Violation("UNBOUND_PARAMETER",
                                 f"parameter '{name}' has no value", where))
        for node in _walk(e):
            if node.op == "var":
                name = node.args[0]
                if name not in sizes:
                    continue
                if len(node.args) == 2:
                    if not (0 <= node.args[1] < sizes[name]):
                        out.append(Violation("INDEX_RANGE",
                                             f"index {node.args[1]} out of range for "
                                             f"'{name}' of size {sizes[name]}", where))
                elif sizes[name] != 1 and not (cone_lhs and node is e):
                    out.append(Violation("NON_SCALAR_REF",
                                         f"bare reference to non-scalar variable '{name}'",
                                         where))
            elif node.op == "monomial":
                if node.args[0] <= 0:
                    out.append(Violation("MONOMIAL_NONPOSITIVE_COEFF",
                                         f"monomial coefficient {node.args[0]} is not positive",
                                         where))
            elif node.op == "quad":
                if ex.quad_asymmetry(node) > DEFAULT_TOLERANCES.asymmetry:
                    out.append(Violation("ASYMMETRIC_Q",
                                         f"quadratic payload asymmetry "
                                         f"{ex.quad_asymmetry(node):.3g}", where))
            for a in node.args:
                if isinstance(a, np.ndarray) and not np.all(np.isfinite(a)):
                    out.append(Violation("NONFINITE_PAYLOAD",
                                         "payload has non-finite entries", where))
                if isinstance(a, float) and not np.isfinite(a):
                    out.append(Violation("NONFINITE_PAYLOAD",
                                         "payload has non-finite entries", where))
        for name, need, what in _payload_var_sizes(e):
            if name in sizes and sizes[name] != need:
                out.append(Violation("DIM_MISMATCH",
                                     f"{what} payload expects size {need}, variable "
                                     f"'{name}' has {sizes[name]}", where))

    check_expr(p.objective, "objective")
    for i, c in enumerate(p.constraints):
        where = f"constraints[{i}]"
        check_expr(c.lhs, where + ".lhs", cone_lhs=(c.relation == "in-cone"))
        check_expr(c.rhs, where + ".rhs")
        if c.relation == "in-cone":
            if c.lhs.op != "var" or len(c.lhs.args) != 1:
                out.append(Violation("CONE_LHS_NOT_VAR",
                                     "cone membership needs a bare variable reference",
                                     where))
            else:
                name = c.lhs.args[0]
                kind = kinds.get(name)
                if c.cone == "positive-semidefinite" and kind != "symmetric-matrix":
                    out.append(Violation("BAD_CONE_TAG",
                                         "positive-semidefinite cone needs a "
                                         "symmetric-matrix variable", where))
                if c.cone == "second-order" and kind not in ("vector", "scalar"):
                    out.append(Violation("BAD_CONE_TAG",
                                         "second-order cone needs a vector variable", where))
            if not (c.rhs.op == "const" and c.rhs.args[0] == 0.0):
                out.append(Violation("CONE_RHS_NOT_ZERO",
                                     "cone membership rhs must be the constant 0", where))
    return out


# ---------------------------------------------------------------------------
# canonicalization helpers

def bind_parameters(p: Problem, overrides: Mapping[str, float] | None = None) -> Problem:
    """Substitute bound parameter values into every expression."""
    params = dict(p.parameters)
    if overrides:
        params.update({k: float(v) for k, v in overrides.items()})
    used = ex.parameter_names(p.objective)
    for c in p.constraints:
        used |= ex.parameter_names(c.lhs) | ex.parameter_names(c.rhs)
    missing = used - set(params)
    if missing:
        raise UnboundParameterError(f"no value for parameter '{sorted(missing)[0]}'")
    if not used:
        return replace(p, parameters={})
    obj = ex.bind(p.objective, params)
    cons = tuple(Constraint(ex.bind(c.lhs, params), c.relation,
                            ex.bind(c.rhs, params), c.cone)
                 for c in p.constraints)
    return Problem(p.variables, p.sense, obj, cons, {})


def canonical_sense(p: Problem) -> Problem:
    """Minimize-form view: maximize f becomes minimize -f, constraints kept.

    Idempotent; the caller recovers the flip from the input's sense.
    """
    if p.sense == "minimize":
        return p
    return replace(p, sense="minimize", objective=ex.neg(p.objective))


def residual(c: Constraint) -> ex.Expr:
    """lhs - rhs as an expression tree."""
    if c.rhs.op == "const" and not isinstance(c.rhs.args[0], str) and c.rhs.args[0] == 0.0:
        return c.lhs
    return ex.add(c.lhs, ex.neg(c.rhs))


def inequality_form(p: Problem) -> list[tuple[ex.Expr, str]]:
    """The problem's constraints as a flat list of (g, tag) with g <= 0.

    Order (this is also the multiplier convention shared by solvers and
    certificates): declared constraints in file order, where "<=" produces
    one row, ">=" one negated row, "=" the pair (g, -g); then one row
    -x_j <= 0 per nonnegative or strictly-positive scalar component in layout
    order.  Cone rows are not inequalities and are rejected here.
    """
    rows: list[tuple[ex.Expr, str]] = []
    for i, c in enumerate(p.constraints):
        if c.relation == "in-cone":
            raise ValueError("cone membership rows have no inequality form")
        h = residual(c)
        if c.relation == "<=":
            rows.append((h, f"constraint[{i}]"))
        elif c.relation == ">=":
            rows.append((ex.neg(h), f"constraint[{i}]"))
        else:
            rows.append((h, f"constraint[{i}]+"))
            rows.append((ex.neg(h), f"constraint[{i}]-"))
    for v in p.variables:
        if v.domain in ("nonnegative", "strictly-positive"):
            for j in range(v.flat_size):
                idx = j if v.flat_size > 1 else None
                rows.append((ex.neg(ex.var(v.name, idx)) if idx is not None
                             else ex.neg(ex.var(v.name)), f"bound[{v.name}[{j}]]"))
    return rows
