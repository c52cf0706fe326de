"""Problem-rewriting rules with explicit point and value transport.

Every rule returns a :class:`TransformResult` that bundles the rewritten
problem with maps carrying points and optimal values back to the original
problem, plus a certificate describing why the rewrite is sound.  Rules
raise rather than silently producing a problem with different semantics:
``NotReducible`` when a second-order row genuinely needs its cone,
``NotGP`` when posynomial structure is missing, ``ShapeMismatch`` when a
dual shape is not matched, and ``TransformError`` for everything else.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from . import expr as ex
from .classify import classify, gp_normal_form
from .config import DIMENSION_CAP
from .errors import (EvalDomainError, NotGP, NotReducible, ShapeMismatch,
                     TransformError)
from .problem import (Constraint, Problem, VariableSpec, bind_parameters,
                      canonical_sense, layout_of)

__all__ = [
    "ValueMap", "VarMap", "TransformResult", "Pipeline",
    "eq_to_ineq_pair", "socp_to_lp", "gp_log_transform", "lp_dual",
    "phase1_slack", "to_convex_min", "RULES",
]


# ---------------------------------------------------------------------------
# value transport

@dataclass(frozen=True)
class ValueMap:
    """How an optimal value of the rewritten problem maps to the original.

    ``steps`` are recorded in application order; ``to_original`` undoes
    them back to front.  An empty tuple is the identity.
    """

    steps: tuple[tuple, ...] = ()

    def to_original(self, value: float) -> float:
        v = float(value)
        for step in reversed(self.steps):
            tag = step[0]
            if tag == "negate":
                v = -v
            elif tag == "offset":
                v = v + step[1]
            elif tag == "sqrt-shift":
                v = math.sqrt(max(v + step[1], 0.0))
            else:  # pragma: no cover - steps are produced internally
                raise TransformError(f"unknown value-map step {tag!r}")
        return v

    def describe(self) -> list[list]:
        return [list(s) for s in self.steps]


# ---------------------------------------------------------------------------
# point transport

def _as_flat(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float)).ravel()


@dataclass(frozen=True)
class VarMap:
    """A (partial) function between assignments of two problems.

    Kinds:
      identity       rename variables, values untouched
      coordwise-log  target value is log of the source value
      coordwise-exp  target value is exp of the source value
      add-slack      copy everything, append a slack set to max residual
      drop           copy everything except the dropped names
      dual           no point transport exists; ``apply`` raises
    """

    kind: str
    pairs: tuple[tuple[str, str], ...] = ()      # (source name, target name)
    drop_names: tuple[str, ...] = ()
    slack_name: str = ""
    residuals: tuple = ()                        # exprs over the source vars
    source_variables: tuple = ()

    def apply(self, point: Mapping[str, object]) -> dict[str, np.ndarray]:
        if self.kind == "dual":
            raise TransformError(
                "the dual rule relates values, not points; no point map exists")
        if self.kind == "identity":
            return {dst: _as_flat(point[src]) for src, dst in self.pairs}
        if self.kind == "coordwise-log":
            out = {}
            for src, dst in self.pairs:
                vals = _as_flat(point[src])
                if np.any(vals <= 0.0):
                    raise EvalDomainError(
                        f"cannot take log of non-positive component in '{src}'")
                out[dst] = np.log(vals)
            return out
        if self.kind == "coordwise-exp":
            return {dst: np.exp(_as_flat(point[src])) for src, dst in self.pairs}
        if self.kind == "drop":
            return {name: _as_flat(val) for name, val in point.items()
                    if name not in self.drop_names}
        if self.kind == "add-slack":
            out = {name: _as_flat(val) for name, val in point.items()}
            lay = ex.Layout.build([(v.name, v.flat_size) for v in self.source_variables])
            flat = lay.flatten({v.name: _as_flat(point[v.name])
                                for v in self.source_variables})
            worst = -math.inf
            for r in self.residuals:
                worst = max(worst, float(ex.evaluate(r, flat, lay)))
            out[self.slack_name] = np.array([worst if math.isfinite(worst) else 0.0])
            return out
        raise TransformError(f"unknown variable-map kind {self.kind!r}")


_IDENTITY_VALUE = ValueMap()


def _identity_maps(p: Problem) -> tuple[VarMap, VarMap]:
    pairs = tuple((v.name, v.name) for v in p.variables)
    m = VarMap("identity", pairs)
    return m, m


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class TransformResult:
    transformed: Problem
    rule: str
    forward_map: VarMap
    backward_map: VarMap
    value_map: ValueMap | None
    certificate: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class Pipeline:
    """An ordered chain of rewrites applied to one problem."""

    original: Problem
    steps: tuple[TransformResult, ...]

    @property
    def transformed(self) -> Problem:
        return self.steps[-1].transformed if self.steps else self.original

    def value_to_original(self, value: float) -> float:
        v = float(value)
        for step in reversed(self.steps):
            if step.value_map is None:
                raise TransformError(
                    f"rule '{step.rule}' does not preserve objective values")
            v = step.value_map.to_original(v)
        return v

    def point_to_original(self, point: Mapping[str, object]) -> dict:
        cur = dict(point)
        for step in reversed(self.steps):
            cur = step.backward_map.apply(cur)
        return cur

    def point_to_transformed(self, point: Mapping[str, object]) -> dict:
        cur = dict(point)
        for step in self.steps:
            cur = step.forward_map.apply(cur)
        return cur


# ---------------------------------------------------------------------------
# small expression helpers

def _neg_expr(e: ex.Expr) -> ex.Expr:
    if e.op == "const" and not isinstance(e.args[0], str):
        return ex.const(-float(e.args[0]))
    if e.op == "neg":
        return e.args[0]
    return ex.neg(e)


def _is_zero_const(e: ex.Expr) -> bool:
    return e.op == "const" and not isinstance(e.args[0], str) \
        and float(e.args[0]) == 0.0


def _sub_expr(lhs: ex.Expr, rhs: ex.Expr) -> ex.Expr:
    if _is_zero_const(rhs):
        return lhs
    if _is_zero_const(lhs):
        return _neg_expr(rhs)
    return ex.add(lhs, _neg_expr(rhs))


def _map_exprs(e: ex.Expr, fn: Callable[[ex.Expr], ex.Expr | None]) -> ex.Expr:
    """Rebuild ``e`` bottom-up, letting ``fn`` replace whole nodes."""
    got = fn(e)
    if got is not None:
        return got
    if e.op == "add":
        return ex.add(_map_exprs(e.args[0], fn), _map_exprs(e.args[1], fn))
    if e.op == "sum":
        return ex.sum_terms([_map_exprs(t, fn) for t in e.args])
    if e.op == "neg":
        return ex.neg(_map_exprs(e.args[0], fn))
    if e.op == "scale":
        return ex.scale(e.args[0], _map_exprs(e.args[1], fn))
    if e.op == "exp":
        return ex.exp(_map_exprs(e.args[0], fn))
    if e.op == "log":
        return ex.log(_map_exprs(e.args[0], fn))
    if e.op == "pow":
        return ex.power(_map_exprs(e.args[0], fn), e.args[1])
    return e


# ---------------------------------------------------------------------------
# rule: split equalities into inequality pairs

def eq_to_ineq_pair(p: Problem) -> TransformResult:
    """Replace every ``h = 0`` row by the pair ``h <= 0``, ``-h <= 0``.

    The pair sits where the equality sat, original side first.  Points
    and values are untouched.
    """
    new_cons: list[Constraint] = []
    split: list[int] = []
    for i, c in enumerate(p.constraints):
        if c.relation == "=":
            new_cons.append(Constraint(c.lhs, "<=", c.rhs))
            new_cons.append(Constraint(_neg_expr(c.lhs), "<=", _neg_expr(c.rhs)))
            split.append(i)
        else:
            new_cons.append(c)
    q = replace(p, constraints=tuple(new_cons))
    fwd, bwd = _identity_maps(p)
    return TransformResult(
        q, "eq-to-ineq", fwd, bwd, _IDENTITY_VALUE,
        certificate={"split_rows": split},
        notes=("each equality became two opposing inequalities in place",),
    )


# ---------------------------------------------------------------------------
# rule: reduce degenerate second-order rows to linear rows

def socp_to_lp(p: Problem) -> TransformResult:
    """Rewrite ``||A x + b|| <= t`` rows whose ``A`` is all zero.

    Such a row pins a constant ``||b||`` under the right-hand side, so the
    cone is not doing any work.  Raises :class:`NotReducible` with the row
    index as soon as one row has a nonzero ``A``.
    """
    before = classify(p)
    if before.problem_class != "SOCP":
        raise TransformError(
            "the second-order reduction applies to SOCP problems; "
            f"this one classified as {before.problem_class}")
    bound = bind_parameters(p)

    reduced: list[int] = []

    def visit(i: int):
        def fn(e: ex.Expr):
            if e.op == "norm2":
                a_mat, b_vec = e.args[0], e.args[1]
                if np.any(a_mat):
                    raise NotReducible(i)
                reduced.append(i)
                return ex.const(float(np.linalg.norm(b_vec)))
            return None
        return fn

    new_cons = []
    for i, c in enumerate(bound.constraints):
        new_cons.append(Constraint(
            _map_exprs(c.lhs, visit(i)), c.relation,
            _map_exprs(c.rhs, visit(i)), c.cone))
    q = replace(bound, constraints=tuple(new_cons))
    after = classify(q)
    fwd, bwd = _identity_maps(p)
    return TransformResult(
        q, "socp-to-lp", fwd, bwd, _IDENTITY_VALUE,
        certificate={"rows_reduced": sorted(set(reduced)),
                     "result_class": after.problem_class},
        notes=("every second-order row had a zero matrix; its norm is a constant",),
    )


# ---------------------------------------------------------------------------
# rule: log-space rewrite of a geometric program

def _affine_expr(coeffs: np.ndarray, constant: float, slots: list[tuple[str, int | None]]) -> ex.Expr:
    """Minimal expression for ``coeffs . y + constant`` over named slots."""
    terms: list[ex.Expr] = []
    for a, (name, idx) in zip(coeffs, slots):
        if a == 0.0:
            continue
        v = ex.var(name, idx)
        if a == 1.0:
            terms.append(v)
        elif a == -1.0:
            terms.append(ex.neg(v))
        else:
            terms.append(ex.scale(float(a), v))
    if constant != 0.0:
        terms.append(ex.const(float(constant)))
    if not terms:
        return ex.const(0.0)
    if len(terms) == 1:
        return terms[0]
    if len(terms) == 2:
        return ex.add(terms[0], terms[1])
    return ex.sum_terms(terms)


def _exp_term(c: float, a_row: np.ndarray, slots) -> ex.Expr:
    if not np.any(a_row):
        return ex.const(float(c))
    return ex.exp(_affine_expr(a_row, math.log(c), slots))


def _combine(terms: list[ex.Expr]) -> ex.Expr:
    if not terms:
        return ex.const(0.0)
    if len(terms) == 1:
        return terms[0]
    if len(terms) == 2:
        return ex.add(terms[0], terms[1])
    return ex.sum_terms(terms)


def gp_log_transform(p: Problem) -> TransformResult:
    """Substitute every coordinate by its logarithm in a geometric program.

    Each posynomial term ``c * x^a`` becomes ``exp(a . y + log c)``; the
    substituted problem has free variables, a convex objective, and convex
    rows, while objective values are left exactly as they were.
    """
    bound = bind_parameters(p)
    obj_terms, le_rows, eq_rows = gp_normal_form(bound)
    lay = layout_of(bound)

    rename = {v.name: v.name + "_log" for v in bound.variables}
    slots: list[tuple[str, int | None]] = []
    for v in bound.variables:
        n = v.flat_size
        for j in range(n):
            slots.append((rename[v.name], j if (v.kind != "scalar") else None))
    assert len(slots) == lay.total

    new_vars = tuple(
        VariableSpec(rename[v.name], v.kind, v.dim, "free") for v in bound.variables)

    c_obj, a_obj = obj_terms
    objective = _combine([_exp_term(c, a, slots) for c, a in zip(c_obj, a_obj)])

    new_cons: list[Constraint] = []
    for cs, exps in le_rows:
        if len(cs) == 1:
            lhs = _affine_expr(exps[0], 0.0, slots)
            new_cons.append(Constraint(lhs, "<=", ex.const(float(-math.log(cs[0])))))
        else:
            body = _combine([_exp_term(c, a, slots) for c, a in zip(cs, exps)])
            new_cons.append(Constraint(body, "<=", ex.const(1.0)))
    for c_eq, a_eq in eq_rows:
        lhs = _affine_expr(a_eq, 0.0, slots)
        new_cons.append(Constraint(lhs, "=", ex.const(float(-math.log(c_eq)))))

    q = Problem(new_vars, bound.sense, objective, tuple(new_cons), {})
    after = classify(q)
    pairs = tuple((v.name, rename[v.name]) for v in bound.variables)
    back_pairs = tuple((dst, src) for src, dst in pairs)
    return TransformResult(
        q, "gp-log", VarMap("coordwise-log", pairs),
        VarMap("coordwise-exp", back_pairs), _IDENTITY_VALUE,
        certificate={"objective_terms": len(c_obj),
                     "result_class": after.problem_class,
                     "result_convexity": after.convexity},
        notes=("objective values are preserved: the rewritten objective is "
               "the original posynomial evaluated at the exponentiated point",),
    )


# ---------------------------------------------------------------------------
# rule: dual of a linear program in inequality form

def _stack_le_rows(p: Problem, lay: ex.Layout):
    rows, rhs = [], []
    for i, c in enumerate(p.constraints):
        if c.relation not in ("<=", ">="):
            raise ShapeMismatch(
                f"constraint {i}: the dual rule handles inequality rows only")
        g = _sub_expr(c.lhs, c.rhs) if c.relation == "<=" else _sub_expr(c.rhs, c.lhs)
        aff = ex._extract_affine(g, lay)
        if aff is None:
            raise ShapeMismatch(f"constraint {i} is not affine")
        a, k = aff
        rows.append(a)
        rhs.append(-k)
    return np.array(rows, dtype=float), np.array(rhs, dtype=float)


def lp_dual(p: Problem) -> TransformResult:
    """Dual of ``max c.x  s.t.  A x <= b`` with all-nonnegative or all-free x.

    Nonnegative primal coordinates give ``min b.y  s.t.  A' y >= c, y >= 0``;
    free primal coordinates turn those rows into equalities.  Optimal values
    coincide whenever both problems are feasible.
    """
    bound = bind_parameters(p)
    if bound.sense != "maximize":
        raise ShapeMismatch("the dual rule expects a maximization as written")
    lay = layout_of(bound)
    aff = ex._extract_affine(bound.objective, lay)
    if aff is None:
        raise ShapeMismatch("objective is not linear")
    c_vec, c_const = aff
    if c_const != 0.0:
        raise ShapeMismatch("objective has a constant term; fold it out first")
    domains = {v.domain for v in bound.variables}
    if domains == {"nonnegative"}:
        variant = "inequality-nonneg"
    elif domains == {"free"}:
        variant = "inequality-free"
    else:
        raise ShapeMismatch(
            "primal coordinates must be all nonnegative or all free")
    if not bound.constraints:
        raise ShapeMismatch("the dual rule needs at least one inequality row")
    a_mat, b_vec = _stack_le_rows(bound, lay)
    m, n = a_mat.shape
    if m > DIMENSION_CAP:
        raise TransformError(
            f"dual variable would have {m} components; the cap is {DIMENSION_CAP}")

    rel = ">=" if variant == "inequality-nonneg" else "="
    cons = tuple(
        Constraint(ex.dot(a_mat[:, j], "y"), rel, ex.const(float(c_vec[j])))
        for j in range(n))
    q = Problem(
        (VariableSpec("y", "vector", m, "nonnegative"),),
        "minimize", ex.dot(b_vec, "y"), cons, {})
    dual_map = VarMap("dual")
    return TransformResult(
        q, "lp-dual", dual_map, dual_map, _IDENTITY_VALUE,
        certificate={"primal_shape": variant, "rows": m, "cols": n},
        notes=("optimal values agree when both problems are feasible",),
    )


# ---------------------------------------------------------------------------
# rule: shared-slack feasibility problem

def phase1_slack(p: Problem) -> TransformResult:
    """Minimize one shared slack bounding every inequality residual.

    The original problem is feasible exactly when the rewritten optimum is
    at most zero (an unbounded-below slack also certifies feasibility).
    Objective values do not transport: ``value_map`` is ``None``.
    """
    for i, c in enumerate(p.constraints):
        if c.relation not in ("<=", ">="):
            raise TransformError(
                f"constraint {i}: rewrite equalities/cones first "
                "(the eq-to-ineq rule splits equalities)")
    bound = bind_parameters(p)
    taken = {v.name for v in bound.variables}
    slack = "s"
    while slack in taken:
        slack += "_"

    residuals = []
    new_cons = []
    for c in bound.constraints:
        h = _sub_expr(c.lhs, c.rhs) if c.relation == "<=" \
            else _sub_expr(c.rhs, c.lhs)
        residuals.append(h)
        new_cons.append(Constraint(h, "<=", ex.var(slack)))
    q = Problem(
        tuple(bound.variables) + (VariableSpec(slack),),
        "minimize", ex.var(slack), tuple(new_cons), {})
    pairs = tuple((v.name, v.name) for v in bound.variables)
    fwd = VarMap("add-slack", pairs, slack_name=slack,
                 residuals=tuple(residuals),
                 source_variables=tuple(bound.variables))
    bwd = VarMap("drop", drop_names=(slack,))
    return TransformResult(
        q, "phase1-slack", fwd, bwd, None,
        certificate={"slack": slack, "rows": len(new_cons)},
        notes=("feasible iff the optimal slack is <= 0; unbounded below "
               "also certifies feasibility",),
    )


# ---------------------------------------------------------------------------
# composite: drive a problem toward a convex minimization

def to_convex_min(p: Problem) -> Pipeline:
    """Chain of safe rewrites toward a convex minimization.

    Applies, in order and only when applicable: objective negation for
    maximizations, squaring of a plain least-squares objective (with a
    square-root value map), the geometric-program log substitution, and
    the degenerate second-order reduction.
    """
    steps: list[TransformResult] = []
    cur = bind_parameters(p)

    if cur.sense == "maximize":
        q = canonical_sense(cur)
        fwd, bwd = _identity_maps(cur)
        steps.append(TransformResult(
            q, "negate-objective", fwd, bwd, ValueMap((("negate",),)),
            certificate={},
            notes=("maximization restated as minimizing the negated objective",)))
        cur = q

    if cur.objective.op == "norm2":
        a_mat, b_vec, vname = cur.objective.args
        # ||A x + b||^2 = x'A'A x + 2 b'A x + b'b
        p_mat = 2.0 * (a_mat.T @ a_mat)
        q_vec = 2.0 * (a_mat.T @ b_vec)
        shift = float(b_vec @ b_vec)
        if np.any(q_vec):
            new_obj = ex.add(ex.quad(p_mat, vname), ex.dot(q_vec, vname))
        else:
            new_obj = ex.quad(p_mat, vname)
        q = replace(cur, objective=new_obj)
        fwd, bwd = _identity_maps(cur)
        steps.append(TransformResult(
            q, "square-norm-objective", fwd, bwd,
            ValueMap((("sqrt-shift", shift),)),
            certificate={"shift": shift},
            notes=("minimizing a norm and its square pick the same points",)))
        cur = q

    verdict = classify(cur)
    if verdict.problem_class == "GP":
        step = gp_log_transform(cur)
        steps.append(step)
        cur = step.transformed
    elif verdict.problem_class == "SOCP" \
            and "reducible-soc-rows" in verdict.degenerate_flags:
        step = socp_to_lp(cur)
        steps.append(step)
        cur = step.transformed

    return Pipeline(original=p, steps=tuple(steps))


RULES: dict[str, Callable[[Problem], TransformResult]] = {
    "eq-to-ineq": eq_to_ineq_pair,
    "socp-to-lp": socp_to_lp,
    "gp-log": gp_log_transform,
    "lp-dual": lp_dual,
    "phase1-slack": phase1_slack,
}
