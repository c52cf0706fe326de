"""Assign each problem to the most specific class in the ontology.

Classes, most specific first along each branch:

    LP < QP < QCQP < SOCP < SDP < ConicProgram      LP < GP

with ConvexNLP for curvature-verified problems outside those patterns and
NLP as the catch-all.  Matching is purely syntactic over the constraint
shapes; the check order below fixes the ties the partial order leaves open.

Convexity is reported as "convex" only when the justifying premise was
machine-checked (PSD verified, posynomial form verified, curvature rules
verified).  "nonconvex" is only reported with a certificate in hand: an
indefinite quadratic form, or a sampled chord violation witness.  Everything
else is "unknown".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .config import sampling_seed
from .errors import EvalDomainError, InvalidProblem, NondifferentiableError, NotGP
from .problem import (
    Constraint, Problem, bind_parameters, canonical_sense, layout_of, residual,
    validate,
)
from .psd import psd_check

CLASSES = ("LP", "QP", "QCQP", "SOCP", "SDP", "ConicProgram", "GP",
           "ConvexNLP", "NLP")

ROOT = "ConvexOptima"

_CLASS_JUSTIFICATION = {
    "LP": "Lemma 1",
    "SOCP": "Lemma 2",
    "SDP": "Lemma 3",
    "GP": "Lemma 4",
    "QP": "Lemma 5",
    "QCQP": "Proposition 2",
    "ConicProgram": "Definition 5",
    "ConvexNLP": "Definition 1",
}

_VIA_CONIC = ("LP", "SOCP", "SDP")


@dataclass(frozen=True)
class Classification:
    problem_class: str
    convexity: str                      # convex | nonconvex | unknown
    degenerate_flags: tuple[str, ...]
    chain: tuple[tuple[str, str], ...]  # (node, justification), root last
    evidence: dict


def ontology_chain(problem_class: str, convexity: str) -> tuple[tuple[str, str], ...]:
    """Membership chain from the detected class up to the convex-optima root.

    Each node after the first carries the justification for the step into
    it from the node before.  Non-convex and unverified problems stay a
    single bare node: no sound chain to the root exists for them.
    """
    if convexity != "convex":
        return ((problem_class, ""),)
    just = _CLASS_JUSTIFICATION[problem_class]
    if problem_class in _VIA_CONIC:
        return ((problem_class, ""), ("ConicProgram", just),
                (ROOT, _CLASS_JUSTIFICATION["ConicProgram"]))
    return ((problem_class, ""), (ROOT, just))


def render_chain(chain: tuple[tuple[str, str], ...]) -> str:
    """One node per line: `<node> [<justification>]`, origin bare."""
    lines = []
    for node, just in chain:
        lines.append(f"{node} [{just}]" if just else node)
    return "\n".join(lines)


def render_chain_inline(chain: tuple[tuple[str, str], ...]) -> str:
    """Single-line form; tagged with the first real justification."""
    nodes = " ⊨ ".join(node for node, _ in chain)
    lead = next((just for _, just in chain if just), "")
    return f"{nodes} [{lead}]" if lead else nodes


# ---------------------------------------------------------------------------
# shape helpers

def _tree_ops(e: ex.Expr) -> set[str]:
    out = {e.op}
    for c in e.children():
        out |= _tree_ops(c)
    return out


def _normalized_rows(p: Problem):
    """Constraints as (expr <= 0 | expr == 0) residuals; cone rows separate."""
    le, eq, cones = [], [], []
    for i, c in enumerate(p.constraints):
        if c.relation == "in-cone":
            cones.append((i, c))
            continue
        h = residual(c)
        if c.relation == "<=":
            le.append((i, h))
        elif c.relation == ">=":
            le.append((i, ex.neg(h)))
        else:
            eq.append((i, h))
    return le, eq, cones


def _affine_of(e: ex.Expr, lay: ex.Layout):
    return ex._extract_affine(e, lay)


def _quadratic_of(e: ex.Expr, lay: ex.Layout):
    return ex._extract_quadratic(e, lay)


def _stack_affine(rows, lay):
    """Extract (A, b) with rows a.x + b <= 0; None if any row is not affine."""
    mats, offs = [], []
    for _, h in rows:
        if "norm2" in _tree_ops(h):
            return None
        got = _affine_of(h, lay)
        if got is None:
            return None
        mats.append(got[0])
        offs.append(got[1])
    if not mats:
        return np.zeros((0, lay.total)), np.zeros(0)
    return np.vstack(mats), np.array(offs)


def _soc_row(e_le: ex.Expr, lay: ex.Layout):
    """Match residual `norm2 - affine <= 0`; returns (A, b, c, d) over the flat
    layout or None."""
    # the residual tree built from (lhs <= rhs) is either a bare norm2 node
    # (rhs == 0) or add(norm2, neg(rhs)); accept the mirrored >= orientation too
    node = e_le
    rest: ex.Expr | None = None
    if node.op == "add" and node.args[0].op == "norm2":
        node, rest = node.args[0], node.args[1]
    if node.op != "norm2":
        return None
    a_m, b_v, name = node.args
    try:
        off, size = lay.slot(name)
    except Exception:
        return None
    if a_m.shape[1] != size:
        return None
    a_full = np.zeros((a_m.shape[0], lay.total))
    a_full[:, off:off + size] = a_m
    if rest is None:
        c_full, d = np.zeros(lay.total), 0.0
    else:
        if "norm2" in _tree_ops(rest):
            return None
        got = _affine_of(rest, lay)
        if got is None:
            return None
        # residual = norm + rest <= 0, so the affine side is -(rest)
        c_full, d = -got[0], -got[1]
    return a_full, np.asarray(b_v, dtype=float).copy(), c_full, d


# ---------------------------------------------------------------------------
# GP normal form (shared with the log-space transform)

def gp_normal_form(p: Problem):
    """Posynomial normal form over the flat layout.

    Returns (objective_terms, le_rows, eq_rows) where objective_terms is
    (C, A), each le row is a divided-through (C, A) table meaning
    sum_k C_k x^{A_k} <= 1, and each eq row is (c, a) meaning c x^a = 1.
    Raises NotGP with the reason when the problem is not in posynomial form.
    """
    lay = layout_of(p)
    for v in p.variables:
        if v.domain != "strictly-positive":
            raise NotGP(f"variable '{v.name}' is not declared strictly-positive")
    obj = ex._extract_posynomial(p.objective, lay)
    if obj is None:
        raise NotGP("objective is not a posynomial")

    def monomial_of(e):
        return ex._extract_monomial(e, lay)

    def posy_of(e):
        return ex._extract_posynomial(e, lay)

    le_rows, eq_rows = [], []
    for i, c in enumerate(p.constraints):
        if c.relation == "in-cone":
            raise NotGP(f"constraint {i} is a cone membership")
        if c.relation == "=":
            ml, mr = monomial_of(c.lhs), monomial_of(c.rhs)
            if ml is None or mr is None:
                raise NotGP(f"constraint {i}: equality sides must both be monomials")
            eq_rows.append((ml[0] / mr[0], ml[1] - mr[1]))
            continue
        lo, hi = (c.lhs, c.rhs) if c.relation == "<=" else (c.rhs, c.lhs)
        posy, mono = posy_of(lo), monomial_of(hi)
        if posy is None or mono is None:
            raise NotGP(f"constraint {i}: needs posynomial <= monomial")
        cm, am = mono
        cs, exps = posy
        le_rows.append((cs / cm, exps - am))
    return obj, le_rows, eq_rows


# ---------------------------------------------------------------------------
# sampled nonconvexity refutation

def _domain_box(ops: set[str]) -> tuple[float, float]:
    if "monomial" in ops or "log" in ops:
        return 0.1, 2.6
    return -2.0, 2.0


def _safe_eval(e, lay, x):
    try:
        return ex.evaluate(e, x, lay)
    except (EvalDomainError, OverflowError):
        return None


def chord_violation(e: ex.Expr, lay: ex.Layout, rng, n_chords: int = 60,
                    margin: float = 1e-7):
    """Search for f(mid) > (f(u)+f(v))/2 + margin; returns a witness or None."""
    lo, hi = _domain_box(_tree_ops(e))
    for _ in range(n_chords):
        u = rng.uniform(lo, hi, lay.total)
        v = rng.uniform(lo, hi, lay.total)
        fu, fv = _safe_eval(e, lay, u), _safe_eval(e, lay, v)
        if fu is None or fv is None:
            continue
        mid = 0.5 * (u + v)
        fm = _safe_eval(e, lay, mid)
        if fm is None:
            continue
        if fm > 0.5 * (fu + fv) + margin:
            return {"u": u, "v": v, "violation": fm - 0.5 * (fu + fv)}
    return None


def _set_nonconvexity(g: ex.Expr, lay: ex.Layout, rng, n_tries: int = 200,
                      margin: float = 1e-7):
    """Witness u, v feasible for g<=0 whose midpoint is not."""
    lo, hi = _domain_box(_tree_ops(g))
    found = []
    for _ in range(n_tries):
        x = rng.uniform(lo, hi, lay.total)
        gx = _safe_eval(g, lay, x)
        if gx is not None and gx <= 0.0:
            found.append(x)
            if len(found) >= 2:
                u, v = found[-2], found[-1]
                gm = _safe_eval(g, lay, 0.5 * (u + v))
                if gm is not None and gm > margin:
                    return {"u": u, "v": v, "violation": gm}
    return None


# ---------------------------------------------------------------------------
# the classifier

def classify(p: Problem) -> Classification:
    """Most specific ontology class, with a checked justification chain."""
    violations = validate(p)
    if violations:
        raise InvalidProblem(violations)
    bound = bind_parameters(p)
    pmin = canonical_sense(bound)
    lay = layout_of(pmin)
    flags: list[str] = []
    if not pmin.constraints:
        flags.append("empty-constraints")

    le, eq, cones = _normalized_rows(pmin)
    obj_ops = _tree_ops(pmin.objective)
    all_ops = set(obj_ops)
    for _, h in le + eq:
        all_ops |= _tree_ops(h)

    obj_aff = None if "norm2" in obj_ops else _affine_of(pmin.objective, lay)

    result = None
    if not cones:
        result = (_match_lp(pmin, lay, le, eq, obj_aff, flags)
                  or _match_qp_qcqp(pmin, lay, le, eq, flags)
                  or _match_socp(pmin, lay, le, eq, obj_aff, flags))
    else:
        result = (_match_sdp(pmin, lay, le, eq, cones, obj_aff, flags)
                  or _match_conic(pmin, lay, le, eq, cones, obj_aff, flags))
    if result is None and not cones:
        result = _match_gp(pmin, flags)
    if result is None:
        result = _match_convex_nlp(pmin, lay, le, eq, cones, flags)
    if result is None:
        result = _fallback_nlp(pmin, lay, le, eq, cones, flags)

    cls, convexity, evidence = result
    return Classification(cls, convexity, tuple(flags),
                          ontology_chain(cls, convexity), evidence)


def _match_lp(p, lay, le, eq, obj_aff, flags):
    if obj_aff is None:
        return None
    ineq = _stack_affine(le, lay)
    eqs = _stack_affine(eq, lay)
    if ineq is None or eqs is None:
        return None
    c, r0 = obj_aff
    return "LP", "convex", {"c": c, "offset": r0, "ineq": ineq, "eq": eqs}


def _match_qp_qcqp(p, lay, le, eq, flags):
    obj_q = _quadratic_of(p.objective, lay)
    if obj_q is None:
        return None
    pm, qv, r0 = obj_q

    rows = []
    quad_rows = 0
    for _, h in le:
        got = _quadratic_of(h, lay)
        if got is None:
            return None
        rows.append(got)
        if np.any(got[0]):
            quad_rows += 1
    eq_quads = []
    for _, h in eq:
        got = _quadratic_of(h, lay)
        if got is None:
            return None
        eq_quads.append(got)
        if np.any(got[0]):
            quad_rows += 1

    obj_psd = psd_check(pm) if np.any(pm) else None
    if quad_rows == 0:
        if obj_psd is None:
            return None  # fully affine; the LP check owns this shape
        convexity = "convex" if obj_psd.is_psd else "nonconvex"
        evidence = {"P": pm, "q": qv, "r": r0, "rows": rows, "eq_rows": eq_quads,
                    "min_eigenvalue": obj_psd.min_eigenvalue}
        return "QP", convexity, evidence

    obj_ok = obj_psd is None or obj_psd.is_psd
    row_ok = all(not np.any(g[0]) or psd_check(g[0]).is_psd for g in rows)
    eq_ok = all(not np.any(g[0]) for g in eq_quads)
    if obj_ok and row_ok and eq_ok:
        convexity = "convex"
    elif obj_psd is not None and not obj_psd.is_psd:
        convexity = "nonconvex"  # objective form bends downward along some line
    else:
        convexity = "unknown"
    evidence = {"objective": obj_q, "rows": rows, "eq_rows": eq_quads}
    return "QCQP", convexity, evidence


def _match_socp(p, lay, le, eq, obj_aff, flags):
    if obj_aff is None:
        return None
    soc_rows, lin_rows = [], []
    for i, h in le:
        row = _soc_row(h, lay)
        if row is not None:
            soc_rows.append(row)
            continue
        if "norm2" in _tree_ops(h):
            return None
        got = _affine_of(h, lay)
        if got is None:
            return None
        lin_rows.append((i, h))
    if not soc_rows:
        return None
    eqs = _stack_affine(eq, lay)
    if eqs is None:
        return None
    ineq = _stack_affine(lin_rows, lay)
    if all(not np.any(a) for a, _, _, _ in soc_rows):
        flags.append("reducible-soc-rows")
    c, r0 = obj_aff
    return "SOCP", "convex", {"f": c, "offset": r0, "soc_rows": soc_rows,
                              "ineq": ineq, "eq": eqs}


def _match_sdp(p, lay, le, eq, cones, obj_aff, flags):
    if obj_aff is None:
        return None
    kinds = {v.name: v.kind for v in p.variables}
    psd_vars = []
    for _, c in cones:
        if c.cone != "positive-semidefinite":
            return None
        name = c.lhs.args[0]
        if kinds.get(name) != "symmetric-matrix":
            return None
        psd_vars.append(name)
    if not psd_vars:
        return None
    ineq = _stack_affine(le, lay)
    eqs = _stack_affine(eq, lay)
    if ineq is None or eqs is None:
        return None
    c, r0 = obj_aff
    return "SDP", "convex", {"c": c, "offset": r0, "cone_vars": tuple(psd_vars),
                             "ineq": ineq, "eq": eqs}


def _match_conic(p, lay, le, eq, cones, obj_aff, flags):
    if obj_aff is None:
        return None
    ineq = _stack_affine(le, lay)
    eqs = _stack_affine(eq, lay)
    if ineq is None or eqs is None:
        return None
    tags = tuple(c.cone for _, c in cones)
    c, r0 = obj_aff
    return "ConicProgram", "convex", {"c": c, "offset": r0, "cones": tags,
                                      "ineq": ineq, "eq": eqs}


def _match_gp(p, flags):
    try:
        obj, le_rows, eq_rows = gp_normal_form(p)
    except NotGP:
        return None
    return "GP", "convex", {"objective_terms": obj, "le_rows": le_rows,
                            "eq_rows": eq_rows}


def _domain_names(p):
    pos = tuple(v.name for v in p.variables if v.domain == "strictly-positive")
    nn = tuple(v.name for v in p.variables if v.domain == "nonnegative")
    return pos, nn


def _match_convex_nlp(p, lay, le, eq, cones, flags):
    if cones:
        return None
    pos, nn = _domain_names(p)
    obj_verdict = ex.curvature(p.objective, positive_vars=pos, nonneg_vars=nn)
    if not obj_verdict.is_convex:
        return None
    row_verdicts = []
    for _, h in le:
        v = ex.curvature(h, positive_vars=pos, nonneg_vars=nn)
        if not v.is_convex:
            return None
        row_verdicts.append(v.kind)
    for _, h in eq:
        if _affine_of(h, lay) is None:
            return None
    return "ConvexNLP", "convex", {"objective_curvature": obj_verdict.kind,
                                   "row_curvatures": tuple(row_verdicts)}


def _fallback_nlp(p, lay, le, eq, cones, flags):
    rng = np.random.default_rng(sampling_seed())
    witness = chord_violation(p.objective, lay, rng)
    where = "objective"
    if witness is None:
        for i, h in le:
            witness = _set_nonconvexity(h, lay, rng)
            if witness is not None:
                where = f"constraint[{i}]"
                break
    if witness is not None:
        return "NLP", "nonconvex", {"witness": witness, "where": where}
    return "NLP", "unknown", {}
