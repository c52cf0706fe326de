"""Rewriting rules: soundness of each map and certificate."""

import math

import numpy as np
import pytest

from optontology import expr as E
from optontology.errors import (
    EvalDomainError,
    NotGP,
    NotReducible,
    ShapeMismatch,
    TransformError,
)
from optontology.problem import (
    Constraint,
    Problem,
    VariableSpec,
    layout_of,
    parse_problem,
)
from optontology.solvers import solve_simplex
from optontology.transforms import (
    RULES,
    Pipeline,
    ValueMap,
    VarMap,
    eq_to_ineq_pair,
    gp_log_transform,
    lp_dual,
    phase1_slack,
    socp_to_lp,
    to_convex_min,
)

from conftest import golden_text


def _golden(name):
    return parse_problem(golden_text(name))


def test_rule_registry_names():
    assert set(RULES) == {"eq-to-ineq", "socp-to-lp", "gp-log", "lp-dual",
                          "phase1-slack"}


# ---------------------------------------------------------------------------
# value and point maps

def test_value_map_steps_unwind_back_to_front():
    vm = ValueMap((("offset", 3.0), ("negate",)))
    # applied order: offset then negate; undone: negate first, then offset
    assert vm.to_original(-5.0) == pytest.approx(8.0)
    assert ValueMap().to_original(4.25) == 4.25
    assert ValueMap((("sqrt-shift", 9.0),)).to_original(16.0) == pytest.approx(5.0)
    # the shifted value is clamped at zero before the root
    assert ValueMap((("sqrt-shift", 1.0),)).to_original(-2.0) == 0.0
    assert vm.describe() == [["offset", 3.0], ["negate"]]


def test_var_map_kinds():
    ident = VarMap("identity", (("x", "y"),))
    assert ident.apply({"x": [1.0, 2.0]})["y"] == pytest.approx([1.0, 2.0])
    logm = VarMap("coordwise-log", (("x", "x_log"),))
    assert logm.apply({"x": [1.0, math.e]})["x_log"] == pytest.approx([0.0, 1.0])
    with pytest.raises(EvalDomainError):
        logm.apply({"x": [0.0]})
    expm = VarMap("coordwise-exp", (("x_log", "x"),))
    assert expm.apply({"x_log": [0.0, 1.0]})["x"] == pytest.approx([1.0, math.e])
    dual = VarMap("dual")
    with pytest.raises(TransformError, match="no point map"):
        dual.apply({"x": [1.0]})
    with pytest.raises(TransformError, match="unknown variable-map kind"):
        VarMap("mystery").apply({"x": [1.0]})


# ---------------------------------------------------------------------------
# equality splitting

def test_eq_to_ineq_splits_in_place():
    p = Problem(
        (VariableSpec("x"),), "minimize", E.var("x"),
        (
            Constraint(E.var("x"), "<=", E.const(5.0)),
            Constraint(E.var("x"), "=", E.const(2.0)),
        ))
    r = eq_to_ineq_pair(p)
    q = r.transformed
    assert [c.relation for c in q.constraints] == ["<=", "<=", "<="]
    assert r.certificate == {"split_rows": [1]}
    lay = layout_of(q)
    at3 = [E.evaluate(E.add(c.lhs, E.neg(c.rhs)), np.array([3.0]), lay)
           for c in q.constraints]
    # row 1 is x - 2 <= 0 and row 2 its negation -x + 2 <= 0
    assert at3 == pytest.approx([-2.0, 1.0, -1.0])
    # identity transport
    assert r.value_map.to_original(2.0) == 2.0
    assert r.forward_map.apply({"x": [1.0]})["x"] == pytest.approx([1.0])


def test_eq_to_ineq_without_equalities_is_identity_shape():
    p = _golden("lp_production")
    r = eq_to_ineq_pair(p)
    assert r.certificate == {"split_rows": []}
    assert len(r.transformed.constraints) == len(p.constraints)


# ---------------------------------------------------------------------------
# degenerate second-order reduction

def test_socp_to_lp_reduces_and_preserves_value():
    p = _golden("socp_reducible")
    r = socp_to_lp(p)
    assert r.certificate["result_class"] == "LP"
    assert r.certificate["rows_reduced"] == [0]
    sol = solve_simplex(r.transformed)
    assert sol.status == "optimal"
    assert r.value_map.to_original(sol.value) == pytest.approx(-3.0)
    assert sol.point["x"] == pytest.approx([-1.0, -2.0])


def test_socp_to_lp_refuses_live_cones():
    with pytest.raises(NotReducible) as info:
        socp_to_lp(_golden("socp_ball"))
    assert info.value.index == 0
    assert "nonzero matrix block" in str(info.value)


def test_socp_to_lp_rejects_non_socp():
    with pytest.raises(TransformError, match="classified as LP"):
        socp_to_lp(_golden("lp_basic"))


# ---------------------------------------------------------------------------
# log-space substitution

def test_gp_log_preserves_objective_values():
    p = _golden("gp_reciprocal")
    r = gp_log_transform(p)
    lay_x = layout_of(p)
    lay_y = layout_of(r.transformed)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(0.3, 3.0, lay_x.total)
        fx = E.evaluate(p.objective, x, lay_x)
        fy = E.evaluate(r.transformed.objective, np.log(x), lay_y)
        assert fy == pytest.approx(fx, rel=1e-12)
    assert r.value_map.to_original(2.0) == 2.0


def test_gp_log_renames_and_frees_variables():
    r = gp_log_transform(_golden("gp_reciprocal"))
    assert [(v.name, v.domain) for v in r.transformed.variables] == [("x_log", "free")]
    assert r.certificate == {"objective_terms": 2, "result_class": "ConvexNLP",
                             "result_convexity": "convex"}
    fwd = r.forward_map.apply({"x": [1.0, math.e]})
    assert fwd["x_log"] == pytest.approx([0.0, 1.0])
    back = r.backward_map.apply(fwd)
    assert back["x"] == pytest.approx([1.0, math.e])


def test_gp_log_single_term_rows_become_affine():
    # the golden's only constraint is the single monomial 1/(x0 x1) <= 1,
    # which the rewrite turns into the linear row -y0 - y1 <= 0
    r = gp_log_transform(_golden("gp_reciprocal"))
    c = r.transformed.constraints[0]
    assert c.relation == "<="
    assert c.rhs.op == "const" and c.rhs.args[0] == 0.0
    lay = layout_of(r.transformed)
    g = E.gradient(c.lhs, np.zeros(2), lay)
    assert g == pytest.approx([-1.0, -1.0])


def test_gp_log_equality_rows_become_affine_equalities():
    x = VariableSpec("x", "vector", 2, "strictly-positive")
    p = Problem((x,), "minimize",
                E.add(E.monomial(1.0, [1.0, 0.0], "x"), E.monomial(1.0, [0.0, 1.0], "x")),
                (Constraint(E.monomial(2.0, [1.0, 0.0], "x"), "=",
                            E.monomial(1.0, [0.0, 1.0], "x")),))
    r = gp_log_transform(p)
    c = r.transformed.constraints[0]
    assert c.relation == "="
    assert c.rhs.args[0] == pytest.approx(-math.log(2.0))


def test_gp_log_multi_term_rows_stay_posynomial():
    x = VariableSpec("x", "vector", 2, "strictly-positive")
    p = Problem((x,), "minimize", E.monomial(1.0, [1.0, 1.0], "x"),
                (Constraint(E.add(E.monomial(1.0, [-1.0, 0.0], "x"),
                                  E.monomial(1.0, [0.0, -1.0], "x")), "<=",
                            E.monomial(2.0, [1.0, 0.0], "x")),))
    r = gp_log_transform(p)
    c = r.transformed.constraints[0]
    assert c.relation == "<=" and c.rhs.args[0] == 1.0
    # divided-through body evaluates exp terms; check at y = 0
    lay = layout_of(r.transformed)
    v = E.evaluate(c.lhs, np.zeros(2), lay)
    assert v == pytest.approx(1.0)  # 0.5 e^{-2y0-y1} + 0.5 e^{-y0-2y1} at 0


def test_gp_log_rejects_non_gp():
    with pytest.raises(NotGP):
        gp_log_transform(_golden("lp_basic"))


# ---------------------------------------------------------------------------
# linear-program dual

def test_lp_dual_free_variables_give_equality_rows():
    p = _golden("lp_canonical")
    r = lp_dual(p)
    assert r.certificate == {"primal_shape": "inequality-free", "rows": 3, "cols": 2}
    assert [c.relation for c in r.transformed.constraints] == ["=", "="]
    sol = solve_simplex(r.transformed)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(7.0)  # primal optimum is 7 at (1, 3)
    assert sol.point["y"] == pytest.approx([1.5, 0.5, 0.0])


def test_lp_dual_nonneg_variables_give_inequality_rows():
    p = _golden("lp_production")
    r = lp_dual(p)
    assert r.certificate == {"primal_shape": "inequality-nonneg", "rows": 3, "cols": 2}
    assert [c.relation for c in r.transformed.constraints] == [">=", ">="]
    assert solve_simplex(r.transformed).value == pytest.approx(36.0)


def test_lp_dual_handles_flipped_rows():
    p = Problem((VariableSpec("x", domain="nonnegative"),), "maximize", E.var("x"),
                (Constraint(E.neg(E.var("x")), ">=", E.const(-4.0)),))
    r = lp_dual(p)
    sol = solve_simplex(r.transformed)
    assert sol.value == pytest.approx(4.0)
    assert sol.point["y"] == pytest.approx([1.0])


@pytest.mark.parametrize("problem,reason", [
    (Problem((VariableSpec("x", domain="nonnegative"),), "minimize", E.var("x"),
             (Constraint(E.var("x"), "<=", E.const(1.0)),)),
     "expects a maximization"),
    (Problem((VariableSpec("x", domain="nonnegative"),), "maximize",
             E.add(E.var("x"), E.const(1.0)),
             (Constraint(E.var("x"), "<=", E.const(1.0)),)),
     "constant term"),
    (Problem((VariableSpec("x", domain="nonnegative"),), "maximize",
             E.power(E.var("x"), 2.0),
             (Constraint(E.var("x"), "<=", E.const(1.0)),)),
     "not linear"),
    (Problem((VariableSpec("x", domain="nonnegative"), VariableSpec("t")),
             "maximize", E.add(E.var("x"), E.var("t")),
             (Constraint(E.var("x"), "<=", E.const(1.0)),)),
     "all nonnegative or all free"),
    (Problem((VariableSpec("x", domain="nonnegative"),), "maximize", E.var("x")),
     "at least one inequality row"),
    (Problem((VariableSpec("x", domain="nonnegative"),), "maximize", E.var("x"),
             (Constraint(E.var("x"), "=", E.const(1.0)),)),
     "inequality rows only"),
    (Problem((VariableSpec("x", domain="nonnegative"),), "maximize", E.var("x"),
             (Constraint(E.power(E.var("x"), 2.0), "<=", E.const(1.0)),)),
     "not affine"),
])
def test_lp_dual_shape_rejections(problem, reason):
    with pytest.raises(ShapeMismatch, match=reason):
        lp_dual(problem)


def test_lp_dual_has_no_point_transport():
    r = lp_dual(_golden("lp_production"))
    with pytest.raises(TransformError, match="no point map"):
        r.backward_map.apply({"y": [0.0, 1.5, 1.0]})


# ---------------------------------------------------------------------------
# shared-slack feasibility rewrite

def test_phase1_slack_feasible_case():
    p = Problem((VariableSpec("x"),), "minimize", E.const(0.0),
                (Constraint(E.var("x"), "<=", E.const(3.0)),
                 Constraint(E.var("x"), ">=", E.const(1.0)),))
    r = phase1_slack(p)
    assert r.certificate == {"slack": "s", "rows": 2}
    sol = solve_simplex(r.transformed)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(-1.0)  # midpoint leaves slack -1
    assert sol.value <= 0.0  # certifies feasibility


def test_phase1_slack_infeasible_case():
    p = Problem((VariableSpec("x"),), "minimize", E.const(0.0),
                (Constraint(E.var("x"), "<=", E.const(-1.0)),
                 Constraint(E.var("x"), ">=", E.const(1.0)),))
    r = phase1_slack(p)
    sol = solve_simplex(r.transformed)
    assert sol.value == pytest.approx(1.0)  # best shared slack sits at x = 0
    assert sol.value > 0.0  # certifies infeasibility
    # the forward map seeds the slack with the worst residual at the point
    fwd = r.forward_map.apply({"x": 0.0})
    assert fwd["s"] == pytest.approx([1.0])
    back = r.backward_map.apply(fwd)
    assert set(back) == {"x"}


def test_phase1_slack_values_do_not_transport():
    p = Problem((VariableSpec("x"),), "minimize", E.const(0.0),
                (Constraint(E.var("x"), "<=", E.const(3.0)),))
    r = phase1_slack(p)
    assert r.value_map is None
    pipe = Pipeline(original=p, steps=(r,))
    with pytest.raises(TransformError, match="phase1-slack"):
        pipe.value_to_original(0.0)


def test_phase1_slack_requires_inequalities():
    p = Problem((VariableSpec("x"),), "minimize", E.const(0.0),
                (Constraint(E.var("x"), "=", E.const(1.0)),))
    with pytest.raises(TransformError, match="eq-to-ineq"):
        phase1_slack(p)


def test_phase1_slack_avoids_name_collisions():
    p = Problem((VariableSpec("s"),), "minimize", E.const(0.0),
                (Constraint(E.var("s"), "<=", E.const(1.0)),))
    r = phase1_slack(p)
    assert r.certificate["slack"] == "s_"
    assert [v.name for v in r.transformed.variables] == ["s", "s_"]


# ---------------------------------------------------------------------------
# composite pipeline

def test_to_convex_min_negates_maximization():
    pipe = to_convex_min(_golden("lp_canonical"))
    assert [s.rule for s in pipe.steps] == ["negate-objective"]
    sol = solve_simplex(pipe.transformed)
    assert sol.value == pytest.approx(-7.0)
    assert pipe.value_to_original(sol.value) == pytest.approx(7.0)


def test_to_convex_min_squares_norm_objectives():
    p = Problem((VariableSpec("x", "vector", 2),), "minimize",
                E.norm2([[1.0, 0.0], [0.0, 1.0]], [-1.0, -2.0], "x"))
    pipe = to_convex_min(p)
    assert [s.rule for s in pipe.steps] == ["square-norm-objective"]
    q = pipe.transformed
    lay = layout_of(q)
    # squared objective at the analytic minimizer (1, 2) maps back to 0
    v = E.evaluate(q.objective, np.array([1.0, 2.0]), lay)
    assert pipe.value_to_original(v) == pytest.approx(0.0)
    # and at another point agrees with the original norm
    z = np.array([3.0, 1.0])
    orig = E.evaluate(p.objective, z, layout_of(p))
    assert pipe.value_to_original(E.evaluate(q.objective, z, lay)) == pytest.approx(orig)


def test_to_convex_min_routes_gp_to_log_space():
    pipe = to_convex_min(_golden("gp_reciprocal"))
    assert [s.rule for s in pipe.steps] == ["gp-log"]
    fwd = pipe.point_to_transformed({"x": [1.0, 1.0]})
    assert fwd["x_log"] == pytest.approx([0.0, 0.0])
    assert pipe.point_to_original(fwd)["x"] == pytest.approx([1.0, 1.0])


def test_to_convex_min_reduces_degenerate_socp():
    pipe = to_convex_min(_golden("socp_reducible"))
    assert [s.rule for s in pipe.steps] == ["socp-to-lp"]
    assert solve_simplex(pipe.transformed).value == pytest.approx(-3.0)


def test_to_convex_min_leaves_minimization_lp_alone():
    p = _golden("lp_basic")
    pipe = to_convex_min(p)
    assert pipe.steps == ()
    assert pipe.transformed is p
    assert pipe.value_to_original(2.0) == 2.0
    assert pipe.point_to_original({"x": [1.0]}) == {"x": [1.0]}
