"""Regenerate the golden problem files from their construction recipes.

Run from the repository root:  python problems/make_goldens.py
"""
import pathlib

from optontology import expr as E
from optontology.problem import (Constraint, Problem, VariableSpec,
                                 serialize_problem)

HERE = pathlib.Path(__file__).resolve().parent


def build() -> dict[str, Problem]:
    out: dict[str, Problem] = {}

    # a small equality-and-inequality LP over free scalars
    out["lp_basic"] = Problem(
        (VariableSpec("x"), VariableSpec("y")),
        "minimize",
        E.add(E.var("x"), E.var("y")),
        (
            Constraint(E.add(E.var("x"), E.var("y")), ">=", E.const(2.0)),
            Constraint(E.add(E.var("x"), E.neg(E.var("y"))), "=", E.const(0.0)),
        ),
    )

    # inequality-only maximization over free scalars: optimum (1, 3), value 7
    out["lp_canonical"] = Problem(
        (VariableSpec("x"), VariableSpec("y")),
        "maximize",
        E.add(E.var("x"), E.scale(2.0, E.var("y"))),
        (
            Constraint(E.add(E.var("x"), E.var("y")), "<=", E.const(4.0)),
            Constraint(E.add(E.neg(E.var("x")), E.var("y")), "<=", E.const(2.0)),
            Constraint(E.var("x"), "<=", E.const(3.0)),
        ),
    )

    # the two-product planning example: optimum (2, 6), value 36
    out["lp_production"] = Problem(
        (VariableSpec("x", "vector", 2, "nonnegative"),),
        "maximize",
        E.dot([3.0, 5.0], "x"),
        (
            Constraint(E.var("x", 0), "<=", E.const(4.0)),
            Constraint(E.scale(2.0, E.var("x", 1)), "<=", E.const(12.0)),
            Constraint(E.dot([3.0, 2.0], "x"), "<=", E.const(18.0)),
        ),
    )

    # the same planning example with a parametric second resource budget
    out["lp_parametric"] = Problem(
        (VariableSpec("x", "vector", 2, "nonnegative"),),
        "maximize",
        E.dot([3.0, 5.0], "x"),
        (
            Constraint(E.var("x", 0), "<=", E.const(4.0)),
            Constraint(E.scale(2.0, E.var("x", 1)), "<=", E.const("r")),
            Constraint(E.dot([3.0, 2.0], "x"), "<=", E.const(18.0)),
        ),
        {"r": 12.0},
    )

    # a second-order row whose matrix genuinely matters
    out["socp_ball"] = Problem(
        (VariableSpec("x", "vector", 2),),
        "minimize",
        E.dot([1.0, 1.0], "x"),
        (
            Constraint(E.norm2([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0], "x"),
                       "<=", E.add(E.var("x", 0), E.const(3.0))),
        ),
    )

    # every second-order row has a zero matrix: the cones are decorative
    out["socp_reducible"] = Problem(
        (VariableSpec("x", "vector", 2),),
        "minimize",
        E.dot([1.0, 1.0], "x"),
        (
            Constraint(E.norm2([[0.0, 0.0], [0.0, 0.0]], [3.0, 4.0], "x"),
                       "<=", E.add(E.var("x", 0), E.const(6.0))),
            Constraint(E.var("x", 1), ">=", E.const(-2.0)),
        ),
    )

    # minimize the trace of a 2x2 PSD matrix with a fixed off-diagonal sum
    out["sdp_trace"] = Problem(
        (VariableSpec("X", "symmetric-matrix", 2),),
        "minimize",
        E.dot([1.0, 0.0, 0.0, 1.0], "X"),
        (
            Constraint(E.dot([0.0, 1.0, 1.0, 0.0], "X"), "=", E.const(1.0)),
            Constraint(E.var("X"), "in-cone", E.const(0.0),
                       cone="positive-semidefinite"),
        ),
    )

    # sum of coordinates against a reciprocal-product bound; optimum (1, 1)
    out["gp_reciprocal"] = Problem(
        (VariableSpec("x", "vector", 2, "strictly-positive"),),
        "minimize",
        E.add(E.monomial(1.0, [1.0, 0.0], "x"),
              E.monomial(1.0, [0.0, 1.0], "x")),
        (
            Constraint(E.monomial(1.0, [-1.0, -1.0], "x"), "<=", E.const(1.0)),
        ),
    )

    # a convex bowl over a half-plane; unconstrained optimum (1, 4)
    out["qp_box"] = Problem(
        (VariableSpec("x", "vector", 2),),
        "minimize",
        E.add(E.quad([[2.0, 0.0], [0.0, 2.0]], "x"), E.dot([-2.0, -8.0], "x")),
        (
            Constraint(E.dot([1.0, 1.0], "x"), "<=", E.const(10.0)),
        ),
    )

    # an indefinite quadratic form: a saddle, not a bowl
    out["qp_saddle"] = Problem(
        (VariableSpec("x", "vector", 2),),
        "minimize",
        E.quad([[0.0, 1.0], [1.0, 0.0]], "x"),
        (
            Constraint(E.dot([1.0, 1.0], "x"), "<=", E.const(1.0)),
        ),
    )

    # convex quadratic objective and a convex quadratic row
    out["qcqp_ball"] = Problem(
        (VariableSpec("x", "vector", 2),),
        "minimize",
        E.add(E.quad([[2.0, 0.0], [0.0, 2.0]], "x"), E.dot([-2.0, 0.0], "x")),
        (
            Constraint(E.quad([[2.0, 0.0], [0.0, 2.0]], "x"), "<=", E.const(1.0)),
            Constraint(E.dot([1.0, -1.0], "x"), "=", E.const(0.0)),
        ),
    )

    # one second-order and one semidefinite membership side by side
    out["conic_mixed"] = Problem(
        (VariableSpec("z", "vector", 3), VariableSpec("X", "symmetric-matrix", 2)),
        "minimize",
        E.add(E.dot([0.0, 0.0, 1.0], "z"), E.dot([1.0, 0.0, 0.0, 1.0], "X")),
        (
            Constraint(E.var("z"), "in-cone", E.const(0.0), cone="second-order"),
            Constraint(E.var("X"), "in-cone", E.const(0.0),
                       cone="positive-semidefinite"),
        ),
    )

    # smooth, strictly convex, unconstrained; optimum at the origin
    out["nlp_smooth_convex"] = Problem(
        (VariableSpec("t"),),
        "minimize",
        E.add(E.exp(E.var("t")), E.exp(E.neg(E.var("t")))),
    )

    # the double well: classic smooth nonconvexity
    out["nlp_double_well"] = Problem(
        (VariableSpec("t"),),
        "minimize",
        E.add(E.power(E.var("t"), 4.0), E.neg(E.power(E.var("t"), 2.0))),
    )

    return out


def main() -> None:
    for name, prob in build().items():
        path = HERE / f"{name}.optproblem.json"
        path.write_text(serialize_problem(prob), encoding="utf-8")
        print("wrote", path.name)


if __name__ == "__main__":
    main()
