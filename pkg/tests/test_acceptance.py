"""Acceptance gate: ten pass/fail criteria over the whole tool chain.

Each criterion is one test; run with ``pytest -v`` for a one-line verdict
per criterion.  Later criteria reuse artifacts from earlier ones through a
module-level registry (solutions for the certificate-closure criterion,
problems for the curvature-soundness criterion), so the tests are meant to
run in file order.  Every expected value is pinned against an independent
oracle: vertex enumeration, exhaustive grids, analytic minimizers, or raw
generator matrices — never the implementation under test.
"""

import contextlib
import dataclasses
import io

import numpy as np
import pytest

from optontology import expr as E
from optontology.certify import check_kkt, envelope_sensitivity
from optontology.classify import classify
from optontology.cli import main as cli_main
from optontology.errors import NoInterior, NumericalError
from optontology.kernels import eval_many
from optontology.kernels.program import compile_expr
from optontology.problem import (
    canonical_sense,
    inequality_form,
    layout_of,
    parse_problem,
    residual,
)
from optontology.solvers import (
    solve_barrier,
    solve_grid_oracle,
    solve_newton,
    solve_simplex,
)
from optontology.transforms import RULES, gp_log_transform, socp_to_lp

import oracles
from conftest import PROBLEMS_DIR, golden_text

SEED_BASE = 20260817

# Artifacts shared across criteria: (problem, solution) pairs feed the
# certificate-closure criterion; problems feed the curvature criterion.
_SOLUTIONS: list = []
_PROBLEMS: list = []


def _rng(suite: int) -> np.random.Generator:
    return np.random.default_rng(SEED_BASE + suite)


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, detail


# ---------------------------------------------------------------------------
# criterion 1 — the golden corpus classifies with the expected lemma chains

_LP_CHAIN = (("LP", ""), ("ConicProgram", "Lemma 1"), ("ConvexOptima", "Definition 5"))
_GOLDEN_EXPECT = {
    "lp_canonical": ("LP", _LP_CHAIN),
    "lp_production": ("LP", _LP_CHAIN),
    "socp_ball": ("SOCP", (("SOCP", ""), ("ConicProgram", "Lemma 2"),
                           ("ConvexOptima", "Definition 5"))),
    "socp_reducible": ("SOCP", (("SOCP", ""), ("ConicProgram", "Lemma 2"),
                                ("ConvexOptima", "Definition 5"))),
    "sdp_trace": ("SDP", (("SDP", ""), ("ConicProgram", "Lemma 3"),
                          ("ConvexOptima", "Definition 5"))),
    "gp_reciprocal": ("GP", (("GP", ""), ("ConvexOptima", "Lemma 4"))),
    "qp_box": ("QP", (("QP", ""), ("ConvexOptima", "Lemma 5"))),
    "qp_saddle": ("QP", (("QP", ""),)),
    "qcqp_ball": ("QCQP", (("QCQP", ""), ("ConvexOptima", "Proposition 2"))),
    "conic_mixed": ("ConicProgram", (("ConicProgram", ""),
                                     ("ConvexOptima", "Definition 5"))),
    "nlp_smooth_convex": ("ConvexNLP", (("ConvexNLP", ""),
                                        ("ConvexOptima", "Definition 1"))),
    "nlp_double_well": ("NLP", (("NLP", ""),)),
}


def test_criterion_01_golden_corpus_classification():
    hits = 0
    for name, (klass, chain) in _GOLDEN_EXPECT.items():
        problem = parse_problem(golden_text(name))
        _PROBLEMS.append(problem)
        c = classify(problem)
        assert c.problem_class == klass, (name, c.problem_class)
        assert tuple(c.chain) == chain, (name, c.chain)
        hits += 1
    _verdict(1, hits == 12, f"{hits}/12 golden kinds classify with the expected chain")


# ---------------------------------------------------------------------------
# criterion 2 — zero-matrix second-order rows reduce to an equivalent LP

def test_criterion_02_socp_to_lp_equivalence():
    rng = _rng(2)
    worst = 0.0
    for i in range(20):
        n = 1 + i % 3
        problem, c, targets = oracles.random_reducible_socp(rng, n)
        _PROBLEMS.append(problem)
        step = socp_to_lp(problem)
        _PROBLEMS.append(step.transformed)
        sol = solve_simplex(step.transformed)
        oracle = solve_grid_oracle(problem, box={"x": (-4.0, 4.0)}, resolution=81)
        assert sol.status == "optimal" and oracle.status == "optimal", (i,)
        worst = max(worst,
                    abs(sol.value - oracle.value),
                    abs(sol.value - float(c @ targets)))
        _SOLUTIONS.append((step.transformed, sol))
    _verdict(2, worst <= 1e-6,
             f"20/20 reduced instances match the grid oracle (worst gap {worst:.2e})")


# ---------------------------------------------------------------------------
# criterion 3 — weak and strong duality on symmetric-form linear programs

def test_criterion_03_lp_duality():
    rng = _rng(3)
    weak_pairs = 0
    worst_gap = 0.0
    for i in range(30):
        problem, c, a_mat, b_vec = oracles.random_symmetric_lp(rng)
        _PROBLEMS.append(problem)
        n, m1 = c.size, a_mat.shape[0]

        # weak duality on sampled feasible pairs, from the raw matrices
        xs = rng.uniform(0.0, 2.0, size=(40, n))
        feas_x = xs[(a_mat @ xs.T <= b_vec[:, None] + 1e-12).all(axis=0)]
        ys = rng.uniform(0.0, 2.0, size=(40, m1))
        feas_y = ys[(a_mat.T @ ys.T >= c[:, None] - 1e-12).all(axis=0)]
        anchor = np.zeros(m1)
        anchor[-1] = max(1.0, float(c.max()) + 1.0)  # feasible for the sum row
        feas_y = np.vstack([feas_y, anchor])
        for x in feas_x:
            for y in feas_y:
                assert float(c @ x) <= float(b_vec @ y) + 1e-9, (i, "weak duality")
                weak_pairs += 1

        # strong duality through the dual construction and the simplex
        primal = solve_simplex(problem)
        dual_problem = RULES["lp-dual"](problem).transformed
        _PROBLEMS.append(dual_problem)
        dual = solve_simplex(dual_problem)
        assert primal.status == "optimal" and dual.status == "optimal", (i,)
        worst_gap = max(worst_gap, abs(primal.value - dual.value))
        _SOLUTIONS.append((problem, primal))
        _SOLUTIONS.append((dual_problem, dual))
    assert weak_pairs > 500
    _verdict(3, worst_gap <= 1e-6,
             f"30/30 strong-duality gaps within 1e-6 (worst {worst_gap:.2e}; "
             f"{weak_pairs} weak-duality pairs checked)")


# ---------------------------------------------------------------------------
# criterion 4 — the log change of variables preserves posynomial optima

def test_criterion_04_gp_log_transform_equivalence():
    rng = _rng(4)
    worst = 0.0
    for i in range(10):
        n = 1 + i % 2
        problem, objective_fn = oracles.random_gp(rng, n)
        _PROBLEMS.append(problem)
        step = gp_log_transform(problem)
        sol = solve_newton(step.transformed)
        assert sol.status == "optimal", (i,)
        back = step.backward_map.apply(sol.point)
        x_arr = np.asarray(back["x"], dtype=float).ravel()
        oracle = solve_grid_oracle(problem, box={"x": (0.2, 3.2)}, resolution=421)
        assert oracle.status == "optimal", (i,)
        worst = max(worst,
                    abs(sol.value - oracle.value),
                    abs(sol.value - objective_fn(x_arr)))
        _SOLUTIONS.append((step.transformed, sol))
    _verdict(4, worst <= 1e-3,
             f"10/10 log-transformed minima match the x-space oracle "
             f"(worst gap {worst:.2e})")


# ---------------------------------------------------------------------------
# criterion 5 — simplex against vertex enumeration; barrier against simplex

def test_criterion_05_solver_cross_check():
    rng = _rng(5)
    statuses = {"optimal": 0, "unbounded": 0, "infeasible": 0}
    barrier_compared = 0
    worst = 0.0
    for i in range(50):
        problem, c_min, a_all, b_all = oracles.random_lp(rng)
        _PROBLEMS.append(problem)
        sol = solve_simplex(problem)
        status, value, _ = oracles.vertex_lp(c_min, a_all, b_all)
        assert sol.status == status, (i, sol.status, status)
        statuses[status] += 1
        if status != "optimal":
            continue
        v_min = sol.value if problem.sense == "minimize" else -sol.value
        worst = max(worst, abs(v_min - value))
        _SOLUTIONS.append((problem, sol))
        try:
            bar = solve_barrier(problem)
        except (NoInterior, NumericalError):
            continue  # no strict interior, or unbounded over it
        if bar.status == "optimal":
            worst = max(worst, abs(bar.value - sol.value))
            barrier_compared += 1
            _SOLUTIONS.append((problem, bar))
    assert barrier_compared >= 3
    _verdict(5, worst <= 1e-6,
             f"50/50 statuses match the vertex oracle "
             f"({statuses['optimal']} optimal / {statuses['unbounded']} unbounded / "
             f"{statuses['infeasible']} infeasible; worst value gap {worst:.2e}; "
             f"barrier agreed on {barrier_compared})")


# ---------------------------------------------------------------------------
# criterion 6 — certificate closure: real optima pass, perturbed points fail

def test_criterion_06_certificate_closure():
    optimal = [(p, s) for p, s in _SOLUTIONS if s.status == "optimal"]
    assert len(optimal) >= 50, "earlier criteria must populate the registry"
    for problem, sol in optimal:
        mult = sol.multipliers if sol.multipliers is not None else []
        report = check_kkt(problem, sol.point, mult)
        assert report.verdict == "kkt-satisfied", (
            sol.method, report.first_failed_clause, report.stationarity_residual)

    rng = _rng(6)
    lp_pairs = [(p, s) for p, s in optimal if s.method == "simplex"][:10]
    assert len(lp_pairs) == 10
    rejected = 0
    for problem, sol in lp_pairs:
        lay = layout_of(problem)
        direction = rng.normal(size=lay.total)
        direction /= np.linalg.norm(direction)
        flat = np.concatenate([np.asarray(sol.point[nm], dtype=float).ravel()
                               for nm in lay.names])
        moved = flat + 0.1 * direction
        point = {nm: moved[lay.offsets[i]:lay.offsets[i] + lay.sizes[i]]
                 for i, nm in enumerate(lay.names)}
        report = check_kkt(problem, point, sol.multipliers)
        if report.verdict == "kkt-failed":
            rejected += 1
    _verdict(6, rejected == 10,
             f"{len(optimal)} optima certified, {rejected}/10 perturbed points rejected")


# ---------------------------------------------------------------------------
# criterion 7 — envelope sensitivity agrees with the frozen Lagrangian

def test_criterion_07_envelope_suite():
    rng = _rng(7)
    checked = 0
    worst_rel = 0.0
    for i in range(10):
        n = 1 + i % 3
        problem, p_mat, q_vec, u_vec = oracles.random_convex_qp(
            rng, n, with_param=True)
        for r in (-1.0, -0.5, 0.5, 1.0, 2.0):
            bound = dataclasses.replace(problem, parameters={"r": float(r)})
            report = envelope_sensitivity(bound, "r")
            lhs = report.optimal_value_derivative
            budget = max(1e-4, 1e-3 * abs(lhs))
            assert report.difference <= budget, (i, r, report.difference)
            # analytic oracle: dV/dr equals u.x* at x* = -P^(-1) (q + r u)
            x_star = -np.linalg.solve(p_mat, q_vec + r * u_vec)
            assert abs(lhs - float(u_vec @ x_star)) <= budget, (i, r)
            worst_rel = max(worst_rel, report.difference / budget)
            checked += 1
    _verdict(7, checked == 50,
             f"50/50 parametric instances within budget "
             f"(worst at {worst_rel:.1%} of budget)")


# ---------------------------------------------------------------------------
# criterion 8 — multistart descent lands on one point for strictly convex QPs

def test_criterion_08_multistart_consistency():
    rng = _rng(8)
    worst = 0.0
    for i in range(10):
        n = 1 + i % 3
        problem, p_mat, q_vec, _ = oracles.random_convex_qp(rng, n)
        _PROBLEMS.append(problem)
        endpoints = []
        for _ in range(20):
            start = rng.uniform(-5.0, 5.0, n)
            sol = solve_newton(problem, x0=start)
            assert sol.status == "optimal", (i,)
            endpoints.append(np.asarray(sol.point["x"], dtype=float).ravel())
        stacked = np.array(endpoints)
        spread = float((stacked.max(axis=0) - stacked.min(axis=0)).max())
        analytic = -np.linalg.solve(p_mat, q_vec)
        worst = max(worst, spread, float(np.abs(stacked[0] - analytic).max()))
    _verdict(8, worst <= 1e-6,
             f"10 problems x 20 starts converge together (worst spread {worst:.2e})")


# ---------------------------------------------------------------------------
# criterion 9 — every expression labeled convex survives random chord checks

_DOMAIN_BOX = {"free": (-2.0, 2.0),
               "nonnegative": (0.0, 2.0),
               "strictly-positive": (0.2, 2.2)}


def _convex_expressions(problem):
    """(expr, layout, lo, hi) for each scalar expression the label covers."""
    c = classify(problem)
    if c.convexity != "convex":
        return []
    if c.problem_class == "GP":
        # the convex label for a GP is a statement about its log form
        problem = gp_log_transform(problem).transformed
    problem = canonical_sense(problem)
    lay = layout_of(problem)
    lo = np.empty(lay.total)
    hi = np.empty(lay.total)
    for i, name in enumerate(lay.names):
        dom = next(v for v in problem.variables if v.name == name).domain
        a, b = _DOMAIN_BOX[dom]
        lo[lay.offsets[i]:lay.offsets[i] + lay.sizes[i]] = a
        hi[lay.offsets[i]:lay.offsets[i] + lay.sizes[i]] = b
    found = [(problem.objective, lay, lo, hi)]
    try:
        found.extend((g, lay, lo, hi) for g, _tag in inequality_form(problem))
    except ValueError:  # cone rows have no scalar inequality form
        for con in problem.constraints:
            if con.relation == "in-cone":
                continue
            r = residual(con)
            found.append((E.neg(r) if con.relation == ">=" else r, lay, lo, hi))
    return found


def test_criterion_09_curvature_soundness():
    pool = []
    for problem in _PROBLEMS:
        pool.extend(_convex_expressions(problem))
    assert len(pool) >= 100, "earlier criteria must populate the registry"
    rng = _rng(9)
    violations = 0
    chords = 0
    for expr, lay, lo, hi in pool:
        program = compile_expr(expr, lay)
        u = rng.uniform(lo, hi, size=(200, lay.total))
        v = rng.uniform(lo, hi, size=(200, lay.total))
        lam = rng.uniform(0.0, 1.0, size=200)
        mid = lam[:, None] * u + (1.0 - lam[:, None]) * v
        fu, fv, fm = eval_many(program, u), eval_many(program, v), eval_many(program, mid)
        assert not (np.isnan(fu).any() or np.isnan(fv).any() or np.isnan(fm).any())
        tol = 1e-9 * (1.0 + np.abs(fu) + np.abs(fv))
        violations += int(np.sum(fm > lam * fu + (1.0 - lam) * fv + tol))
        chords += 200
    _verdict(9, violations == 0,
             f"0 convexity violations over {chords} chords "
             f"({len(pool)} labeled-convex expressions)")


# ---------------------------------------------------------------------------
# criterion 10 — the command-line pipeline is byte-for-byte deterministic

_CLI_SUITE = [
    ["classify", "lp_basic", "--json"],
    ["classify", "qcqp_ball", "--json"],
    ["classify", "nlp_double_well", "--json"],
    ["classify", "conic_mixed"],
    ["solve", "lp_production", "--json"],
    ["solve", "gp_reciprocal", "--json"],
    ["solve", "qp_box", "--json", "--method", "grid", "--grid-box", "x=-5:5"],
    ["solve", "lp_canonical", "--method", "barrier", "--json"],
    ["transform", "socp_reducible", "--rule", "socp-to-lp", "--json"],
    ["transform", "gp_reciprocal", "--rule", "gp-log", "--json"],
    ["transform", "lp_canonical", "--rule", "lp-dual", "--json"],
    ["transform", "lp_basic", "--rule", "to-convex-min", "--json"],
    ["certify", "lp_production", "--json", "--check", "kkt",
     "--point", '{"x": [2, 6]}', "--multipliers", "[0, 1.5, 1, 0, 0]"],
    ["certify", "lp_parametric", "--json", "--param", "r"],
    ["certify", "qp_box", "--json", "--point", '{"x": [1, 4]}'],
    ["certify", "nlp_double_well", "--check", "second-order", "--point", "[0]"],
    ["solve", "socp_ball"],  # exit 4 path must be reproducible too
]


def _run_cli_suite() -> bytes:
    chunks = []
    for argv in _CLI_SUITE:
        argv = [a if not (PROBLEMS_DIR / f"{a}.optproblem.json").exists()
                else str(PROBLEMS_DIR / f"{a}.optproblem.json") for a in argv]
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = cli_main(argv)
        chunks.append(f"### {' '.join(argv)} -> {code}\n{out.getvalue()}"
                      f"{err.getvalue()}")
    return "".join(chunks).encode()


def test_criterion_10_cli_determinism():
    first = _run_cli_suite()
    second = _run_cli_suite()
    _verdict(10, first == second,
             f"two full CLI runs produced identical bytes ({len(first)} each)")
