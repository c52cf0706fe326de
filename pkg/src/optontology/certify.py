"""Checkable evidence that a candidate point is what a solver claims.

Certificates never trust the solver that produced a point: every check
re-evaluates expressions from scratch.  All multiplier vectors follow the
row order of :func:`optontology.problem.inequality_form` on the minimized
problem, the same convention the solvers use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .classify import classify
from .config import DEFAULT_TOLERANCES, Tolerances, sampling_seed
from .errors import EvalDomainError, SolverError
from .problem import (Problem, bind_parameters, canonical_sense,
                      inequality_form, layout_of)
from .psd import psd_check

__all__ = [
    "StationarityReport", "KktReport", "LocalOptReport", "EnvelopeReport",
    "SublinearReport", "SecondOrderReport",
    "check_stationarity", "check_kkt", "check_local_optimum",
    "envelope_sensitivity", "check_sublinear", "check_second_order",
]


def _min_form(p: Problem) -> Problem:
    return canonical_sense(bind_parameters(p))


def _flat_point(lay: ex.Layout, point) -> np.ndarray:
    if isinstance(point, dict):
        return lay.flatten(point)
    x = np.asarray(point, dtype=float).ravel()
    if x.size != lay.total:
        raise ValueError(
            f"point has {x.size} components; the layout needs {lay.total}")
    return x


# ---------------------------------------------------------------------------
# stationarity (unconstrained first-order condition)

@dataclass(frozen=True)
class StationarityReport:
    residual: float
    ok: bool
    gradient: np.ndarray


def check_stationarity(p: Problem, point,
                       tolerances: Tolerances | None = None) -> StationarityReport:
    """Max-norm of the minimized objective's gradient at the point."""
    tols = tolerances or DEFAULT_TOLERANCES
    q = _min_form(p)
    lay = layout_of(q)
    x = _flat_point(lay, point)
    g = ex.gradient(q.objective, x, lay)
    res = float(np.max(np.abs(g))) if g.size else 0.0
    return StationarityReport(res, res <= tols.certificate, g)


# ---------------------------------------------------------------------------
# Karush-Kuhn-Tucker conditions

@dataclass(frozen=True)
class KktReport:
    feasibility_violation: float
    stationarity_residual: float
    min_multiplier: float
    nontrivial: bool
    slackness_max: float
    verdict: str                      # kkt-satisfied | kkt-failed
    first_failed_clause: str | None   # feasibility|stationarity|signs|complementarity
    lambda0: float


def check_kkt(p: Problem, point, multipliers, lambda0: float = 1.0,
              tolerances: Tolerances | None = None) -> KktReport:
    """Verify the first-order optimality system at a candidate point.

    Clauses, checked in order: primal feasibility of every inequality row;
    stationarity ``|lambda0 * grad f + sum_i lam_i * grad g_i|_inf <= tol``;
    multiplier signs with at least one strictly positive weight; and
    complementary slackness ``max_i |lam_i * g_i| <= tol``.
    """
    tols = tolerances or DEFAULT_TOLERANCES
    q = _min_form(p)
    lay = layout_of(q)
    x = _flat_point(lay, point)
    rows = inequality_form(q)
    lam = np.asarray(multipliers, dtype=float).ravel()
    if lam.size != len(rows):
        raise ValueError(
            f"{lam.size} multipliers for {len(rows)} inequality rows; the "
            "order is: constraints in file order (equalities as +/- pairs), "
            "then one bound row per nonnegative component")

    g_vals = np.array([ex.evaluate(g, x, lay) for g, _ in rows]) \
        if rows else np.zeros(0)
    feas_violation = float(np.max(g_vals)) if rows else 0.0

    grad = lambda0 * ex.gradient(q.objective, x, lay)
    for (g, _tag), l_i in zip(rows, lam):
        if l_i != 0.0:
            grad = grad + l_i * ex.gradient(g, x, lay)
    stat_res = float(np.max(np.abs(grad))) if grad.size else 0.0

    min_mult = float(np.min(lam)) if lam.size else 0.0
    nontrivial = (lambda0 > tols.multiplier_strict
                  or bool(np.any(lam > tols.multiplier_strict)))
    slackness = float(np.max(np.abs(lam * g_vals))) if lam.size else 0.0

    first_failed = None
    if feas_violation > tols.certificate:
        first_failed = "feasibility"
    elif stat_res > tols.certificate:
        first_failed = "stationarity"
    elif min_mult < -tols.multiplier_strict or not nontrivial:
        first_failed = "signs"
    elif slackness > tols.certificate:
        first_failed = "complementarity"

    return KktReport(
        feasibility_violation=feas_violation,
        stationarity_residual=stat_res,
        min_multiplier=min_mult,
        nontrivial=nontrivial,
        slackness_max=slackness,
        verdict="kkt-satisfied" if first_failed is None else "kkt-failed",
        first_failed_clause=first_failed,
        lambda0=lambda0,
    )


# ---------------------------------------------------------------------------
# sampled local-optimality probe

def _halton(index: int, base: int) -> float:
    f, r = 1.0, 0.0
    i = index
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
           59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113)


@dataclass(frozen=True)
class LocalOptReport:
    verdict: str                 # supported | refuted | infeasible-point
    candidate_value: float
    n_feasible_samples: int
    best_sampled_value: float
    witness: dict | None = None


def check_local_optimum(p: Problem, point, delta: float = 1e-3,
                        samples: int = 256, seed: int | None = None,
                        tolerances: Tolerances | None = None) -> LocalOptReport:
    """Probe a max-norm ball around the point for feasible improvement.

    Uses a Halton sequence (deterministic for a fixed seed) so reruns see
    the same samples.  A strictly better feasible sample within the ball
    refutes local optimality; the witness is re-verified before reporting.
    """
    tols = tolerances or DEFAULT_TOLERANCES
    q = _min_form(p)
    lay = layout_of(q)
    x = _flat_point(lay, point)
    rows = inequality_form(q)
    nd = lay.total
    if nd > len(_PRIMES):
        raise SolverError(
            f"the sampled probe supports up to {len(_PRIMES)} dimensions")

    def feasible(pt) -> bool:
        for g, _tag in rows:
            try:
                if ex.evaluate(g, pt, lay) > tols.feasibility:
                    return False
            except EvalDomainError:
                return False
        return True

    def value(pt):
        try:
            return ex.evaluate(q.objective, pt, lay)
        except EvalDomainError:
            return None

    f0 = value(x)
    if f0 is None or not feasible(x):
        return LocalOptReport("infeasible-point", math.nan, 0, math.nan)

    start = 17 + (sampling_seed() if seed is None else int(seed)) % 1009
    best_val, best_pt = math.inf, None
    n_feas = 0
    for k in range(samples):
        u = np.array([_halton(start + k, _PRIMES[j]) for j in range(nd)])
        y = x + delta * (2.0 * u - 1.0)
        if not feasible(y):
            continue
        fy = value(y)
        if fy is None:
            continue
        n_feas += 1
        if fy < best_val:
            best_val, best_pt = fy, y

    if best_pt is not None and f0 - best_val > tols.improvement:
        # re-verify the witness from scratch before claiming a refutation
        if feasible(best_pt) and value(best_pt) is not None \
                and f0 - value(best_pt) > tols.improvement:
            return LocalOptReport(
                "refuted", float(f0), n_feas, float(best_val),
                witness={"point": dict(zip(lay.names, (
                    np.array(best_pt[o:o + s])
                    for o, s in zip(lay.offsets, lay.sizes)))),
                    "value": float(best_val),
                    "improvement": float(f0 - best_val)})
    return LocalOptReport("supported", float(f0), n_feas,
                          float(best_val) if n_feas else math.nan)


# ---------------------------------------------------------------------------
# envelope identity: marginal value of a parameter

@dataclass(frozen=True)
class EnvelopeReport:
    parameter: str
    optimal_value_derivative: float
    lagrangian_derivative: float
    difference: float
    ok: bool
    values: tuple[float, float, float]


def envelope_sensitivity(p: Problem, param: str, h: float | None = None,
                         method: str = "auto", tol: float = 1e-4,
                         tolerances: Tolerances | None = None) -> EnvelopeReport:
    """Compare d(optimal value)/d(param) with the Lagrangian's partial.

    Both sides are central differences: the left re-solves the problem at
    ``param +- h``; the right differentiates the Lagrangian in the
    parameter while holding the solution and multipliers fixed.  All
    values refer to the minimized form of the problem.
    """
    from .solvers import solve_newton, solve_simplex  # deferred: cycle-free

    tols = tolerances or DEFAULT_TOLERANCES
    if param not in p.parameters:
        raise ValueError(f"'{param}' is not a parameter of this problem")
    if h is None:
        h = tols.fd_step
    r0 = float(p.parameters[param])

    if method == "auto":
        method = "simplex" if classify(p).problem_class == "LP" else "newton"
    if method not in ("simplex", "newton"):
        raise ValueError("method must be one of: auto, simplex, newton")

    def solve_at(r: float):
        params = dict(p.parameters)
        params[param] = r
        q = canonical_sense(bind_parameters(
            Problem(p.variables, p.sense, p.objective, p.constraints, params)))
        sol = solve_simplex(q, tols) if method == "simplex" \
            else solve_newton(q, tolerances=tols)
        if sol.status != "optimal":
            raise SolverError(
                f"solving at {param}={r} ended with status '{sol.status}'")
        return sol

    sol_lo, sol_mid, sol_hi = (solve_at(r) for r in (r0 - h, r0, r0 + h))
    df = (sol_hi.value - sol_lo.value) / (2.0 * h)

    # Lagrangian partial at the frozen midpoint solution
    q_template = canonical_sense(p)
    lay = layout_of(q_template)
    x_star = lay.flatten(sol_mid.point)
    lam = sol_mid.multipliers

    def lagrangian_at(r: float) -> float:
        params = dict(p.parameters)
        params[param] = r
        q = canonical_sense(bind_parameters(
            Problem(p.variables, p.sense, p.objective, p.constraints, params)))
        val = ex.evaluate(q.objective, x_star, lay)
        if lam is not None and lam.size:
            rows = inequality_form(q)
            for (g, _tag), l_i in zip(rows, lam):
                if l_i != 0.0:
                    val += l_i * ex.evaluate(g, x_star, lay)
        return float(val)

    dl = (lagrangian_at(r0 + h) - lagrangian_at(r0 - h)) / (2.0 * h)
    diff = abs(df - dl)
    return EnvelopeReport(param, float(df), float(dl), float(diff),
                          diff <= tol,
                          (float(sol_lo.value), float(sol_mid.value),
                           float(sol_hi.value)))


# ---------------------------------------------------------------------------
# sublinearity probe (positive homogeneity + subadditivity)

@dataclass(frozen=True)
class SublinearReport:
    homogeneity_ok: bool
    subadditivity_ok: bool
    max_homogeneity_gap: float
    max_subadditivity_gap: float
    n_samples: int
    witness: dict | None = None


def check_sublinear(e: ex.Expr, layout: ex.Layout, samples: int = 64,
                    seed: int | None = None, tol: float = 1e-9) -> SublinearReport:
    """Sampled check that ``f(c x) = c f(x)`` (c > 0) and ``f(x+y) <= f(x)+f(y)``.

    A sampled pass supports but cannot prove sublinearity; a violation
    disproves it.
    """
    rng = np.random.default_rng(sampling_seed() if seed is None else seed)
    gammas = (0.5, 1.0, 2.0, 3.0)
    hom_gap = 0.0
    sub_gap = 0.0
    witness = None
    n_used = 0
    for _ in range(samples):
        x = rng.uniform(-2.0, 2.0, layout.total)
        y = rng.uniform(-2.0, 2.0, layout.total)
        try:
            fx = ex.evaluate(e, x, layout)
            fy = ex.evaluate(e, y, layout)
            fxy = ex.evaluate(e, x + y, layout)
            gaps = []
            for gam in gammas:
                fgx = ex.evaluate(e, gam * x, layout)
                gaps.append(abs(fgx - gam * fx) / (1.0 + abs(fx)))
        except EvalDomainError:
            continue
        n_used += 1
        worst = max(gaps)
        if worst > hom_gap:
            hom_gap = worst
            if worst > tol and witness is None:
                witness = {"kind": "homogeneity", "x": x}
        s_gap = fxy - (fx + fy)
        if s_gap > sub_gap:
            sub_gap = s_gap
            if s_gap > tol and (witness is None
                                or witness["kind"] == "homogeneity"):
                witness = {"kind": "subadditivity", "x": x, "y": y}
    return SublinearReport(hom_gap <= tol, sub_gap <= tol,
                           float(hom_gap), float(sub_gap), n_used, witness)


# ---------------------------------------------------------------------------
# second-order (curvature at a point)

@dataclass(frozen=True)
class SecondOrderReport:
    psd: bool
    min_eigenvalue: float
    ok: bool


def check_second_order(p: Problem, point,
                       tolerances: Tolerances | None = None) -> SecondOrderReport:
    """Hessian positive semidefiniteness of an unconstrained objective."""
    q = _min_form(p)
    if q.constraints:
        raise SolverError(
            "the second-order check covers unconstrained problems only")
    lay = layout_of(q)
    x = _flat_point(lay, point)
    h = ex.hessian(q.objective, x, lay)
    verdict = psd_check(h)
    return SecondOrderReport(verdict.is_psd, float(verdict.min_eigenvalue),
                             verdict.is_psd)
