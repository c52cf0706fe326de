"""Numerical methods for the classified problem families.

Four methods with deliberately narrow, checkable scopes:

* ``solve_simplex`` — dense two-phase tableau simplex with Bland's rule
  for linear programs, returning dual multipliers.
* ``solve_newton`` — damped Newton with an Armijo backtracking search for
  unconstrained smooth minimization.
* ``solve_barrier`` — a logarithmic-barrier path follower for linear
  programs whose rows are all inequalities.
* ``solve_grid_oracle`` — exhaustive evaluation over a regular grid in up
  to three flat dimensions; slow, method-free ground truth.

Every solver reports the objective value in the problem's written sense.
Multiplier vectors always refer to the minimized form and follow the row
order of :func:`optontology.problem.inequality_form`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import kernels
from .classify import classify
from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import (EvalDomainError, InvalidProblem, NoInterior,
                     NondifferentiableError, NumericalError, SolverError)
from .kernels.program import REL_EQ, REL_LE, REL_STRICT, compile_expr
from .problem import (Problem, VariableSpec, Constraint, bind_parameters,
                      canonical_sense, inequality_form, layout_of, residual,
                      validate)

__all__ = ["Solution", "solve_simplex", "solve_newton", "solve_barrier",
           "solve_grid_oracle", "SOLVERS"]


@dataclass
class Solution:
    status: str                       # optimal | unbounded | infeasible | ...
    method: str
    point: dict | None = None         # variable name -> flat ndarray
    value: float = math.nan           # objective in the written sense
    multipliers: np.ndarray | None = None
    iterations: int = 0
    meta: dict = field(default_factory=dict)


def _checked(p: Problem) -> Problem:
    violations = validate(p)
    if violations:
        raise InvalidProblem(violations)
    return canonical_sense(bind_parameters(p))


def _point_dict(lay: ex.Layout, x: np.ndarray) -> dict:
    return {name: np.array(x[off:off + size])
            for name, off, size in zip(lay.names, lay.offsets, lay.sizes)}


def _finish_value(p: Problem, v: float) -> float:
    return -v if p.sense == "maximize" else v


# ---------------------------------------------------------------------------
# dense two-phase simplex

def _pivot(t: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    for r in range(t.shape[0]):
        if r != row and t[r, col] != 0.0:
            t[r] -= t[r, col] * t[row]
    basis[row] = col


def _bland_phase(t, basis, active, cost, allowed, tol, iter_budget):
    """Minimize ``cost`` over the current tableau with Bland's rule.

    Returns (status, iterations-used).  The tableau and basis mutate.
    """
    m = t.shape[0]
    total = cost.size
    used = 0
    while used < iter_budget:
        cb = cost[basis] if m else np.zeros(0)
        rc = cost - (cb @ t[:, :total] if m else 0.0)
        enter = -1
        for j in range(total):
            if allowed[j] and rc[j] < -tol:
                enter = j
                break
        if enter < 0:
            return "optimal", used
        best = math.inf
        leave = -1
        for r in range(m):
            if not active[r]:
                continue
            piv = t[r, enter]
            if piv > tol:
                ratio = t[r, -1] / piv
                if ratio < best - 1e-12:
                    best, leave = ratio, r
                elif abs(ratio - best) <= 1e-12 and leave >= 0 \
                        and basis[r] < basis[leave]:
                    leave = r
        if leave < 0:
            return "unbounded", used
        _pivot(t, basis, leave, enter)
        used += 1
    raise NumericalError("simplex iteration budget exhausted")


def _simplex_core(a_mat: np.ndarray, b_vec: np.ndarray, c_vec: np.ndarray,
                  tol: float):
    """Solve min c.v s.t. a_mat v = b_vec, v >= 0 (b_vec >= 0 required).

    Returns (status, v, y, reduced_costs, iterations).  ``y`` are the row
    duals of the equality system and ``reduced_costs`` covers the
    structural columns.
    """
    m, n = a_mat.shape
    t = np.hstack([a_mat, np.eye(m), b_vec.reshape(-1, 1)]).astype(float)
    basis = np.arange(n, n + m)
    active = np.ones(m, dtype=bool)
    total = n + m
    budget = max(20000, 200 * (m + n + 1))

    # phase 1: minimize the artificial mass
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(total, dtype=bool)
    status, it1 = _bland_phase(t, basis, active, cost1, allowed, tol, budget)
    if status != "optimal":  # pragma: no cover - phase 1 is always bounded
        raise NumericalError("phase 1 of the simplex failed to terminate")
    phase1_val = float(cost1[basis] @ t[:, -1]) if m else 0.0
    b_scale = 1.0 + (float(np.max(np.abs(b_vec))) if m else 0.0)
    if phase1_val > 1e-8 * b_scale:
        return "infeasible", None, None, None, it1

    # drive artificials out of the basis; rows that cannot release theirs
    # are redundant and go inactive
    for r in range(m):
        if basis[r] >= n:
            done = False
            for j in range(n):
                if abs(t[r, j]) > tol:
                    _pivot(t, basis, r, j)
                    done = True
                    break
            if not done:
                active[r] = False

    # phase 2: the real objective, artificial columns barred
    cost2 = np.concatenate([c_vec, np.zeros(m)])
    allowed = np.concatenate([np.ones(n, bool), np.zeros(m, bool)])
    status, it2 = _bland_phase(t, basis, active, cost2, allowed, tol, budget)

    v = np.zeros(total)
    for r in range(m):
        if active[r]:
            v[basis[r]] = t[r, -1]
    binv = t[:, n:n + m]
    y = (cost2[basis] @ binv) if m else np.zeros(0)
    rc = cost2 - (cost2[basis] @ t[:, :total] if m else 0.0)
    return status, v[:n], y, rc[:n], it1 + it2


def _affine_of(e: ex.Expr, lay: ex.Layout):
    aff = ex._extract_affine(e, lay)
    if aff is None:
        raise SolverError("a row of this problem is not affine")
    return aff


def solve_simplex(p: Problem, tolerances: Tolerances | None = None) -> Solution:
    """Two-phase dense tableau simplex for linear programs.

    Free coordinates are split into differences of nonnegative ones; the
    returned multipliers follow the ``inequality_form`` row order of the
    minimized problem.
    """
    tols = tolerances or DEFAULT_TOLERANCES
    verdict = classify(p)
    if verdict.problem_class != "LP":
        hint = ""
        if verdict.problem_class == "SOCP" \
                and "reducible-soc-rows" in verdict.degenerate_flags:
            hint = "; the socp-to-lp rule reduces it to one"
        elif verdict.problem_class == "GP":
            hint = "; the gp-log rule yields a smooth convex form for newton"
        raise SolverError(
            f"the simplex handles LP problems; this one classified as "
            f"{verdict.problem_class}{hint}")
    q = _checked(p)
    lay = layout_of(q)
    n0 = lay.total

    # free-coordinate split: x = split @ v with v >= 0
    cols: list[np.ndarray] = []
    col_of_slot: dict[int, int] = {}
    slot_domain: list[str] = []
    for name, off, size in zip(lay.names, lay.offsets, lay.sizes):
        spec = next(v for v in q.variables if v.name == name)
        for j in range(size):
            slot = off + j
            slot_domain.append(spec.domain)
            unit = np.zeros(n0)
            unit[slot] = 1.0
            if spec.domain in ("nonnegative", "strictly-positive"):
                col_of_slot[slot] = len(cols)
                cols.append(unit)
            else:
                col_of_slot[slot] = len(cols)
                cols.append(unit)
                cols.append(-unit)
    split = np.array(cols).T if cols else np.zeros((n0, 0))
    nc = split.shape[1]

    c_x, c_const = _affine_of(q.objective, lay)
    c_v = c_x @ split

    # rows in file order; remember which inequality_form slots they feed
    rows, rhs, row_eq, row_slots = [], [], [], []
    cursor = 0
    for c in q.constraints:
        if c.relation == "in-cone":
            raise SolverError(
                "cone membership rows are outside the simplex's scope")
        a, k = _affine_of(residual(c), lay)
        if c.relation == ">=":
            a, k = -a, -k
        rows.append(a @ split)
        rhs.append(-k)
        if c.relation == "=":
            row_eq.append(True)
            row_slots.append((cursor, cursor + 1))
            cursor += 2
        else:
            row_eq.append(False)
            row_slots.append((cursor,))
            cursor += 1
    n_explicit = cursor
    m = len(rows)

    n_slack = sum(1 for e in row_eq if not e)
    a_full = np.zeros((m, nc + n_slack))
    b_full = np.zeros(m)
    flip = np.ones(m)
    si = 0
    for i in range(m):
        a_full[i, :nc] = rows[i]
        if not row_eq[i]:
            a_full[i, nc + si] = 1.0
            si += 1
        b_full[i] = rhs[i]
        if b_full[i] < 0.0:
            a_full[i] *= -1.0
            b_full[i] *= -1.0
            flip[i] = -1.0
    c_full = np.concatenate([c_v, np.zeros(n_slack)])

    status, v, y, rc, iters = _simplex_core(
        a_full, b_full, c_full, tols.simplex_cost)
    if status == "infeasible":
        return Solution("infeasible", "simplex", iterations=iters)
    if status == "unbounded":
        return Solution("unbounded", "simplex",
                        value=_finish_value(p, -math.inf), iterations=iters)

    x = split @ v[:nc]
    value = _finish_value(p, float(c_x @ x + c_const))

    n_domain = sum(1 for d in slot_domain
                   if d in ("nonnegative", "strictly-positive"))
    mult = np.zeros(n_explicit + n_domain)
    for i in range(m):
        raw = float(-y[i] * flip[i])
        slots = row_slots[i]
        if row_eq[i]:
            mult[slots[0]] = raw if raw > 0.0 else 0.0
            mult[slots[1]] = -raw if raw < 0.0 else 0.0
        else:
            mult[slots[0]] = raw if raw > 0.0 else 0.0
    pos = n_explicit
    for slot, dom in enumerate(slot_domain):
        if dom in ("nonnegative", "strictly-positive"):
            rcv = float(rc[col_of_slot[slot]])
            mult[pos] = rcv if rcv > 0.0 else 0.0
            pos += 1

    return Solution("optimal", "simplex", _point_dict(lay, x), value,
                    mult, iters, meta={"multiplier_form": "canonical-min"})


# ---------------------------------------------------------------------------
# damped Newton for unconstrained smooth problems

def _default_start(q: Problem, lay: ex.Layout) -> np.ndarray:
    x = np.zeros(lay.total)
    for v in q.variables:
        if v.domain in ("nonnegative", "strictly-positive"):
            off, size = lay.slot(v.name)
            x[off:off + size] = 1.0
    return x


def solve_newton(p: Problem, x0=None,
                 tolerances: Tolerances | None = None) -> Solution:
    """Damped Newton descent for unconstrained smooth minimization.

    Stops when the gradient's max-norm drops to the tolerance or after the
    iteration cap; a failed backtracking search reports ``stalled``.  The
    method never claims unboundedness — running out of iterations while
    the objective falls is indistinguishable from slow convergence here.
    """
    tols = tolerances or DEFAULT_TOLERANCES
    q = _checked(p)
    if q.constraints:
        raise SolverError(
            "newton handles unconstrained problems; use the barrier or "
            "simplex for constrained linear rows, or the phase1-slack rule "
            "to study feasibility")
    if any(v.domain == "nonnegative" for v in q.variables):
        raise SolverError(
            "a nonnegative domain can pin the optimum to the boundary, "
            "where an unconstrained method is wrong; use the grid oracle "
            "or restate the domain as strictly-positive if that is meant")
    lay = layout_of(q)
    obj = q.objective

    if x0 is None:
        x = _default_start(q, lay)
    elif isinstance(x0, dict):
        x = lay.flatten(x0)
    else:
        x = np.asarray(x0, dtype=float).ravel().copy()
        if x.size != lay.total:
            raise SolverError(
                f"initial point has {x.size} components; expected {lay.total}")

    def f(pt):
        return ex.evaluate(obj, pt, lay)

    try:
        fx = f(x)
    except EvalDomainError as err:
        raise SolverError(f"initial point violates a domain: {err}") from err

    iters = 0
    status = "max-iterations"
    gnorm = math.inf
    while iters < tols.newton_max_iter:
        try:
            g = ex.gradient(obj, x, lay)
            gnorm = float(np.max(np.abs(g))) if g.size else 0.0
            if gnorm <= tols.newton_grad:
                status = "optimal"
                break
            h = ex.hessian(obj, x, lay)
        except NondifferentiableError as err:
            raise SolverError(
                f"the objective is not differentiable here ({err}); the "
                "square-norm-objective rewrite in to_convex_min smooths a "
                "plain norm objective") from err

        d = None
        eps = 0.0
        h_scale = 1.0 + float(np.max(np.abs(h))) if h.size else 1.0
        for _ in range(40):
            try:
                d = np.linalg.solve(
                    h + eps * np.eye(lay.total), -g)
            except np.linalg.LinAlgError:
                d = None
            if d is not None and np.all(np.isfinite(d)) and float(g @ d) < 0.0:
                break
            d = None
            eps = 1e-8 * h_scale if eps == 0.0 else eps * 10.0
        if d is None:
            d = -g  # last resort: steepest descent

        gd = float(g @ d)
        step = 1.0
        accepted = False
        while step >= 1e-16:
            trial = x + step * d
            try:
                ft = f(trial)
            except (EvalDomainError, OverflowError):
                step *= 0.5
                continue
            if math.isfinite(ft) and ft <= fx + tols.armijo_c * step * gd:
                x, fx = trial, ft
                accepted = True
                break
            step *= 0.5
        iters += 1
        if not accepted:
            status = "stalled"
            break

    return Solution(status, "newton", _point_dict(lay, x),
                    _finish_value(p, float(fx)), None, iters,
                    meta={"gradient_norm": gnorm})


# ---------------------------------------------------------------------------
# logarithmic barrier for inequality-form linear programs

def solve_barrier(p: Problem, tolerances: Tolerances | None = None) -> Solution:
    """Log-barrier path following for inequality-only linear programs.

    Equality rows leave no strict interior and raise ``NoInterior``; a
    phase-1 simplex finds a start with margin at least the strict-interior
    tolerance.  Multipliers come from the final barrier parameter as
    ``1 / (t * slack_i)`` in ``inequality_form`` order.
    """
    tols = tolerances or DEFAULT_TOLERANCES
    verdict = classify(p)
    if verdict.problem_class != "LP":
        raise SolverError(
            f"the barrier handles LP problems; this one classified as "
            f"{verdict.problem_class}")
    if any(c.relation == "=" for c in p.constraints):
        raise NoInterior(
            "equality rows admit no strictly interior point; split them "
            "away or use the simplex")
    q = _checked(p)
    lay = layout_of(q)
    n = lay.total

    g_rows = inequality_form(q)
    m = len(g_rows)
    c_x, c_const = _affine_of(q.objective, lay)
    if m == 0:
        if np.any(np.abs(c_x) > 0):
            return Solution("unbounded", "barrier",
                            value=_finish_value(p, -math.inf))
        x = np.zeros(n)
        return Solution("optimal", "barrier", _point_dict(lay, x),
                        _finish_value(p, float(c_const)),
                        np.zeros(0), 0)

    a_mat = np.zeros((m, n))
    k_vec = np.zeros(m)
    for i, (g, _tag) in enumerate(g_rows):
        a_mat[i], k_vec[i] = _affine_of(g, lay)

    # phase 1: min s  s.t.  g_i(x) <= s, s >= -1, everything free
    taken = {v.name for v in q.variables}
    s_name = "s"
    while s_name in taken:
        s_name += "_"
    synth_vars = tuple(VariableSpec(v.name, v.kind, v.dim, "free")
                       for v in q.variables) + (VariableSpec(s_name),)
    synth_cons = tuple(Constraint(g, "<=", ex.var(s_name)) for g, _ in g_rows) \
        + (Constraint(ex.const(-1.0), "<=", ex.var(s_name)),)
    synth = Problem(synth_vars, "minimize", ex.var(s_name), synth_cons, {})
    start = solve_simplex(synth, tols)
    if start.status != "optimal":  # pragma: no cover - always feasible/bounded
        raise NumericalError("the interior-search linear program failed")
    if start.value > -tols.barrier_strict_margin:
        raise NoInterior(
            "no strictly interior point exists: the best achievable "
            f"constraint margin is {-start.value:.3e}")
    x = lay.flatten({v.name: start.point[v.name] for v in q.variables})

    t = 1.0
    total_iters = 0
    while True:
        for _ in range(100):
            slack = -(a_mat @ x + k_vec)
            grad = t * c_x + a_mat.T @ (1.0 / slack)
            if float(np.max(np.abs(grad))) <= tols.newton_grad * max(1.0, t):
                break
            w = 1.0 / (slack * slack)
            hess = (a_mat * w[:, None]).T @ a_mat
            try:
                d = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                d = np.linalg.solve(hess + 1e-12 * np.eye(n), -grad)
            gd = float(grad @ d)
            step = 1.0
            phi = t * float(c_x @ x) - float(np.sum(np.log(slack)))
            moved = False
            while step >= 1e-16:
                trial = x + step * d
                sl = -(a_mat @ trial + k_vec)
                if np.all(sl > 0.0):
                    phit = t * float(c_x @ trial) - float(np.sum(np.log(sl)))
                    if phit <= phi + tols.armijo_c * step * gd:
                        x = trial
                        moved = True
                        break
                step *= 0.5
            total_iters += 1
            if not moved:
                break
            if not np.all(np.isfinite(x)) or float(np.max(np.abs(x))) > 1e12:
                raise NumericalError(
                    "the barrier iterates diverged; the problem may be "
                    "unbounded over its interior")
        if m / t <= tols.barrier_gap:
            break
        t *= tols.barrier_mu

    slack = -(a_mat @ x + k_vec)
    lam = 1.0 / (t * slack)
    # the raw path multipliers carry an O(1/t) centering error that the
    # finite-precision line search cannot always push below certificate
    # tolerance, so refit the near-active rows by least squares and keep
    # the refit when it tightens stationarity without leaving the cone
    active = slack <= math.sqrt(1.0 / t) * (1.0 + float(np.max(np.abs(k_vec))))
    if np.any(active):
        fit, *_ = np.linalg.lstsq(a_mat[active].T, -c_x, rcond=None)
        if np.all(fit >= -tols.multiplier_strict):
            polished = np.zeros(m)
            polished[active] = np.maximum(fit, 0.0)
            if (float(np.max(np.abs(c_x + a_mat.T @ polished)))
                    < float(np.max(np.abs(c_x + a_mat.T @ lam)))):
                lam = polished
    # a centered iterate satisfies c + A'lam = 0; no multiplier vector can
    # for an LP that is unbounded over its interior, so a large residual
    # means the path following never actually converged
    centering = float(np.max(np.abs(c_x + a_mat.T @ lam)))
    if centering > 1e-6 * (1.0 + float(np.max(np.abs(c_x)))):
        raise NumericalError(
            "the final barrier iterate is not centered (residual "
            f"{centering:.3e}); the problem may be unbounded over its interior")
    value = _finish_value(p, float(c_x @ x + c_const))
    return Solution("optimal", "barrier", _point_dict(lay, x), value,
                    lam, total_iters,
                    meta={"multiplier_form": "canonical-min",
                          "barrier_t": t, "gap_bound": m / t})


# ---------------------------------------------------------------------------
# exhaustive grid oracle

_GRID_DIM_LIMIT = 3
_DEFAULT_SPAN = 4.0


def solve_grid_oracle(p: Problem, box: dict | None = None,
                      resolution: int = 101,
                      tolerances: Tolerances | None = None) -> Solution:
    """Best point of a regular grid over a box; ground truth by brute force.

    Limited to three flat dimensions.  ``box`` maps a variable name to a
    ``(lo, hi)`` pair applied to each of its components; defaults depend
    on the domain.  A grid with no feasible node reports ``infeasible``
    at this resolution — a finer grid may still find one.
    """
    tols = tolerances or DEFAULT_TOLERANCES
    if resolution < 1:
        raise SolverError("grid resolution must be at least 1")
    q = _checked(p)
    lay = layout_of(q)
    nd = lay.total
    if nd > _GRID_DIM_LIMIT:
        raise SolverError(
            f"the grid oracle handles at most {_GRID_DIM_LIMIT} flat "
            f"dimensions; this problem has {nd}")

    lo = np.zeros(nd)
    hi = np.zeros(nd)
    box = dict(box or {})
    for v in q.variables:
        off, size = lay.slot(v.name)
        if v.name in box:
            b_lo, b_hi = box[v.name]
            if not (b_hi >= b_lo):
                raise SolverError(
                    f"box for '{v.name}' has hi < lo")
        elif v.domain in ("nonnegative", "strictly-positive"):
            b_lo, b_hi = 0.0, _DEFAULT_SPAN
        else:
            b_lo, b_hi = -_DEFAULT_SPAN, _DEFAULT_SPAN
        lo[off:off + size] = b_lo
        hi[off:off + size] = b_hi

    if resolution == 1:
        step = np.zeros(nd)
    else:
        step = (hi - lo) / (resolution - 1)
    counts = np.full(nd, resolution, dtype=np.int64)

    cons_progs = []
    rel_codes = []
    for i, c in enumerate(q.constraints):
        if c.relation == "in-cone":
            raise SolverError(
                "the grid oracle does not evaluate cone membership rows")
        g = residual(c)
        if c.relation == ">=":
            g = ex.neg(g)
        cons_progs.append(compile_expr(g, lay))
        rel_codes.append(REL_EQ if c.relation == "=" else REL_LE)
    for v in q.variables:
        if v.domain in ("nonnegative", "strictly-positive"):
            off, size = lay.slot(v.name)
            code = REL_STRICT if v.domain == "strictly-positive" else REL_LE
            for j in range(size):
                idx = j if size > 1 or v.kind != "scalar" else None
                row = ex.neg(ex.var(v.name, idx)) if idx is not None \
                    else ex.neg(ex.var(v.name))
                cons_progs.append(compile_expr(row, lay))
                rel_codes.append(code)

    obj_prog = compile_expr(q.objective, lay)
    best_idx, best_val, n_feas = kernels.grid_scan(
        obj_prog, cons_progs, rel_codes, lo, step, counts, tols.feasibility)

    meta = {"resolution": resolution, "n_feasible": int(n_feas),
            "box": {v.name: (float(lo[lay.slot(v.name)[0]]),
                             float(hi[lay.slot(v.name)[0]]))
                    for v in q.variables}}
    if best_idx < 0:
        return Solution("infeasible", "grid", meta=meta)

    coords = np.zeros(nd)
    rem = int(best_idx)
    for j in range(nd - 1, -1, -1):
        coords[j] = rem % int(counts[j])
        rem //= int(counts[j])
    x = lo + coords * step
    return Solution("optimal", "grid", _point_dict(lay, x),
                    _finish_value(p, float(best_val)), None, 0, meta=meta)


SOLVERS = {
    "simplex": solve_simplex,
    "newton": solve_newton,
    "barrier": solve_barrier,
    "grid": solve_grid_oracle,
}
