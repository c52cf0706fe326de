"""Independent ground-truth routines and instance generators for the tests.

The oracles compute expected answers by brute force — vertex enumeration,
dense eigensolvers, finite differences — without touching the package's
solver or extraction code, so agreement is evidence rather than circularity.
Generators hand back the raw matrices next to the built Problem for the
same reason: the oracle side never re-parses the expression trees.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from optontology import expr as E
from optontology.problem import Constraint, Problem, VariableSpec


# ---------------------------------------------------------------------------
# vertex-enumeration oracle for linear programs

def vertex_lp(c, a_mat, b_vec, box: float = 1e6):
    """Minimize ``c @ x`` over ``{x : a_mat @ x <= b_vec}`` by brute force.

    Every n-subset of rows (original rows plus a bounding box) is solved for
    its intersection point; feasible intersections are ranked by objective.
    The box is then grown 16-fold: a strictly improving value means the
    problem is unbounded, no feasible vertex at all means it is infeasible.

    Returns ``(status, value, point)`` with status one of
    ``optimal | unbounded | infeasible``.
    """
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    a_mat = np.asarray(a_mat, dtype=float).reshape(-1, n)
    b_vec = np.asarray(b_vec, dtype=float).ravel()

    def best_at(m_box):
        a = np.vstack([a_mat, np.eye(n), -np.eye(n)])
        b = np.concatenate([b_vec, np.full(n, m_box), np.full(n, m_box)])
        best_val, best_x = math.inf, None
        for subset in itertools.combinations(range(a.shape[0]), n):
            a_s = a[list(subset)]
            b_s = b[list(subset)]
            try:
                x = np.linalg.solve(a_s, b_s)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(x)):
                continue
            # reject solutions from badly conditioned subsets
            if np.max(np.abs(a_s @ x - b_s)) > 1e-6 * (1.0 + np.max(np.abs(b_s))):
                continue
            scale = 1.0 + float(np.max(np.abs(x)))
            slack = 1e-8 * scale * (1.0 + np.abs(a).sum(axis=1))
            if np.all(a @ x - b <= slack):
                val = float(c @ x)
                if val < best_val:
                    best_val, best_x = val, x
        return best_val, best_x

    v1, x1 = best_at(box)
    if x1 is None:
        return "infeasible", math.nan, None
    v2, _ = best_at(16.0 * box)
    if v2 < v1 - max(1e-6, 1e-9 * abs(v1)):
        return "unbounded", -math.inf, None
    return "optimal", v1, x1


# ---------------------------------------------------------------------------
# small dense eigen/trace oracles

def eig2x2(a, b, d):
    """Eigenvalues of [[a, b], [b, d]] from the characteristic polynomial."""
    half_trace = 0.5 * (a + d)
    radius = math.sqrt((0.5 * (a - d)) ** 2 + b * b)
    return half_trace - radius, half_trace + radius


def trace_pairing(a, b):
    """sum_ij A_ij B_ij by explicit loops."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            total += a[i, j] * b[i, j]
    return total


# ---------------------------------------------------------------------------
# finite differences

def fd_gradient(f, x, h: float = 1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# random-instance generators (problem + raw matrices, built side by side)

def _grid_vals(rng, size, lo, hi, step=0.25):
    k_lo, k_hi = round(lo / step), round(hi / step)
    return rng.integers(k_lo, k_hi + 1, size=size) * step


def _lin_expr(coeffs, names_sizes):
    """dot/scale expression for ``coeffs @ x`` over the declared variables."""
    parts = []
    off = 0
    for name, size in names_sizes:
        block = np.asarray(coeffs[off:off + size], dtype=float)
        off += size
        if size == 1:
            if block[0] != 0.0:
                parts.append(E.scale(float(block[0]), E.var(name)))
        elif np.any(block):
            parts.append(E.dot(block, name))
    if not parts:
        return E.const(0.0)
    if len(parts) == 1:
        return parts[0]
    return E.sum_terms(parts)


def random_lp(rng):
    """A small random LP plus its minimized inequality-form matrices.

    Returns ``(problem, c_min, a_all, b_all)`` where the matrix rows are
    the structural constraints (equalities as +/- pairs) followed by the
    domain rows, exactly the package's multiplier convention, and c_min
    is the minimized-sense objective vector.
    """
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 6))
    flavor = rng.random()
    if flavor < 0.4:
        variables = (VariableSpec("x", "vector", n, "free"),)
        names_sizes = [("x", n)]
        nonneg = np.zeros(n, dtype=bool)
    elif flavor < 0.8:
        variables = (VariableSpec("x", "vector", n, "nonnegative"),)
        names_sizes = [("x", n)]
        nonneg = np.ones(n, dtype=bool)
    else:
        if n == 1:
            variables = (VariableSpec("t", "scalar", 1, "free"),)
            names_sizes = [("t", 1)]
            nonneg = np.zeros(1, dtype=bool)
        else:
            variables = (VariableSpec("t", "scalar", 1, "free"),
                         VariableSpec("x", "vector", n - 1, "nonnegative"))
            names_sizes = [("t", 1), ("x", n - 1)]
            nonneg = np.concatenate([[False], np.ones(n - 1, dtype=bool)])

    sense = "minimize" if rng.random() < 0.5 else "maximize"
    c = rng.uniform(-2.0, 2.0, n)

    rows_a = np.zeros((m, n))
    rows_b = np.zeros(m)
    rels = []
    for i in range(m):
        row = _grid_vals(rng, n, -2.0, 2.0)
        while not np.any(row):
            row = _grid_vals(rng, n, -2.0, 2.0)
        rows_a[i] = row
        rows_b[i] = float(_grid_vals(rng, 1, -4.0, 4.0)[0])
        u = rng.random()
        rels.append("<=" if u < 0.45 else (">=" if u < 0.9 else "="))

    constraints = tuple(
        Constraint(_lin_expr(rows_a[i], names_sizes), rels[i],
                   E.const(float(rows_b[i])))
        for i in range(m))
    problem = Problem(variables, sense, _lin_expr(c, names_sizes), constraints)

    # minimized inequality form, in the package's row order
    a_min, b_min = [], []
    for i in range(m):
        if rels[i] == "<=":
            a_min.append(rows_a[i]); b_min.append(rows_b[i])
        elif rels[i] == ">=":
            a_min.append(-rows_a[i]); b_min.append(-rows_b[i])
        else:
            a_min.append(rows_a[i]); b_min.append(rows_b[i])
            a_min.append(-rows_a[i]); b_min.append(-rows_b[i])
    for j in range(n):
        if nonneg[j]:
            e = np.zeros(n)
            e[j] = -1.0
            a_min.append(e); b_min.append(0.0)
    c_min = c if sense == "minimize" else -c
    return problem, c_min, np.array(a_min), np.array(b_min)


def random_symmetric_lp(rng):
    """Bounded, feasible ``max c.x  s.t.  A x <= b, x >= 0`` instance.

    Feasibility comes from ``b > 0`` (the origin is interior), boundedness
    from a final row summing all coordinates.  Returns
    ``(problem, c, a_mat, b_vec)`` in the written maximization shape.
    """
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 5))
    a_mat = np.zeros((m + 1, n))
    for i in range(m):
        a_mat[i] = _grid_vals(rng, n, -2.0, 2.0)
    a_mat[m] = 1.0
    b_vec = np.concatenate([
        _grid_vals(rng, m, 0.5, 6.0),
        [float(_grid_vals(rng, 1, 2.0, 6.0)[0])],
    ])
    c = rng.uniform(-3.0, 3.0, n)

    names_sizes = [("x", n)]
    constraints = tuple(
        Constraint(_lin_expr(a_mat[i], names_sizes), "<=",
                   E.const(float(b_vec[i])))
        for i in range(m + 1))
    problem = Problem((VariableSpec("x", "vector", n, "nonnegative"),),
                      "maximize", _lin_expr(c, names_sizes), constraints)
    return problem, c, a_mat, b_vec


def random_reducible_socp(rng, n: int):
    """Second-order rows with all-zero matrices pinning per-coordinate bounds.

    Row j encodes ``||b_j|| <= x_j + d_j`` with a zero matrix block, i.e.
    the linear bound ``x_j >= ||b_j|| - d_j``; d_j is chosen so the bound
    lands on a multiple of 0.1 inside [-2, 2], hence exactly on the nodes
    of an 81-point grid over [-4, 4].  Returns
    ``(problem, c, lower_bounds)``; the true optimum is ``c @ lower_bounds``.
    """
    targets = rng.integers(-20, 21, size=n) * 0.1
    c = _grid_vals(rng, n, 0.25, 2.5)
    constraints = []
    for j in range(n):
        b_off = _grid_vals(rng, 2, -2.0, 2.0)
        d = float(np.linalg.norm(b_off)) - float(targets[j])
        zero = np.zeros((2, n))
        constraints.append(Constraint(
            E.norm2(zero, b_off, "x"), "<=",
            E.add(E.var("x", j), E.const(d))))
    problem = Problem((VariableSpec("x", "vector", n, "free"),),
                      "minimize", E.dot(c, "x"), tuple(constraints))
    return problem, np.asarray(c, dtype=float), np.asarray(targets, dtype=float)


def random_gp(rng, n: int):
    """Coercive unconstrained posynomial with an interior minimizer.

    Per coordinate: a growing term ``c1 x^p`` and a decaying term
    ``c2 x^-q`` with ``c2`` solved so the one-dimensional minimizer sits at
    a chosen ``x*`` in [0.6, 1.6]; for n = 2 a mild cross monomial is added.
    Exponents avoid integers so the quadratic patterns never match and the
    instance classifies as GP.  Returns ``(problem, objective_fn)`` where
    ``objective_fn`` evaluates the posynomial directly from the raw terms.
    """
    terms = []  # (coefficient, exponent-vector)
    for j in range(n):
        p = float(rng.choice([1.25, 1.5, 1.75, 2.25, 2.5]))
        q = float(rng.choice([0.5, 0.75, 1.25, 1.5]))
        c1 = float(_grid_vals(rng, 1, 0.5, 1.5, step=0.125)[0])
        x_star = float(_grid_vals(rng, 1, 0.6, 1.6, step=0.1)[0])
        c2 = c1 * (p / q) * x_star ** (p + q)
        e_grow = np.zeros(n); e_grow[j] = p
        e_decay = np.zeros(n); e_decay[j] = -q
        terms.append((c1, e_grow))
        terms.append((c2, e_decay))
    if n == 2:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        terms.append((0.25, np.array([0.25 * sign, -0.25 * sign])))

    objective = E.sum_terms([E.monomial(c, a, "x") for c, a in terms])
    problem = Problem((VariableSpec("x", "vector", n, "strictly-positive"),),
                      "minimize", objective)

    frozen = [(float(c), np.array(a, dtype=float)) for c, a in terms]

    def objective_fn(x):
        x = np.asarray(x, dtype=float)
        return float(sum(c * np.prod(x ** a) for c, a in frozen))

    return problem, objective_fn


def random_convex_qp(rng, n: int, with_param: bool = False):
    """Strictly convex unconstrained QP; optionally with a linear parameter.

    Objective: ``0.5 x' P x + q . x  (+ r * u . x)`` with P = R'R + D,
    D diagonal positive.  Returns ``(problem, p_mat, q_vec, u_vec)``;
    ``u_vec`` is None without the parameter.  The analytic minimizer is
    ``-P^{-1} (q + r u)``.
    """
    r_mat = _grid_vals(rng, (n, n), -1.0, 1.0)
    p_mat = r_mat.T @ r_mat + np.diag(rng.uniform(0.5, 1.5, n))
    p_mat = 0.5 * (p_mat + p_mat.T)
    q_vec = _grid_vals(rng, n, -2.0, 2.0)
    obj = E.add(E.quad(p_mat, "x"), E.dot(q_vec, "x"))
    u_vec = None
    params = {}
    if with_param:
        u_vec = _grid_vals(rng, n, -2.0, 2.0)
        while not np.any(u_vec):
            u_vec = _grid_vals(rng, n, -2.0, 2.0)
        obj = E.add(obj, E.scale("r", E.dot(u_vec, "x")))
        params = {"r": 0.0}
    problem = Problem((VariableSpec("x", "vector", n, "free"),),
                      "minimize", obj, (), params)
    return problem, p_mat, np.asarray(q_vec, dtype=float), u_vec
