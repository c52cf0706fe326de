#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-Python evaluation kernels.

Both backends implement the same bytecode interpreter contract
(``eval_batch`` and ``grid_scan``); the package picks the compiled one at
import when the extension built.  This script times the two side by side
on representative workloads and checks they agree on the answers.

Usage:  python3 benchmarks/bench_backends.py [--points N] [--repeats K]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from optontology import expr as E
from optontology.kernels import BACKEND, backend_module, pack_programs
from optontology.kernels.program import REL_LE, compile_expr


def _battery(layout):
    quad = E.quad([[2.0, 0.5, 0.0], [0.5, 3.0, 0.0], [0.0, 0.0, 1.0]], "x")
    return {
        "affine": E.add(E.dot([1.5, -2.0, 0.5], "x"), E.const(1.0)),
        "quadratic": E.add(quad, E.dot([1.0, -1.0, 0.0], "x")),
        "norm": E.norm2([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [0.5, -0.5], "x"),
        "exp-sum": E.add(E.exp(E.var("x", 0)), E.exp(E.neg(E.var("x", 1)))),
        "posynomial": E.sum_terms([
            E.monomial(1.25, [1.5, 0.0, 0.0], "x"),
            E.monomial(2.0, [-0.75, 0.5, 0.0], "x"),
            E.monomial(0.5, [0.0, -1.25, 1.0], "x"),
        ]),
    }


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_eval_batch(n_points, repeats):
    layout = E.Layout.build([("x", 3)])
    rng = np.random.default_rng(7)
    points = rng.uniform(0.2, 2.0, size=(n_points, 3))
    rows = []
    for name, expr in _battery(layout).items():
        program = compile_expr(expr, layout)
        timings = {}
        values = {}
        for backend in ("compiled", "python"):
            mod = backend_module(backend)
            values[backend] = mod.eval_batch(program.code, program.pool, points)
            timings[backend] = _time(
                lambda m=mod: m.eval_batch(program.code, program.pool, points),
                repeats)
        if not np.allclose(values["compiled"], values["python"],
                           rtol=1e-12, atol=1e-12, equal_nan=True):
            raise AssertionError(f"backends disagree on '{name}'")
        rows.append((f"eval {name} ({n_points:,} pts)",
                     timings["compiled"], timings["python"]))
    return rows


def bench_grid_scan(repeats):
    layout = E.Layout.build([("x", 3)])
    objective = compile_expr(
        E.add(E.quad(np.eye(3).tolist(), "x"), E.dot([1.0, -2.0, 0.5], "x")),
        layout)
    rows_g = [
        compile_expr(E.add(E.dot([1.0, 1.0, 1.0], "x"), E.const(-2.0)), layout),
        compile_expr(E.add(E.norm2([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
                                   [0.0, 0.0], "x"),
                           E.neg(E.var("x", 2))), layout),
    ]
    code, pool, starts, _ = pack_programs(rows_g)
    rel = np.array([REL_LE, REL_LE], dtype=np.int32)
    lo = np.full(3, -2.0)
    step = np.full(3, 4.0 / 80.0)
    counts = np.full(3, 81, dtype=np.int64)

    timings = {}
    results = {}
    for backend in ("compiled", "python"):
        mod = backend_module(backend)

        def run(m=mod):
            return m.grid_scan(objective.code, objective.pool, code, pool,
                               starts, rel, lo, step, counts, 1e-9)

        results[backend] = run()
        timings[backend] = _time(run, repeats)
    if results["compiled"] != results["python"]:
        raise AssertionError("backends disagree on the grid scan")
    return [("grid scan 81^3, 2 rows", timings["compiled"], timings["python"])]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000,
                    help="points per eval_batch call (default 200000)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats, best-of (default 5)")
    args = ap.parse_args()

    print(f"active backend at import: {BACKEND}")
    rows = bench_eval_batch(args.points, args.repeats)
    rows += bench_grid_scan(args.repeats)

    width = max(len(r[0]) for r in rows)
    print(f"{'workload':<{width}}  {'compiled':>10}  {'python':>10}  {'ratio':>7}")
    for name, tc, tp in rows:
        print(f"{name:<{width}}  {tc * 1e3:>8.2f}ms  {tp * 1e3:>8.2f}ms  "
              f"{tp / tc:>6.1f}x")


if __name__ == "__main__":
    main()
