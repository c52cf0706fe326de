"""Evaluation kernels with a compiled fast path.

The Cython extension is picked when its build artifact imports; otherwise the
numpy fallback runs the identical instruction encoding.  ``BACKEND`` reports
which one is live.
"""

from __future__ import annotations

import numpy as np

from .program import (
    MAX_STACK, Program, REL_EQ, REL_LE, REL_STRICT, compile_expr, pack_programs,
)

try:
    from . import _evalcore as _impl
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on the build environment
    from . import _evalcore_py as _impl
    BACKEND = "python"


def backend_module(name: str):
    """Fetch a backend by name for side-by-side comparison ("python" always works)."""
    if name == "python":
        from . import _evalcore_py
        return _evalcore_py
    if name == "compiled":
        from . import _evalcore
        return _evalcore
    raise ValueError(f"unknown backend '{name}'")


def eval_many(program: Program, points) -> np.ndarray:
    """Evaluate one compiled program at many points; NaN marks domain misses."""
    return _impl.eval_batch(program.code, program.pool, points)


def grid_scan(objective: Program, constraints: list[Program], rel_codes,
              lo, step, counts, feas_tol: float, module=None):
    """Fused feasibility-filtered argmin over a rectangular grid.

    Returns (best_flat_index or -1, best_value, n_feasible).  Lexicographic
    scan order plus strict improvement means ties keep the smallest point.
    """
    impl = module if module is not None else _impl
    code, pool, starts, _ = pack_programs(list(constraints))
    return impl.grid_scan(
        objective.code, objective.pool, code, pool, starts,
        np.asarray(rel_codes, dtype=np.int32),
        np.asarray(lo, dtype=float), np.asarray(step, dtype=float),
        np.asarray(counts, dtype=np.int64), float(feas_tol))
