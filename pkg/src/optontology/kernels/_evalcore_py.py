"""Numpy backend: executes kernel programs one vectorized op at a time.

Interface-compatible with the compiled backend in _evalcore.pyx; used when
the extension is not built.
"""

from __future__ import annotations

import numpy as np

from .program import (
    OP_CONST, OP_DOT, OP_EXP, OP_LOG, OP_MONO, OP_NEG, OP_NORM2, OP_POW,
    OP_QUAD, OP_SCALE, OP_SUM, OP_VAR, REL_EQ, REL_LE, REL_STRICT,
)

_CHUNK = 1 << 16


def _run(code: np.ndarray, pool: np.ndarray, pts: np.ndarray,
         lo: int, hi: int) -> np.ndarray:
    """Execute code[lo:hi] over points (N, n_flat); returns (N,) values."""
    n = pts.shape[0]
    stack: list[np.ndarray] = []
    with np.errstate(all="ignore"):
        for r in range(lo, hi):
            op, a, b, c, d, e = (int(v) for v in code[r])
            if op == OP_CONST:
                stack.append(np.full(n, pool[a]))
            elif op == OP_VAR:
                stack.append(pts[:, a].copy())
            elif op == OP_SUM:
                acc = stack[-a]
                for s in stack[len(stack) - a + 1:]:
                    acc = acc + s
                del stack[len(stack) - a:]
                stack.append(acc)
            elif op == OP_NEG:
                stack[-1] = -stack[-1]
            elif op == OP_SCALE:
                stack[-1] = pool[a] * stack[-1]
            elif op == OP_DOT:
                coeffs = pool[a:a + b]
                stack.append(pts[:, c:c + b] @ coeffs)
            elif op == OP_QUAD:
                q = pool[a:a + b * b].reshape(b, b)
                v = pts[:, c:c + b]
                stack.append(0.5 * np.einsum("ni,ij,nj->n", v, q, v))
            elif op == OP_NORM2:
                mat = pool[a:a + b * c].reshape(b, c)
                off = pool[d:d + b]
                res = pts[:, e:e + c] @ mat.T + off
                stack.append(np.sqrt(np.sum(res * res, axis=1)))
            elif op == OP_EXP:
                stack[-1] = np.exp(stack[-1])
            elif op == OP_LOG:
                v = stack[-1]
                stack[-1] = np.where(v > 0.0, np.log(np.where(v > 0.0, v, 1.0)), np.nan)
            elif op == OP_POW:
                p = pool[a]
                v = stack[-1]
                if p == round(p):
                    if p < 0:
                        out = np.where(v != 0.0,
                                       np.power(np.where(v != 0.0, v, 1.0), p), np.nan)
                    else:
                        out = np.power(v, p)
                else:
                    out = np.where(v >= 0.0, np.power(np.abs(v), p), np.nan)
                    if p < 0:
                        out = np.where(v == 0.0, np.nan, out)
                stack[-1] = out
            elif op == OP_MONO:
                cval = pool[a]
                exps = pool[b:b + c]
                v = pts[:, d:d + c]
                bad = np.any(v <= 0.0, axis=1)
                safe = np.where(v > 0.0, v, 1.0)
                vals = cval * np.prod(safe ** exps, axis=1)
                stack.append(np.where(bad, np.nan, vals))
            else:
                raise ValueError(f"bad opcode {op}")
    return stack[-1]


def eval_batch(code, pool, points) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    return _run(code, pool, pts, 0, code.shape[0])


def grid_scan(obj_code, obj_pool, cons_code, cons_pool, cons_starts, rel_codes,
              lo, step, counts, feas_tol):
    """Scan the full grid; returns (best_flat_index or -1, best_value, n_feasible).

    Points are visited in lexicographic order (first coordinate slowest), and
    only strict improvements replace the incumbent, so ties keep the
    lexicographically smallest point.
    """
    lo = np.asarray(lo, dtype=float)
    step = np.asarray(step, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    nd = lo.size
    total = int(np.prod(counts))
    n_cons = len(cons_starts) - 1

    best_idx = -1
    best_val = np.inf
    n_feas = 0
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        pts = np.empty((idx.size, nd))
        rem = idx
        for j in range(nd - 1, -1, -1):
            pts[:, j] = lo[j] + (rem % counts[j]) * step[j]
            rem = rem // counts[j]
        feas = np.ones(idx.size, dtype=bool)
        for k in range(n_cons):
            if not feas.any():
                break
            res = _run(cons_code, cons_pool, pts, int(cons_starts[k]),
                       int(cons_starts[k + 1]))
            rel = int(rel_codes[k])
            if rel == REL_LE:
                ok = res <= feas_tol
            elif rel == REL_EQ:
                ok = np.abs(res) <= feas_tol
            elif rel == REL_STRICT:
                ok = res < 0.0
            else:
                raise ValueError(f"bad relation code {rel}")
            feas &= np.where(np.isnan(res), False, ok)
        if not feas.any():
            continue
        vals = _run(obj_code, obj_pool, pts, 0, obj_code.shape[0])
        usable = feas & np.isfinite(vals)
        n_feas += int(np.count_nonzero(usable))
        if not usable.any():
            continue
        masked = np.where(usable, vals, np.inf)
        j = int(np.argmin(masked))
        if masked[j] < best_val:
            best_val = float(masked[j])
            best_idx = int(idx[j])
    return best_idx, best_val, n_feas
