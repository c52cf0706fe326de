# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend: scalar stack machine over C arrays.

Mirrors _evalcore_py exactly; NaN marks domain violations.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, exp as c_exp, fabs, isfinite, isnan
from libc.math cimport log as c_log, pow as c_pow, round as c_round, sqrt

cnp.import_array()

DEF MAX_STACK = 64
DEF MAX_DIMS = 8


cdef inline double _run_one(const int* code, int n_instr, const double* pool,
                            const double* x, double* stack) noexcept nogil:
    cdef int sp = 0, r, op, a, b, c, d, e, i, j
    cdef double acc, v, p
    for r in range(n_instr):
        op = code[6 * r]
        a = code[6 * r + 1]
        b = code[6 * r + 2]
        c = code[6 * r + 3]
        d = code[6 * r + 4]
        e = code[6 * r + 5]
        if op == 0:      # CONST
            stack[sp] = pool[a]; sp += 1
        elif op == 1:    # VAR
            stack[sp] = x[a]; sp += 1
        elif op == 2:    # SUM of a operands
            acc = 0.0
            for i in range(a):
                acc += stack[sp - 1 - i]
            sp -= a
            stack[sp] = acc; sp += 1
        elif op == 3:    # NEG
            stack[sp - 1] = -stack[sp - 1]
        elif op == 4:    # SCALE
            stack[sp - 1] = pool[a] * stack[sp - 1]
        elif op == 5:    # DOT: coeffs at a, length b, var offset c
            acc = 0.0
            for i in range(b):
                acc += pool[a + i] * x[c + i]
            stack[sp] = acc; sp += 1
        elif op == 6:    # QUAD: Q at a (b x b), var offset c
            acc = 0.0
            for i in range(b):
                v = 0.0
                for j in range(b):
                    v += pool[a + i * b + j] * x[c + j]
                acc += x[c + i] * v
            stack[sp] = 0.5 * acc; sp += 1
        elif op == 7:    # NORM2: A at a (b x c), offset at d, var offset e
            acc = 0.0
            for i in range(b):
                v = pool[d + i]
                for j in range(c):
                    v += pool[a + i * c + j] * x[e + j]
                acc += v * v
            stack[sp] = sqrt(acc); sp += 1
        elif op == 8:    # EXP
            stack[sp - 1] = c_exp(stack[sp - 1])
        elif op == 9:    # LOG
            v = stack[sp - 1]
            stack[sp - 1] = c_log(v) if v > 0.0 else NAN
        elif op == 10:   # POW: exponent at a
            p = pool[a]
            v = stack[sp - 1]
            if v < 0.0 and p != c_round(p):
                stack[sp - 1] = NAN
            elif v == 0.0 and p < 0.0:
                stack[sp - 1] = NAN
            else:
                stack[sp - 1] = c_pow(v, p)
        elif op == 11:   # MONO: c at a, exponents at b, n = c, var offset d
            acc = pool[a]
            for i in range(c):
                v = x[d + i]
                if v <= 0.0:
                    acc = NAN
                    break
                acc *= c_pow(v, pool[b + i])
            stack[sp] = acc; sp += 1
    return stack[sp - 1]


def eval_batch(code, pool, points):
    cdef const int[:, ::1] code_v = np.ascontiguousarray(code, dtype=np.int32)
    cdef const double[::1] pool_v = _nonempty(pool)
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    cdef const double[:, ::1] pts_v = pts
    cdef Py_ssize_t n = pts_v.shape[0], k
    cdef int n_instr = code_v.shape[0]
    out = np.empty(n)
    cdef double[::1] out_v = out
    cdef double stack[MAX_STACK]
    if n == 0 or n_instr == 0:
        return out
    with nogil:
        for k in range(n):
            out_v[k] = _run_one(&code_v[0, 0], n_instr, &pool_v[0],
                                &pts_v[k, 0], stack)
    return out


def _nonempty(arr):
    a = np.ascontiguousarray(arr, dtype=float)
    return a if a.size else np.zeros(1)


def grid_scan(obj_code, obj_pool, cons_code, cons_pool, cons_starts, rel_codes,
              lo, step, counts, feas_tol):
    cdef const int[:, ::1] ocode = np.ascontiguousarray(obj_code, dtype=np.int32)
    cdef const double[::1] opool = _nonempty(obj_pool)
    ccode_arr = np.ascontiguousarray(cons_code, dtype=np.int32)
    if ccode_arr.shape[0] == 0:
        ccode_arr = np.zeros((1, 6), dtype=np.int32)
    cdef const int[:, ::1] ccode = ccode_arr
    cdef const double[::1] cpool = _nonempty(cons_pool)
    cdef const int[::1] starts = np.ascontiguousarray(cons_starts, dtype=np.int32)
    cdef const int[::1] rels = np.ascontiguousarray(rel_codes, dtype=np.int32)
    cdef const double[::1] lo_v = np.ascontiguousarray(lo, dtype=float)
    cdef const double[::1] step_v = np.ascontiguousarray(step, dtype=float)
    cdef const long long[::1] cnt_v = np.ascontiguousarray(counts, dtype=np.int64)

    cdef int nd = lo_v.shape[0]
    cdef int ncons = starts.shape[0] - 1
    cdef int n_obj = ocode.shape[0]
    if nd > MAX_DIMS:
        raise ValueError(f"grid_scan supports at most {MAX_DIMS} dimensions")

    cdef long long total = 1, flat, rem, best_idx = -1, n_feas = 0
    cdef int j, k, rel, feasible
    for j in range(nd):
        total *= cnt_v[j]

    cdef double best_val = np.inf
    cdef double tol = feas_tol
    cdef double xbuf[MAX_DIMS]
    cdef double stack[MAX_STACK]
    cdef double res, val

    with nogil:
        for flat in range(total):
            rem = flat
            for j in range(nd - 1, -1, -1):
                xbuf[j] = lo_v[j] + <double>(rem % cnt_v[j]) * step_v[j]
                rem = rem // cnt_v[j]
            feasible = 1
            for k in range(ncons):
                res = _run_one(&ccode[starts[k], 0], starts[k + 1] - starts[k],
                               &cpool[0], xbuf, stack)
                rel = rels[k]
                if isnan(res):
                    feasible = 0
                elif rel == 0:
                    feasible = res <= tol
                elif rel == 1:
                    feasible = fabs(res) <= tol
                else:
                    feasible = res < 0.0
                if not feasible:
                    break
            if not feasible:
                continue
            val = _run_one(&ocode[0, 0], n_obj, &opool[0], xbuf, stack)
            if not isfinite(val):
                continue
            n_feas += 1
            if val < best_val:
                best_val = val
                best_idx = flat
    return int(best_idx), float(best_val), int(n_feas)
