"""Flat stack programs compiled from expression trees.

Both evaluation backends execute the same instruction encoding: one row of
six int32 per instruction, [opcode, a, b, c, d, e], plus a float64 constant
pool.  Operands are indices into the pool, variable offsets into the flat
point vector, or small counts, depending on the opcode.

Domain violations (log of a nonpositive value, monomial off the positive
orthant, fractional power of a negative base) evaluate to NaN rather than
raising; batch callers treat NaN as "outside the domain".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import expr as ex
from ..errors import UnboundParameterError

OP_CONST = 0   # a: pool index
OP_VAR = 1     # a: flat offset
OP_SUM = 2     # a: operand count (pops a, pushes 1)
OP_NEG = 3
OP_SCALE = 4   # a: pool index of the factor
OP_DOT = 5     # a: pool index of coeffs, b: length, c: var offset
OP_QUAD = 6    # a: pool index of symmetrized Q (row-major), b: n, c: var offset
OP_NORM2 = 7   # a: pool index of A, b: rows, c: cols, d: pool index of b, e: var offset
OP_EXP = 8
OP_LOG = 9
OP_POW = 10    # a: pool index of the exponent
OP_MONO = 11   # a: pool index of c, b: pool index of exponents, c: n, d: var offset

MAX_STACK = 64

# feasibility relation codes used by grid_scan
REL_LE = 0      # residual <= tol
REL_EQ = 1      # |residual| <= tol
REL_STRICT = 2  # residual < 0 exactly (strictly-positive domains)


@dataclass(frozen=True)
class Program:
    code: np.ndarray       # (n_instr, 6) int32
    pool: np.ndarray       # float64
    stack_need: int
    n_flat: int


def compile_expr(e: ex.Expr, layout: ex.Layout) -> Program:
    code: list[list[int]] = []
    pool: list[float] = []

    def pool_push(values) -> int:
        at = len(pool)
        arr = np.asarray(values, dtype=float).ravel()
        pool.extend(arr.tolist())
        return at

    def emit(op, a=0, b=0, c=0, d=0, e_=0) -> None:
        code.append([op, a, b, c, d, e_])

    def walk(node: ex.Expr) -> int:
        """Emit instructions, return stack slots this subtree needs."""
        op = node.op
        if op == "const":
            v = node.args[0]
            if isinstance(v, str):
                raise UnboundParameterError(
                    f"parameter '{v}' must be bound before compiling")
            emit(OP_CONST, pool_push([v]))
            return 1
        if op == "var":
            emit(OP_VAR, ex._require_scalar_slot(layout, node))
            return 1
        if op in ("add", "sum"):
            need = 0
            for i, child in enumerate(node.args):
                need = max(need, i + walk(child))
            emit(OP_SUM, len(node.args))
            return need
        if op == "neg":
            need = walk(node.args[0])
            emit(OP_NEG)
            return need
        if op == "scale":
            f = node.args[0]
            if isinstance(f, str):
                raise UnboundParameterError(
                    f"parameter '{f}' must be bound before compiling")
            need = walk(node.args[1])
            emit(OP_SCALE, pool_push([f]))
            return need
        if op == "dot":
            c_vec, name = node.args
            off, size = layout.slot(name)
            emit(OP_DOT, pool_push(c_vec), size, off)
            return 1
        if op == "quad":
            name = node.args[1]
            off, size = layout.slot(name)
            emit(OP_QUAD, pool_push(ex.sym_matrix(node)), size, off)
            return 1
        if op == "norm2":
            a_m, b_v, name = node.args
            off, _ = layout.slot(name)
            emit(OP_NORM2, pool_push(a_m), a_m.shape[0], a_m.shape[1],
                 pool_push(b_v), off)
            return 1
        if op == "exp":
            need = walk(node.args[0])
            emit(OP_EXP)
            return need
        if op == "log":
            need = walk(node.args[0])
            emit(OP_LOG)
            return need
        if op == "pow":
            need = walk(node.args[0])
            emit(OP_POW, pool_push([node.args[1]]))
            return need
        if op == "monomial":
            c, a_exp, name = node.args
            off, size = layout.slot(name)
            emit(OP_MONO, pool_push([c]), pool_push(a_exp), size, off)
            return 1
        raise ValueError(f"unknown op '{op}'")

    need = walk(e)
    if need > MAX_STACK:
        raise ValueError(f"expression needs {need} stack slots, limit is {MAX_STACK}")
    return Program(np.asarray(code, dtype=np.int32).reshape(len(code), 6),
                   np.asarray(pool, dtype=float),
                   need, layout.total)


_POOL_OPERANDS = {
    OP_CONST: (1,),
    OP_SCALE: (1,),
    OP_DOT: (1,),
    OP_QUAD: (1,),
    OP_NORM2: (1, 4),
    OP_POW: (1,),
    OP_MONO: (1, 2),
}


def pack_programs(programs: list[Program]) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Concatenate programs into one code/pool pair with segment starts.

    Pool references inside each segment are shifted to the merged pool.
    Returns (code, pool, starts, stack_need); segment i spans
    code[starts[i]:starts[i+1]].
    """
    codes = []
    pools = []
    starts = [0]
    pool_at = 0
    need = 0
    for prog in programs:
        code = prog.code.copy()
        for row in code:
            for col in _POOL_OPERANDS.get(int(row[0]), ()):
                row[col] += pool_at
        codes.append(code)
        pools.append(prog.pool)
        pool_at += prog.pool.size
        starts.append(starts[-1] + code.shape[0])
        need = max(need, prog.stack_need)
    code = np.vstack(codes) if codes else np.zeros((0, 6), dtype=np.int32)
    pool = np.concatenate(pools) if pools else np.zeros(0)
    return code, pool, np.asarray(starts, dtype=np.int32), need
