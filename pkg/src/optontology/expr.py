"""Immutable expression trees over declared variables.

Node kinds (the ``op`` tags are also the on-disk names):

    const     scalar literal, or the name of a problem parameter
    var       one scalar: a scalar variable, or one component of a vector
    add       binary sum
    sum       n-ary sum of terms
    neg       negation
    scale     multiplication by a scalar constant (or named parameter)
    dot       c . v for a coefficient vector c and a declared vector variable
    quad      (1/2) v'Qv over a declared vector variable
    norm2     euclidean norm of an affine image ||Av+b||
    exp, log  pointwise transcendentals
    pow       real power of a subexpression
    monomial  c * v1^a1 * ... * vn^an with c > 0, over a vector variable
    sum       n-ary sum

A bare ``var`` node naming a vector or matrix variable is only legal as the
left side of a cone-membership constraint; everywhere else expressions are
scalar-valued.  Matrix variables occupy a row-major slice of the flattened
variable space, so trace-style linear forms over them are written with
``dot`` and the flattened coefficient matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import DEFAULT_TOLERANCES
from .errors import (
    EvalDomainError,
    NondifferentiableError,
    UnboundParameterError,
    UnboundVariableError,
)

OPS = frozenset({
    "const", "var", "add", "neg", "scale", "dot", "quad", "norm2",
    "exp", "log", "pow", "monomial", "sum",
})

CURVATURE_KINDS = ("constant", "affine", "convex", "concave", "unknown")


def _frozen_array(data, shape_hint=None) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if shape_hint is not None and arr.ndim != shape_hint:
        raise ValueError(f"expected a {shape_hint}-dimensional payload, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple

    def children(self) -> tuple["Expr", ...]:
        return tuple(a for a in self.args if isinstance(a, Expr))

    def __repr__(self):
        return f"Expr({self.op}, {len(self.args)} args)"


# ---------------------------------------------------------------------------
# constructors

def const(value) -> Expr:
    """Scalar constant; a string names a problem parameter bound later."""
    if isinstance(value, str):
        return Expr("const", (value,))
    return Expr("const", (float(value),))


def var(name: str, index: int | None = None) -> Expr:
    if index is None:
        return Expr("var", (str(name),))
    return Expr("var", (str(name), int(index)))


def add(a: Expr, b: Expr) -> Expr:
    return Expr("add", (a, b))


def sum_terms(terms: Iterable[Expr]) -> Expr:
    terms = tuple(terms)
    if not terms:
        raise ValueError("sum needs at least one term")
    return Expr("sum", terms)


def neg(e: Expr) -> Expr:
    return Expr("neg", (e,))


def scale(factor, e: Expr) -> Expr:
    if isinstance(factor, str):
        return Expr("scale", (factor, e))
    return Expr("scale", (float(factor), e))


def dot(coeffs, varname: str) -> Expr:
    return Expr("dot", (_frozen_array(coeffs, 1), str(varname)))


def quad(matrix, varname: str) -> Expr:
    q = _frozen_array(matrix, 2)
    if q.shape[0] != q.shape[1]:
        raise ValueError(f"quadratic payload must be square, got {q.shape}")
    asym = float(np.max(np.abs(q - q.T))) if q.size else 0.0
    if asym > DEFAULT_TOLERANCES.asymmetry:
        warnings.warn(
            f"quadratic payload asymmetry {asym:.3g} exceeds "
            f"{DEFAULT_TOLERANCES.asymmetry}; the symmetrized matrix is used",
            stacklevel=2,
        )
    return Expr("quad", (q, str(varname)))


def norm2(matrix, offset, varname: str) -> Expr:
    a = _frozen_array(matrix, 2)
    b = _frozen_array(offset, 1)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"norm payload rows {a.shape[0]} != offset length {b.shape[0]}")
    return Expr("norm2", (a, b, str(varname)))


def exp(e: Expr) -> Expr:
    return Expr("exp", (e,))


def log(e: Expr) -> Expr:
    return Expr("log", (e,))


def power(e: Expr, exponent) -> Expr:
    return Expr("pow", (e, float(exponent)))


def monomial(coeff, exponents, varname: str) -> Expr:
    return Expr("monomial", (float(coeff), _frozen_array(exponents, 1), str(varname)))


def quad_asymmetry(e: Expr) -> float:
    q = e.args[0]
    return float(np.max(np.abs(q - q.T))) if q.size else 0.0


def sym_matrix(e: Expr) -> np.ndarray:
    return 0.5 * (e.args[0] + e.args[0].T)


def referenced_names(e: Expr) -> set[str]:
    out: set[str] = set()

    def walk(n: Expr):
        if n.op == "var":
            out.add(n.args[0])
        elif n.op in ("dot", "quad"):
            out.add(n.args[1])
        elif n.op in ("norm2", "monomial"):
            out.add(n.args[2])
        for c in n.children():
            walk(c)

    walk(e)
    return out


def parameter_names(e: Expr) -> set[str]:
    out: set[str] = set()

    def walk(n: Expr):
        if n.op == "const" and isinstance(n.args[0], str):
            out.add(n.args[0])
        elif n.op == "scale" and isinstance(n.args[0], str):
            out.add(n.args[0])
        for c in n.children():
            walk(c)

    walk(e)
    return out


def bind(e: Expr, params: Mapping[str, float]) -> Expr:
    """Replace named parameters with their numeric values."""

    def walk(n: Expr) -> Expr:
        if n.op == "const" and isinstance(n.args[0], str):
            name = n.args[0]
            if name not in params:
                raise UnboundParameterError(f"parameter '{name}' has no value")
            return const(params[name])
        if n.op == "scale" and isinstance(n.args[0], str):
            name = n.args[0]
            if name not in params:
                raise UnboundParameterError(f"parameter '{name}' has no value")
            return scale(float(params[name]), walk(n.args[1]))
        if not n.children():
            return n
        new_args = tuple(walk(a) if isinstance(a, Expr) else a for a in n.args)
        return Expr(n.op, new_args)

    return walk(e)


# ---------------------------------------------------------------------------
# layout: flattening declared variables into one real vector

@dataclass(frozen=True)
class Layout:
    """Maps variable names to contiguous slices of a flat point vector."""

    names: tuple[str, ...]
    offsets: tuple[int, ...]
    sizes: tuple[int, ...]

    @property
    def total(self) -> int:
        return (self.offsets[-1] + self.sizes[-1]) if self.names else 0

    @classmethod
    def build(cls, sized_names: Sequence[tuple[str, int]]) -> "Layout":
        names, offsets, sizes = [], [], []
        at = 0
        for name, size in sized_names:
            names.append(name)
            offsets.append(at)
            sizes.append(int(size))
            at += int(size)
        return cls(tuple(names), tuple(offsets), tuple(sizes))

    @classmethod
    def from_assignment(cls, assignment: Mapping[str, object]) -> "Layout":
        items = []
        for name in sorted(assignment):
            items.append((name, int(np.asarray(assignment[name], dtype=float).size)))
        return cls.build(items)

    def slot(self, name: str) -> tuple[int, int]:
        try:
            i = self.names.index(name)
        except ValueError:
            raise UnboundVariableError(f"variable '{name}' is not in the layout") from None
        return self.offsets[i], self.sizes[i]

    def flatten(self, assignment: Mapping[str, object]) -> np.ndarray:
        x = np.zeros(self.total)
        for name, off, size in zip(self.names, self.offsets, self.sizes):
            if name not in assignment:
                raise UnboundVariableError(f"assignment is missing variable '{name}'")
            vals = np.asarray(assignment[name], dtype=float).ravel()
            if vals.size != size:
                raise UnboundVariableError(
                    f"variable '{name}' expects {size} components, got {vals.size}")
            x[off:off + size] = vals
        return x

    def unflatten(self, x: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for name, off, size in zip(self.names, self.offsets, self.sizes):
            out[name] = np.array(x[off:off + size])
        return out


def _point_and_layout(point, layout: Layout | None) -> tuple[np.ndarray, Layout]:
    if isinstance(point, Mapping):
        lay = layout if layout is not None else Layout.from_assignment(point)
        return lay.flatten(point), lay
    if layout is None:
        raise ValueError("a flat point vector needs an explicit layout")
    x = np.asarray(point, dtype=float).ravel()
    if x.size != layout.total:
        raise UnboundVariableError(
            f"point has {x.size} components, layout expects {layout.total}")
    return x, layout


# ---------------------------------------------------------------------------
# evaluation

def _require_scalar_slot(lay: Layout, e: Expr) -> int:
    if len(e.args) == 2:
        off, size = lay.slot(e.args[0])
        idx = e.args[1]
        if not (0 <= idx < size):
            raise UnboundVariableError(
                f"index {idx} out of range for variable '{e.args[0]}' of size {size}")
        return off + idx
    off, size = lay.slot(e.args[0])
    if size != 1:
        raise UnboundVariableError(
            f"variable '{e.args[0]}' is not scalar; reference a component")
    return off


def _const_value(e: Expr) -> float:
    v = e.args[0]
    if isinstance(v, str):
        raise UnboundParameterError(f"parameter '{v}' has no value; bind it first")
    return v


def _scale_value(e: Expr) -> float:
    v = e.args[0]
    if isinstance(v, str):
        raise UnboundParameterError(f"parameter '{v}' has no value; bind it first")
    return v


def evaluate(e: Expr, point, layout: Layout | None = None) -> float:
    """Evaluate at a point given as {name: value} or as a flat vector."""
    x, lay = _point_and_layout(point, layout)
    return _eval(e, lay, x)


def _eval(e: Expr, lay: Layout, x: np.ndarray) -> float:
    op = e.op
    if op == "const":
        return _const_value(e)
    if op == "var":
        return float(x[_require_scalar_slot(lay, e)])
    if op == "add" or op == "sum":
        return float(sum(_eval(c, lay, x) for c in e.args))
    if op == "neg":
        return -_eval(e.args[0], lay, x)
    if op == "scale":
        return _scale_value(e) * _eval(e.args[1], lay, x)
    if op == "dot":
        c, name = e.args
        off, size = lay.slot(name)
        if size != c.size:
            raise UnboundVariableError(
                f"dot payload length {c.size} != variable '{name}' size {size}")
        return float(c @ x[off:off + size])
    if op == "quad":
        name = e.args[1]
        off, size = lay.slot(name)
        q = sym_matrix(e)
        if q.shape[0] != size:
            raise UnboundVariableError(
                f"quad payload is {q.shape[0]}x{q.shape[0]}, variable '{name}' has size {size}")
        v = x[off:off + size]
        return float(0.5 * v @ q @ v)
    if op == "norm2":
        a, b, name = e.args
        off, size = lay.slot(name)
        if a.shape[1] != size:
            raise UnboundVariableError(
                f"norm payload has {a.shape[1]} columns, variable '{name}' has size {size}")
        return float(np.linalg.norm(a @ x[off:off + size] + b))
    if op == "exp":
        return math.exp(_eval(e.args[0], lay, x))
    if op == "log":
        v = _eval(e.args[0], lay, x)
        if v <= 0.0:
            raise EvalDomainError(f"log of nonpositive value {v}")
        return math.log(v)
    if op == "pow":
        v = _eval(e.args[0], lay, x)
        p = e.args[1]
        if v < 0.0 and p != round(p):
            raise EvalDomainError(f"fractional power of negative base {v}")
        if v == 0.0 and p < 0.0:
            raise EvalDomainError("negative power of zero")
        return float(v ** p)
    if op == "monomial":
        c, a, name = e.args
        off, size = lay.slot(name)
        if a.size != size:
            raise UnboundVariableError(
                f"monomial exponents length {a.size} != variable '{name}' size {size}")
        v = x[off:off + size]
        if np.any(v <= 0.0):
            raise EvalDomainError("monomial evaluated off the positive orthant")
        return float(c * np.prod(v ** a))
    raise ValueError(f"unknown op '{op}'")


# ---------------------------------------------------------------------------
# derivatives

def gradient(e: Expr, point, layout: Layout | None = None, *,
             mode: str = "analytic", h: float | None = None) -> np.ndarray:
    """Gradient over the flat layout, analytic by default.

    mode="fd" switches to central differences with step h.
    """
    x, lay = _point_and_layout(point, layout)
    if mode == "fd":
        step = DEFAULT_TOLERANCES.fd_step if h is None else h
        return _fd_gradient(e, lay, x, step)
    if mode != "analytic":
        raise ValueError(f"unknown gradient mode '{mode}'")
    g = np.zeros(lay.total)
    _accum_grad(e, lay, x, 1.0, g)
    return g


def _fd_gradient(e: Expr, lay: Layout, x: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros(lay.total)
    for i in range(lay.total):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (_eval(e, lay, xp) - _eval(e, lay, xm)) / (2.0 * h)
    return g


def _accum_grad(e: Expr, lay: Layout, x: np.ndarray, w: float, g: np.ndarray):
    """Accumulate w * d(e)/dx into g (reverse-mode over the tree)."""
    op = e.op
    if op == "const":
        return
    if op == "var":
        g[_require_scalar_slot(lay, e)] += w
        return
    if op in ("add", "sum"):
        for c in e.args:
            _accum_grad(c, lay, x, w, g)
        return
    if op == "neg":
        _accum_grad(e.args[0], lay, x, -w, g)
        return
    if op == "scale":
        _accum_grad(e.args[1], lay, x, w * _scale_value(e), g)
        return
    if op == "dot":
        c, name = e.args
        off, _ = lay.slot(name)
        g[off:off + c.size] += w * c
        return
    if op == "quad":
        name = e.args[1]
        off, size = lay.slot(name)
        q = sym_matrix(e)
        g[off:off + size] += w * (q @ x[off:off + size])
        return
    if op == "norm2":
        a, b, name = e.args
        off, size = lay.slot(name)
        r = a @ x[off:off + size] + b
        nrm = float(np.linalg.norm(r))
        if nrm == 0.0:
            raise NondifferentiableError("euclidean norm is not differentiable at zero residual")
        g[off:off + size] += w * (a.T @ r) / nrm
        return
    if op == "exp":
        v = _eval(e.args[0], lay, x)
        _accum_grad(e.args[0], lay, x, w * math.exp(v), g)
        return
    if op == "log":
        v = _eval(e.args[0], lay, x)
        if v <= 0.0:
            raise EvalDomainError(f"log of nonpositive value {v}")
        _accum_grad(e.args[0], lay, x, w / v, g)
        return
    if op == "pow":
        p = e.args[1]
        if p == 0.0:
            return
        v = _eval(e.args[0], lay, x)
        if v < 0.0 and (p - 1.0) != round(p - 1.0) and p != round(p):
            raise EvalDomainError(f"fractional power of negative base {v}")
        if v == 0.0 and p < 1.0:
            raise NondifferentiableError(f"power {p} has unbounded slope at zero")
        _accum_grad(e.args[0], lay, x, w * p * v ** (p - 1.0), g)
        return
    if op == "monomial":
        c, a, name = e.args
        off, size = lay.slot(name)
        v = x[off:off + size]
        if np.any(v <= 0.0):
            raise EvalDomainError("monomial evaluated off the positive orthant")
        val = c * np.prod(v ** a)
        g[off:off + size] += w * val * a / v
        return
    raise ValueError(f"unknown op '{e.op}'")


def hessian(e: Expr, point, layout: Layout | None = None) -> np.ndarray:
    """Analytic Hessian over the flat layout."""
    x, lay = _point_and_layout(point, layout)
    n = lay.total
    h = np.zeros((n, n))
    _accum_hess(e, lay, x, 1.0, h)
    return h


def _grad_vector(e: Expr, lay: Layout, x: np.ndarray) -> np.ndarray:
    g = np.zeros(lay.total)
    _accum_grad(e, lay, x, 1.0, g)
    return g


def _accum_hess(e: Expr, lay: Layout, x: np.ndarray, w: float, h: np.ndarray):
    op = e.op
    if op in ("const", "var", "dot"):
        return
    if op in ("add", "sum"):
        for c in e.args:
            _accum_hess(c, lay, x, w, h)
        return
    if op == "neg":
        _accum_hess(e.args[0], lay, x, -w, h)
        return
    if op == "scale":
        _accum_hess(e.args[1], lay, x, w * _scale_value(e), h)
        return
    if op == "quad":
        name = e.args[1]
        off, size = lay.slot(name)
        h[off:off + size, off:off + size] += w * sym_matrix(e)
        return
    if op == "norm2":
        a, b, name = e.args
        off, size = lay.slot(name)
        r = a @ x[off:off + size] + b
        nrm = float(np.linalg.norm(r))
        if nrm == 0.0:
            raise NondifferentiableError("euclidean norm is not differentiable at zero residual")
        block = (a.T @ a) / nrm - np.outer(a.T @ r, a.T @ r) / nrm ** 3
        h[off:off + size, off:off + size] += w * block
        return
    if op == "exp":
        v = _eval(e.args[0], lay, x)
        ev = math.exp(v)
        g = _grad_vector(e.args[0], lay, x)
        h += w * ev * np.outer(g, g)
        _accum_hess(e.args[0], lay, x, w * ev, h)
        return
    if op == "log":
        v = _eval(e.args[0], lay, x)
        if v <= 0.0:
            raise EvalDomainError(f"log of nonpositive value {v}")
        g = _grad_vector(e.args[0], lay, x)
        h += -w * np.outer(g, g) / v ** 2
        _accum_hess(e.args[0], lay, x, w / v, h)
        return
    if op == "pow":
        p = e.args[1]
        if p == 0.0:
            return
        v = _eval(e.args[0], lay, x)
        g = _grad_vector(e.args[0], lay, x)
        if p != 1.0:
            if v == 0.0 and p < 2.0:
                raise NondifferentiableError(f"power {p} has unbounded curvature at zero")
            if v < 0.0 and (p - 2.0) != round(p - 2.0):
                raise EvalDomainError(f"fractional power of negative base {v}")
            h += w * p * (p - 1.0) * v ** (p - 2.0) * np.outer(g, g)
        coeff = w * p * (v ** (p - 1.0) if p != 1.0 else 1.0)
        _accum_hess(e.args[0], lay, x, coeff, h)
        return
    if op == "monomial":
        c, a, name = e.args
        off, size = lay.slot(name)
        v = x[off:off + size]
        if np.any(v <= 0.0):
            raise EvalDomainError("monomial evaluated off the positive orthant")
        val = c * np.prod(v ** a)
        ratio = a / v
        block = val * (np.outer(ratio, ratio) - np.diag(a / v ** 2))
        h[off:off + size, off:off + size] += w * block
        return
    raise ValueError(f"unknown op '{e.op}'")


# ---------------------------------------------------------------------------
# sign analysis (feeds the power/scale curvature rules)

_SIGN_NEG = {"pos": "neg", "neg": "pos", "nonneg": "nonpos", "nonpos": "nonneg",
             "zero": "zero", "unknown": "unknown"}


def _sign_add(a: str, b: str) -> str:
    if a == "zero":
        return b
    if b == "zero":
        return a
    nonneg = {"pos", "nonneg"}
    nonpos = {"neg", "nonpos"}
    if a in nonneg and b in nonneg:
        return "pos" if "pos" in (a, b) else "nonneg"
    if a in nonpos and b in nonpos:
        return "neg" if "neg" in (a, b) else "nonpos"
    return "unknown"


def _sign(e: Expr, positive: frozenset, nonneg: frozenset) -> str:
    op = e.op
    if op == "const":
        v = e.args[0]
        if isinstance(v, str):
            return "unknown"
        if v > 0:
            return "pos"
        if v < 0:
            return "neg"
        return "zero"
    if op == "var":
        name = e.args[0]
        if name in positive:
            return "pos"
        if name in nonneg:
            return "nonneg"
        return "unknown"
    if op in ("add", "sum"):
        s = "zero"
        for c in e.args:
            s = _sign_add(s, _sign(c, positive, nonneg))
        return s
    if op == "neg":
        return _SIGN_NEG[_sign(e.args[0], positive, nonneg)]
    if op == "scale":
        f = e.args[0]
        if isinstance(f, str):
            return "unknown"
        if f == 0:
            return "zero"
        s = _sign(e.args[1], positive, nonneg)
        return s if f > 0 else _SIGN_NEG[s]
    if op == "dot":
        c, name = e.args
        base = "pos" if name in positive else ("nonneg" if name in nonneg else "unknown")
        if base in ("pos", "nonneg"):
            if np.all(c >= 0):
                return "nonneg"
            if np.all(c <= 0):
                return "nonpos"
        return "unknown"
    if op == "norm2":
        return "nonneg"
    if op == "exp":
        return "pos"
    if op == "monomial":
        return "pos"
    if op == "pow":
        p = e.args[1]
        s = _sign(e.args[0], positive, nonneg)
        if p == 0.0:
            return "pos"
        if s in ("pos", "nonneg"):
            return s
        if p == round(p) and p % 2 == 0:
            return "nonneg"
        return "unknown"
    if op == "quad":
        return "unknown"
    if op == "log":
        return "unknown"
    raise ValueError(f"unknown op '{e.op}'")


# ---------------------------------------------------------------------------
# curvature analysis: syntactic, sound but incomplete

@dataclass(frozen=True)
class CurvatureVerdict:
    kind: str
    trace: tuple[str, ...]

    @property
    def is_convex(self) -> bool:
        return self.kind in ("constant", "affine", "convex")

    @property
    def is_concave(self) -> bool:
        return self.kind in ("constant", "affine", "concave")


def _combine_kinds(kinds: Iterable[str]) -> str:
    kinds = list(kinds)
    if all(k == "constant" for k in kinds):
        return "constant"
    if all(k in ("constant", "affine") for k in kinds):
        return "affine"
    if all(k in ("constant", "affine", "convex") for k in kinds):
        return "convex"
    if all(k in ("constant", "affine", "concave") for k in kinds):
        return "concave"
    return "unknown"


_FLIP = {"constant": "constant", "affine": "affine", "convex": "concave",
         "concave": "convex", "unknown": "unknown"}


def curvature(e: Expr, *, positive_vars: Iterable[str] = (),
              nonneg_vars: Iterable[str] = ()) -> CurvatureVerdict:
    """Classify an expression as constant, affine, convex, concave or unknown.

    The rules are one-directional: a verdict other than "unknown" is a
    guarantee, "unknown" is an admission.  Domain declarations can be passed
    in to sharpen the power rules.
    """
    positive = frozenset(positive_vars)
    nn = frozenset(nonneg_vars)
    trace: list[str] = []
    kind = _curv(e, positive, nn, trace)
    return CurvatureVerdict(kind, tuple(trace))


def _curv(e: Expr, positive: frozenset, nonneg: frozenset, trace: list[str]) -> str:
    op = e.op

    if op == "const":
        trace.append("const:constant")
        return "constant"
    if op == "var":
        trace.append("var:affine")
        return "affine"
    if op in ("add", "sum"):
        kind = _combine_kinds(_curv(c, positive, nonneg, trace) for c in e.args)
        trace.append(f"{op}:{kind}")
        return kind
    if op == "neg":
        kind = _FLIP[_curv(e.args[0], positive, nonneg, trace)]
        trace.append(f"neg:{kind}")
        return kind
    if op == "scale":
        f = e.args[0]
        inner = _curv(e.args[1], positive, nonneg, trace)
        if isinstance(f, str):
            kind = inner if inner in ("constant", "affine") else "unknown"
            trace.append(f"scale[param]:{kind}")
            return kind
        if f == 0.0:
            kind = "constant"
        elif f > 0.0:
            kind = inner
        else:
            kind = _FLIP[inner]
        trace.append(f"scale:{kind}")
        return kind
    if op == "dot":
        trace.append("dot:affine")
        return "affine"
    if op == "quad":
        from .psd import psd_check  # local import keeps the module graph acyclic
        q = sym_matrix(e)
        if not q.size or not np.any(q):
            trace.append("quad:zero:constant")
            return "constant"
        if psd_check(q).is_psd:
            trace.append("quad:psd:convex")
            return "convex"
        if psd_check(-q).is_psd:
            trace.append("quad:nsd:concave")
            return "concave"
        trace.append("quad:indefinite:unknown")
        return "unknown"
    if op == "norm2":
        if not np.any(e.args[0]):
            trace.append("norm2:zero-matrix:constant")
            return "constant"
        trace.append("norm2:convex")
        return "convex"
    if op == "exp":
        inner = _curv(e.args[0], positive, nonneg, trace)
        if inner == "constant":
            kind = "constant"
        elif inner in ("affine", "convex"):
            kind = "convex"  # increasing convex outer
        else:
            kind = "unknown"
        trace.append(f"exp:{kind}")
        return kind
    if op == "log":
        inner = _curv(e.args[0], positive, nonneg, trace)
        if inner == "constant":
            kind = "constant"
        elif inner in ("affine", "concave"):
            kind = "concave"  # increasing concave outer
        else:
            kind = "unknown"
        trace.append(f"log:{kind}")
        return kind
    if op == "pow":
        return _curv_pow(e, positive, nonneg, trace)
    if op == "monomial":
        return _curv_monomial(e, trace)
    raise ValueError(f"unknown op '{e.op}'")


def _curv_pow(e: Expr, positive: frozenset, nonneg: frozenset, trace: list[str]) -> str:
    base, p = e.args
    inner = _curv(base, positive, nonneg, trace)
    if p == 0.0:
        trace.append("pow:0:constant")
        return "constant"
    if p == 1.0:
        trace.append(f"pow:1:{inner}")
        return inner
    if inner == "constant":
        trace.append("pow:const-base:constant")
        return "constant"
    if inner == "affine" and p == round(p) and p >= 2 and p % 2 == 0:
        trace.append("pow:even-of-affine:convex")
        return "convex"
    s = _sign(base, positive, nonneg)
    if s in ("pos", "nonneg"):
        if inner == "affine":
            if p >= 1.0 or p < 0.0:
                trace.append("pow:nonneg-affine:convex")
                return "convex"
            trace.append("pow:nonneg-affine-fractional:concave")
            return "concave"
        if inner == "convex" and p >= 1.0:
            trace.append("pow:nonneg-convex:convex")
            return "convex"
        if inner == "concave" and 0.0 < p < 1.0:
            trace.append("pow:nonneg-concave-fractional:concave")
            return "concave"
        if inner == "concave" and p < 0.0 and s == "pos":
            trace.append("pow:pos-concave-negexp:convex")
            return "convex"
    trace.append("pow:unknown")
    return "unknown"


def _curv_monomial(e: Expr, trace: list[str]) -> str:
    _, a, _ = e.args
    nz = a[a != 0.0]
    if nz.size == 0:
        trace.append("monomial:constant")
        return "constant"
    if nz.size == 1:
        p = float(nz[0])
        if p == 1.0:
            trace.append("monomial:single-linear:affine")
            return "affine"
        if p >= 1.0 or p <= 0.0:
            trace.append("monomial:single-power:convex")
            return "convex"
        trace.append("monomial:single-fractional:concave")
        return "concave"
    if np.all(a <= 0.0):
        # exp of a convex function of the logs; convex on the positive orthant
        trace.append("monomial:all-nonpositive-exponents:convex")
        return "convex"
    trace.append("monomial:mixed:unknown")
    return "unknown"


# ---------------------------------------------------------------------------
# structure analysis: canonical-form extraction

@dataclass(frozen=True)
class StructureVerdict:
    is_affine: bool
    is_quadratic: bool
    is_monomial: bool
    is_posynomial: bool
    affine: tuple[np.ndarray, float] | None
    quadratic: tuple[np.ndarray, np.ndarray, float] | None
    monomial: tuple[float, np.ndarray] | None
    posynomial: tuple[np.ndarray, np.ndarray] | None


def analyze_structure(e: Expr, layout: Layout) -> StructureVerdict:
    """Detect affine / quadratic / monomial / posynomial shape over the layout.

    Payloads come back in canonical form: (a, b) with a.x + b, (P, q, r)
    with 0.5 x'Px + q.x + r, (c, a) with c * prod x^a, and (C, A) rows of
    posynomial terms.  Detection is algebraic; a miss returns None flags,
    never a wrong payload.
    """
    aff = _extract_affine(e, layout)
    qd = _extract_quadratic(e, layout)
    mono = _extract_monomial(e, layout)
    posy = _extract_posynomial(e, layout)
    return StructureVerdict(
        is_affine=aff is not None,
        is_quadratic=qd is not None,
        is_monomial=mono is not None,
        is_posynomial=posy is not None,
        affine=aff,
        quadratic=qd,
        monomial=mono,
        posynomial=posy,
    )


def _extract_affine(e: Expr, lay: Layout) -> tuple[np.ndarray, float] | None:
    n = lay.total
    op = e.op
    if op == "const":
        v = e.args[0]
        if isinstance(v, str):
            return None
        return np.zeros(n), float(v)
    if op == "var":
        try:
            i = _require_scalar_slot(lay, e)
        except UnboundVariableError:
            return None
        a = np.zeros(n)
        a[i] = 1.0
        return a, 0.0
    if op in ("add", "sum"):
        a = np.zeros(n); b = 0.0
        for c in e.args:
            sub = _extract_affine(c, lay)
            if sub is None:
                return None
            a += sub[0]; b += sub[1]
        return a, b
    if op == "neg":
        sub = _extract_affine(e.args[0], lay)
        return None if sub is None else (-sub[0], -sub[1])
    if op == "scale":
        f = e.args[0]
        if isinstance(f, str):
            return None
        sub = _extract_affine(e.args[1], lay)
        return None if sub is None else (f * sub[0], f * sub[1])
    if op == "dot":
        c, name = e.args
        try:
            off, size = lay.slot(name)
        except UnboundVariableError:
            return None
        if size != c.size:
            return None
        a = np.zeros(n)
        a[off:off + size] = c
        return a, 0.0
    if op == "quad":
        q = sym_matrix(e)
        if not np.any(q):
            return np.zeros(n), 0.0
        return None
    if op == "norm2":
        a_m, b_v, _ = e.args
        if not np.any(a_m):
            return np.zeros(n), float(np.linalg.norm(b_v))
        return None
    if op == "pow":
        p = e.args[1]
        sub = _extract_affine(e.args[0], lay)
        if p == 1.0:
            return sub
        if p == 0.0:
            return np.zeros(n), 1.0
        if sub is not None and not np.any(sub[0]):
            base = sub[1]
            if base < 0 and p != round(p):
                return None
            if base == 0 and p < 0:
                return None
            return np.zeros(n), float(base ** p)
        return None
    if op in ("exp", "log"):
        sub = _extract_affine(e.args[0], lay)
        if sub is not None and not np.any(sub[0]):
            v = sub[1]
            if op == "log":
                if v <= 0:
                    return None
                return np.zeros(n), math.log(v)
            return np.zeros(n), math.exp(v)
        return None
    if op == "monomial":
        c, a_exp, name = e.args
        if not np.any(a_exp):
            return np.zeros(n), float(c)
        nzi = np.flatnonzero(a_exp)
        if nzi.size == 1 and a_exp[nzi[0]] == 1.0:
            try:
                off, size = lay.slot(name)
            except UnboundVariableError:
                return None
            if size != a_exp.size:
                return None
            a = np.zeros(n)
            a[off + nzi[0]] = c
            return a, 0.0
        return None
    return None


def _extract_quadratic(e: Expr, lay: Layout) -> tuple[np.ndarray, np.ndarray, float] | None:
    n = lay.total
    aff = _extract_affine(e, lay)
    if aff is not None:
        return np.zeros((n, n)), aff[0], aff[1]
    op = e.op
    if op in ("add", "sum"):
        p = np.zeros((n, n)); q = np.zeros(n); r = 0.0
        for c in e.args:
            sub = _extract_quadratic(c, lay)
            if sub is None:
                return None
            p += sub[0]; q += sub[1]; r += sub[2]
        return p, q, r
    if op == "neg":
        sub = _extract_quadratic(e.args[0], lay)
        return None if sub is None else (-sub[0], -sub[1], -sub[2])
    if op == "scale":
        f = e.args[0]
        if isinstance(f, str):
            return None
        sub = _extract_quadratic(e.args[1], lay)
        return None if sub is None else (f * sub[0], f * sub[1], f * sub[2])
    if op == "quad":
        name = e.args[1]
        try:
            off, size = lay.slot(name)
        except UnboundVariableError:
            return None
        qm = sym_matrix(e)
        if qm.shape[0] != size:
            return None
        p = np.zeros((n, n))
        p[off:off + size, off:off + size] = qm
        return p, np.zeros(n), 0.0
    if op == "pow" and e.args[1] == 2.0:
        base = e.args[0]
        sub = _extract_affine(base, lay)
        if sub is not None:
            a, b = sub
            return 2.0 * np.outer(a, a), 2.0 * b * a, b * b
        if base.op == "norm2":
            a_m, b_v, name = base.args
            try:
                off, size = lay.slot(name)
            except UnboundVariableError:
                return None
            if a_m.shape[1] != size:
                return None
            p = np.zeros((n, n))
            p[off:off + size, off:off + size] = 2.0 * (a_m.T @ a_m)
            q = np.zeros(n)
            q[off:off + size] = 2.0 * (a_m.T @ b_v)
            return p, q, float(b_v @ b_v)
        return None
    if op == "monomial":
        c, a_exp, name = e.args
        nzi = np.flatnonzero(a_exp)
        if nzi.size == 1 and a_exp[nzi[0]] == 2.0:
            try:
                off, size = lay.slot(name)
            except UnboundVariableError:
                return None
            if size != a_exp.size:
                return None
            p = np.zeros((n, n))
            p[off + nzi[0], off + nzi[0]] = 2.0 * c
            return p, np.zeros(n), 0.0
        return None
    return None


def _extract_monomial(e: Expr, lay: Layout) -> tuple[float, np.ndarray] | None:
    n = lay.total
    op = e.op
    if op == "const":
        v = e.args[0]
        if isinstance(v, str) or v <= 0:
            return None
        return float(v), np.zeros(n)
    if op == "var":
        try:
            i = _require_scalar_slot(lay, e)
        except UnboundVariableError:
            return None
        a = np.zeros(n)
        a[i] = 1.0
        return 1.0, a
    if op == "monomial":
        c, a_exp, name = e.args
        if c <= 0:
            return None
        try:
            off, size = lay.slot(name)
        except UnboundVariableError:
            return None
        if size != a_exp.size:
            return None
        a = np.zeros(n)
        a[off:off + size] = a_exp
        return float(c), a
    if op == "scale":
        f = e.args[0]
        if isinstance(f, str):
            return None
        sub = _extract_monomial(e.args[1], lay)
        if sub is None or f * sub[0] <= 0:
            return None
        return f * sub[0], sub[1]
    if op == "pow":
        sub = _extract_monomial(e.args[0], lay)
        if sub is None:
            return None
        p = e.args[1]
        return float(sub[0] ** p), p * sub[1]
    if op == "dot":
        aff = _extract_affine(e, lay)
        if aff is None:
            return None
        a, b = aff
        nzi = np.flatnonzero(a)
        if b == 0.0 and nzi.size == 1 and a[nzi[0]] > 0:
            exps = np.zeros(n)
            exps[nzi[0]] = 1.0
            return float(a[nzi[0]]), exps
        return None
    return None


def _extract_posynomial(e: Expr, lay: Layout) -> tuple[np.ndarray, np.ndarray] | None:
    terms = _posy_terms(e, lay)
    if terms is None or not terms:
        return None
    cs = np.array([t[0] for t in terms])
    exps = np.vstack([t[1] for t in terms])
    return cs, exps


def _posy_terms(e: Expr, lay: Layout) -> list[tuple[float, np.ndarray]] | None:
    mono = _extract_monomial(e, lay)
    if mono is not None:
        return [mono]
    op = e.op
    if op == "const":
        v = e.args[0]
        if isinstance(v, str):
            return None
        if v == 0.0:
            return []  # additive identity: drops out of the sum
        return None  # negative constants are handled by the monomial path
    if op in ("add", "sum"):
        out: list[tuple[float, np.ndarray]] = []
        for c in e.args:
            sub = _posy_terms(c, lay)
            if sub is None:
                return None
            out.extend(sub)
        return out
    if op == "scale":
        f = e.args[0]
        if isinstance(f, str) or f <= 0:
            return None
        sub = _posy_terms(e.args[1], lay)
        if sub is None:
            return None
        return [(f * c, a) for c, a in sub]
    if op == "dot":
        c_vec, name = e.args
        try:
            off, size = lay.slot(name)
        except UnboundVariableError:
            return None
        if size != c_vec.size:
            return None
        out = []
        for j, cj in enumerate(c_vec):
            if cj < 0:
                return None
            if cj == 0:
                continue
            a = np.zeros(lay.total)
            a[off + j] = 1.0
            out.append((float(cj), a))
        return out
    return None
