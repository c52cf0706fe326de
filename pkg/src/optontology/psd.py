"""Positive-semidefiniteness checking via cyclic Jacobi rotations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLERANCES
from .errors import NumericalError

_MAX_SWEEPS = 100


def jacobi_eigenvalues(matrix) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending.

    Cyclic Jacobi: sweep all off-diagonal pairs, rotating each to zero,
    until the off-diagonal Frobenius norm drops below the configured target.
    Quadratic convergence makes the sweep cap a formality at this scale.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericalError(f"eigenvalues need a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    n = a.shape[0]
    if n == 0:
        return np.array([])
    asym = np.max(np.abs(a - a.T)) if n > 1 else 0.0
    if asym > 1e-9 * (1.0 + np.max(np.abs(a))):
        raise NumericalError(f"matrix is not symmetric (asymmetry {asym:.3g})")
    a = 0.5 * (a + a.T)
    if n == 1:
        return a[0].copy()

    target = DEFAULT_TOLERANCES.jacobi_off * (1.0 + np.linalg.norm(a))
    for _ in range(_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                # smaller-angle root of t^2 + 2 t theta - 1 = 0
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) \
                    if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = 0.5 * (a + a.T)  # keep rounding from drifting off symmetric
    else:
        raise NumericalError("jacobi iteration did not converge")
    return np.sort(np.diag(a))


@dataclass(frozen=True)
class PsdVerdict:
    is_psd: bool
    min_eigenvalue: float
    eigenvalues: tuple[float, ...]


def psd_check(matrix, tol: float | None = None) -> PsdVerdict:
    """Is the symmetric matrix positive semidefinite, to a scale-aware slack?

    Default slack: min eig >= -psd_scale * (1 + max|M|).
    """
    m = np.asarray(matrix, dtype=float)
    eigs = jacobi_eigenvalues(m)
    if eigs.size == 0:
        return PsdVerdict(True, 0.0, ())
    if tol is None:
        tol = DEFAULT_TOLERANCES.psd_scale * (1.0 + float(np.max(np.abs(m))))
    low = float(eigs[0])
    return PsdVerdict(low >= -tol, low, tuple(float(v) for v in eigs))


def trace_inner_product(a, b) -> float:
    """Frobenius pairing sum_ij A_ij B_ij of two same-shape matrices."""
    am = np.asarray(a, dtype=float)
    bm = np.asarray(b, dtype=float)
    if am.shape != bm.shape:
        raise NumericalError(f"shape mismatch {am.shape} vs {bm.shape}")
    return float(np.sum(am * bm))
