"""Small numerical kernels: cofactors, finite differences, quadrature, RK4."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

FD_STEP = 1e-6


def minor(A: np.ndarray, i: int, j: int) -> np.ndarray:
    return np.delete(np.delete(A, i, axis=0), j, axis=1)


def cofactor_det(A: np.ndarray) -> float:
    """Determinant by Laplace expansion along the first row.

    Intended for n <= 4; no pivoting or factorization reorders the arithmetic.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    if n == 2:
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    if n == 3:
        return float(A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                     - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                     + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    return float(sum((-1) ** j * A[0, j] * cofactor_det(minor(A, 0, j)) for j in range(n)))


def adjugate(A: np.ndarray) -> np.ndarray:
    """Transpose of the cofactor matrix, so that adj(A) @ A = det(A) I."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]])
    if n == 3:
        (a, b, c), (d, e, f), (g, h, i) = A
        return np.array([[e * i - f * h, c * h - b * i, b * f - c * e],
                         [f * g - d * i, a * i - c * g, c * d - a * f],
                         [d * h - e * g, b * g - a * h, a * e - b * d]])
    C = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            C[i, j] = (-1) ** (i + j) * cofactor_det(minor(A, i, j))
    return C.T


def is_positive_definite(A: np.ndarray, tol: float = 1e-10) -> bool:
    """Cholesky-style test: every pivot must exceed ``tol``."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        piv = A[j, j] - L[j, :j] @ L[j, :j]
        if not piv > tol:
            return False
        L[j, j] = np.sqrt(piv)
        for i in range(j + 1, n):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return True


def leading_minors(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.array([cofactor_det(A[:i, :i]) for i in range(1, A.shape[0] + 1)])


def central_diff(f: Callable, x: np.ndarray, i: int, h: float = FD_STEP):
    """Central difference of ``f`` (scalar- or array-valued) along coordinate ``i``."""
    x = np.asarray(x, dtype=float)
    e = np.zeros_like(x)
    e[i] = h
    return (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h)


def fd_gradient(f: Callable, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.array([central_diff(f, x, i, h) for i in range(x.size)])


def fd_jacobian(f: Callable, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Jacobian with rows indexed by the outputs of ``f``."""
    x = np.asarray(x, dtype=float)
    cols = [np.atleast_1d(central_diff(f, x, i, h)) for i in range(x.size)]
    return np.stack(cols, axis=-1)


def fd_hessian(f: Callable, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Symmetric central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h**2)
    return H


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 50) -> float:
    """Integrate ``f`` over [a, b] by recursive Simpson with Richardson correction."""
    if a == b:
        return 0.0

    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(lo, hi, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        return (recurse(lo, mid, fa, flm, fm, left, eps / 2.0, depth - 1)
                + recurse(mid, hi, fm, frm, fb, right, eps / 2.0, depth - 1))

    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def worker_count() -> int:
    """Worker cap from ``IDA_SHAPER_THREADS`` (default 1, i.e. serial)."""
    try:
        return max(1, int(os.environ.get("IDA_SHAPER_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map, threaded when more than one worker is allowed."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def max_abs(values: Iterable) -> float:
    out = 0.0
    for v in values:
        out = max(out, float(np.max(np.abs(v))) if np.size(v) else 0.0)
    return out
