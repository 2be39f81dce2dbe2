"""Structured desired-inertia inverse and the quantities derived from it.

M_d^{-1} is zero except on its diagonal and on row/column k.  The diagonal
carries constants a_1..a_{n-1} (skipping position k), row k carries
constants b_1..b_{n-1} and the single state-dependent entry a(q) sits at
(k, k).  With this layout det M_d^{-1} is affine in a(q), and row k of
adj(M_d^{-1}) does not involve a(q) at all.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .model import SystemModel, derived_kinetics
from .numerics import adjugate, cofactor_det, fd_gradient, leading_minors, is_positive_definite

POSITIVE_MARGIN = 1e-9


@dataclass(frozen=True)
class StructuredMdInv:
    n: int
    k: int
    diag: tuple
    offdiag: tuple
    a_fun: Callable[[np.ndarray], float]
    a_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "diag", tuple(float(x) for x in self.diag))
        object.__setattr__(self, "offdiag", tuple(float(x) for x in self.offdiag))
        if len(self.diag) != self.n - 1 or len(self.offdiag) != self.n - 1:
            raise ValueError(f"need {self.n - 1} diagonal and off-diagonal constants")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"k={self.k} out of range 1..{self.n}")

    @property
    def others(self) -> list[int]:
        """0-based coordinates other than k, in the order a_i / b_i are indexed."""
        return [j for j in range(self.n) if j != self.k - 1]

    def a(self, q) -> float:
        return float(self.a_fun(np.asarray(q, dtype=float)))

    def grad_a(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.a_grad is not None:
            return np.asarray(self.a_grad(q), dtype=float)
        return fd_gradient(self.a_fun, q)

    def with_a(self, a_fun, a_grad=None) -> "StructuredMdInv":
        return dataclasses.replace(self, a_fun=a_fun, a_grad=a_grad)

    def matrix(self, a_value: float) -> np.ndarray:
        k = self.k - 1
        A = np.zeros((self.n, self.n))
        for ai, bi, j in zip(self.diag, self.offdiag, self.others):
            A[j, j] = ai
            A[k, j] = A[j, k] = bi
        A[k, k] = a_value
        return A

    def realize(self, q) -> np.ndarray:
        return self.matrix(self.a(q))

    @cached_property
    def phi1(self) -> float:
        return float(np.prod(self.diag))

    @cached_property
    def phi2(self) -> float:
        # det at a = 0, expanded along row k
        A = self.matrix(0.0)
        k = self.k - 1
        total = 0.0
        for j in self.others:
            sub = np.delete(np.delete(A, k, axis=0), j, axis=1)
            total += (-1) ** (k + j) * A[k, j] * cofactor_det(sub)
        return total

    def det(self, q) -> float:
        return self.phi1 * self.a(q) + self.phi2

    @cached_property
    def _adj_row_k(self) -> np.ndarray:
        return adjugate(self.matrix(0.0))[self.k - 1]

    def adj_row_k(self) -> np.ndarray:
        """Row k of adj(M_d^{-1}); constant because it never touches a(q)."""
        return self._adj_row_k.copy()

    def dMdinv(self, q) -> np.ndarray:
        """(n, n, n) stack of dM_d^{-1}/dq^(i): only the (k, k) entry is non-zero."""
        k = self.k - 1
        out = np.zeros((self.n, self.n, self.n))
        out[:, k, k] = self.grad_a(q)
        return out


def realize(md: StructuredMdInv, q) -> np.ndarray:
    return md.realize(q)


@dataclass(frozen=True)
class GammaData:
    gamma: Callable[[np.ndarray], np.ndarray]
    phi1: float
    phi2: float


def gamma_and_phis(md: StructuredMdInv, sys: SystemModel) -> GammaData:
    """gamma(q) = e_k^T adj(M_d^{-1}) adj(M(q)) together with det M_d^{-1} = phi1 a + phi2.

    Then G_perp M_d M^{-1} = gamma / (det M det M_d^{-1}).
    """
    if sys.kidx != md.k - 1:
        raise ValueError(f"model k={sys.k} does not match M_d^-1 k={md.k}")
    row = md.adj_row_k()

    def gamma(q):
        return row @ derived_kinetics(sys, q).adjM

    return GammaData(gamma, md.phi1, md.phi2)


MdInvLike = Union[StructuredMdInv, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def md_inv_function(md: MdInvLike) -> Callable[[np.ndarray], np.ndarray]:
    """Normalize the accepted M_d^{-1} representations to a callable q -> matrix."""
    if isinstance(md, StructuredMdInv):
        return md.realize
    if callable(md):
        return md
    const = np.array(md, dtype=float)
    return lambda q: const


def necessary_condition(md: MdInvLike, sys: SystemModel, q_star) -> float:
    """The scalar G_perp M_d M^{-1} d(G_perp grad V)/dq evaluated at q_star.

    A positive-definite Hessian of V_d at q_star forces this to be positive,
    so a non-positive value rules the chosen M_d out.
    """
    q_star = np.asarray(q_star, dtype=float)
    Md = np.linalg.inv(md_inv_function(md)(q_star))
    row = sys.Gperp(q_star) @ Md @ sys.Minv(q_star)
    jac = sys.unactuated_force_jacobian(q_star)
    return float((row @ jac.T).item())


def passes_necessary_condition(value: float) -> bool:
    return value > POSITIVE_MARGIN


@dataclass
class PDReport:
    min_margin: float
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def positive_definite_on_grid(md: MdInvLike, grid: Sequence, tol: float = 1e-10) -> PDReport:
    """Smallest leading principal minor over ``grid``; points failing Cholesky are listed."""
    fn = md_inv_function(md)
    margin = np.inf
    bad = []
    for q in grid:
        A = fn(np.asarray(q, dtype=float))
        lm = leading_minors(A).min()
        margin = min(margin, lm)
        if not is_positive_definite(A, tol):
            bad.append(np.asarray(q, dtype=float))
    return PDReport(float(margin), bad)
