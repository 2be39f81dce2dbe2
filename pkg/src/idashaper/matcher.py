"""Kinetic-energy matching: J2 parameterization, the algebraic Psi system, residuals.

Only row k of J2 enters the unactuated projection of the kinetic matching
equation.  Writing that row as p^T B(q) / det M turns the off-(k,k) entries
of the matching matrix into a linear system Psi x = rhs in the stacked
columns of B, and leaves a single scalar PDE in a(q).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InconsistentSystemError
from .mdstruct import MdInvLike, StructuredMdInv, gamma_and_phis, md_inv_function
from .model import SystemModel, derived_kinetics
from .numerics import central_diff

RANK_RTOL = 1e-10
CONSISTENCY_TOL = 1e-8


class ZeroJ2:
    """J2 = 0, the choice for constant-inertia designs."""

    def __init__(self, n: int):
        self.n = n

    def matrix(self, q, p) -> np.ndarray:
        return np.zeros((self.n, self.n))


@dataclass
class J2Param:
    """Row k of J2 carried by n-1 vectors alpha(q); column k mirrors it with a sign flip.

    ``alphas(q)`` returns an (n-1, n) array: one alpha vector per coordinate
    j != k, in increasing j.  All other J2 entries are left at zero.
    """

    n: int
    k: int
    alphas_fn: Callable[[np.ndarray], np.ndarray]
    det_fn: Callable[[np.ndarray], float]
    cache_size: int = 8

    def __post_init__(self):
        self._cache: OrderedDict = OrderedDict()

    def alphas(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        key = q.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = np.asarray(self.alphas_fn(q), dtype=float).reshape(self.n - 1, self.n)
            self._cache[key] = hit
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return hit

    def matrix(self, q, p) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        k = self.k - 1
        row = p @ build_B(self, q) / self.det_fn(q)
        J = np.zeros((self.n, self.n))
        J[k, :] = row
        J[:, k] = -row
        J[k, k] = 0.0
        return J


def build_B(j2: J2Param, q) -> np.ndarray:
    """B(q) = [alpha columns for j < k, 0_n, alpha columns for j > k]."""
    al = j2.alphas(q)
    k = j2.k - 1
    B = np.zeros((j2.n, j2.n))
    cols = [j for j in range(j2.n) if j != k]
    for vec, j in zip(al, cols):
        B[:, j] = vec
    return B


def _B_from_stack(x: np.ndarray, n: int, k: int) -> np.ndarray:
    B = np.zeros((n, n))
    cols = [j for j in range(n) if j != k]
    for vec, j in zip(x.reshape(n - 1, n), cols):
        B[:, j] = vec
    return B


def equation_entries(n: int, k: int) -> list[tuple[int, int]]:
    """Upper-triangular (i <= j) index pairs, row-major, without (k, k); 0-based k."""
    return [(i, j) for i in range(n) for j in range(i, n) if not (i == k and j == k)]


def symmetric_part_map(md: StructuredMdInv, x: np.ndarray, a_value: float = 0.0) -> np.ndarray:
    """B(x) M_d^{-1} + M_d^{-1} B(x)^T for a stacked alpha vector x."""
    B = _B_from_stack(np.asarray(x, dtype=float), md.n, md.k - 1)
    A = md.matrix(a_value)
    return B @ A + A @ B.T


def psi_matrix(md: StructuredMdInv) -> np.ndarray:
    """Probe alpha -> off-(k,k) entries of the symmetric part with unit vectors.

    The result depends only on the constants a_i, b_i.
    """
    n = md.n
    entries = equation_entries(n, md.k - 1)
    cols = []
    for e in np.eye(n * (n - 1)):
        S = symmetric_part_map(md, e)
        cols.append([S[i, j] for i, j in entries])
    return np.array(cols).T


@dataclass
class PsiSystem:
    Psi: np.ndarray
    rhs: np.ndarray
    rank: int

    @property
    def n_equations(self) -> int:
        return self.Psi.shape[0]


def _rank(P: np.ndarray) -> int:
    sv = np.linalg.svd(P, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def assemble_psi(md: StructuredMdInv, sys: SystemModel, q, Psi: Optional[np.ndarray] = None) -> PsiSystem:
    """Psi x = -(1/det M) [bbM entries off (k,k)] at configuration q."""
    if Psi is None:
        Psi = psi_matrix(md)
    dk = derived_kinetics(sys, q)
    entries = equation_entries(md.n, md.k - 1)
    rhs = -np.array([dk.bbM[i, j] for i, j in entries]) / dk.detM
    return PsiSystem(Psi, rhs, _rank(Psi))


@dataclass
class AlphaSolution:
    alphas: np.ndarray
    residual: float


def solve_alphas(psi: PsiSystem) -> AlphaSolution:
    """Minimum-norm least-squares solve of the algebraic matching equations."""
    x, *_ = np.linalg.lstsq(psi.Psi, psi.rhs, rcond=None)
    res = float(np.linalg.norm(psi.Psi @ x - psi.rhs))
    if psi.rank < psi.n_equations and res > CONSISTENCY_TOL:
        raise InconsistentSystemError(
            f"Psi has rank {psi.rank} < {psi.n_equations} and least-squares residual {res:.3e}")
    n = psi.Psi.shape[1]
    dim = int(round((1 + np.sqrt(1 + 4 * n)) / 2))
    return AlphaSolution(x.reshape(dim - 1, dim), res)


def solve_j2(md: StructuredMdInv, sys: SystemModel) -> J2Param:
    """J2 whose alpha vectors solve the algebraic equations pointwise in q."""
    Psi = psi_matrix(md)
    rank = _rank(Psi)
    # a rank-deficient Psi is still usable wherever rhs lies in its range
    pinv = np.linalg.pinv(Psi, rcond=RANK_RTOL)
    entries = equation_entries(md.n, md.k - 1)

    def alphas(q):
        dk = derived_kinetics(sys, q)
        rhs = -np.array([dk.bbM[i, j] for i, j in entries]) / dk.detM
        x = pinv @ rhs
        if rank < Psi.shape[0]:
            res = float(np.linalg.norm(Psi @ x - rhs))
            if res > CONSISTENCY_TOL:
                raise InconsistentSystemError(
                    f"Psi rank {rank} < {Psi.shape[0]}; residual {res:.3e} at q={q}")
        return x.reshape(md.n - 1, md.n)

    return J2Param(md.n, md.k, alphas, sys.detM)


def kinetic_residual_structured(md: StructuredMdInv, j2: J2Param, sys: SystemModel, q) -> np.ndarray:
    """bbM/det M - (sum_i gamma_i dM_d^{-1}/dq_i)/det M_d^{-1} + (B M_d^{-1} + M_d^{-1} B^T)."""
    q = np.asarray(q, dtype=float)
    dk = derived_kinetics(sys, q)
    gd = gamma_and_phis(md, sys)
    A = md.realize(q)
    B = build_B(j2, q)
    k = md.k - 1
    middle = np.zeros_like(A)
    middle[k, k] = gd.gamma(q) @ md.grad_a(q)
    return dk.bbM / dk.detM - middle / md.det(q) + (B @ A + A @ B.T)


def _md_inv_grad(md: MdInvLike, q, md_inv_grad=None) -> np.ndarray:
    if isinstance(md, StructuredMdInv):
        return md.dMdinv(q)
    if md_inv_grad is not None:
        return np.asarray(md_inv_grad(q), dtype=float)
    if not callable(md):
        n = np.asarray(md).shape[0]
        return np.zeros((n, n, n))
    fn = md_inv_function(md)
    return np.array([central_diff(fn, q, i) for i in range(q.size)])


def _j2_matrix(j2, q, p) -> np.ndarray:
    if hasattr(j2, "matrix"):
        return j2.matrix(q, p)
    return np.asarray(j2(q, p), dtype=float)


def kinetic_residual_general(sys: SystemModel, md: MdInvLike, j2, q, p, md_inv_grad=None) -> np.ndarray:
    """G_perp {grad_q(p^T M^-1 p) - M_d M^-1 grad_q(p^T M_d^-1 p) + 2 J2 M_d^-1 p}.

    Works with any annihilator, including state-dependent ones.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    Ainv = md_inv_function(md)(q)
    Md = np.linalg.inv(Ainv)
    dA = _md_inv_grad(md, q, md_inv_grad)
    grad_kin = sys.grad_kinetic(q, p)
    grad_kin_d = np.array([p @ D @ p for D in dA])
    J2 = _j2_matrix(j2, q, p)
    inner = grad_kin - Md @ sys.Minv(q) @ grad_kin_d + 2.0 * J2 @ Ainv @ p
    return sys.Gperp(q) @ inner


def scalar_pde_residual(md: StructuredMdInv, j2: J2Param, sys: SystemModel, q) -> float:
    """The (k,k) entry: gamma.grad a / det M_d^{-1} - bbM_kk/det M - 2 sum_i b_i alpha_i^(k)."""
    q = np.asarray(q, dtype=float)
    k = md.k - 1
    dk = derived_kinetics(sys, q)
    gd = gamma_and_phis(md, sys)
    al = j2.alphas(q)
    coupling = 2.0 * sum(b * vec[k] for b, vec in zip(md.offdiag, al))
    return float(gd.gamma(q) @ md.grad_a(q) / md.det(q) - dk.bbM[k, k] / dk.detM - coupling)


def source_term(md: StructuredMdInv, j2: J2Param, sys: SystemModel, q) -> float:
    """The a-free part of the scalar PDE: bbM_kk/det M + 2 sum_i b_i alpha_i^(k)."""
    q = np.asarray(q, dtype=float)
    k = md.k - 1
    dk = derived_kinetics(sys, q)
    al = j2.alphas(q)
    return float(dk.bbM[k, k] / dk.detM + 2.0 * sum(b * vec[k] for b, vec in zip(md.offdiag, al)))


def residual_rows(points, values) -> list[list[float]]:
    """CSV-ready rows (q..., residual_inf)."""
    return [list(np.asarray(q, dtype=float)) + [float(np.max(np.abs(v)))] for q, v in zip(points, values)]
