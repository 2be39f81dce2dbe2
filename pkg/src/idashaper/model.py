"""Simple mechanical systems in port-controlled Hamiltonian form.

A system is described by its inertia matrix M(q), potential V(q), input map
G(q) and a left annihilator G_perp(q).  Only one degree of underactuation
(n - m = 1) is supported.  Coordinates and the unactuated index ``k`` are
1-based in the public API, matching how the case studies are written down;
internally everything is 0-based numpy indexing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import MissingIndexError, ModelError, SingularMassError
from .numerics import adjugate, central_diff, cofactor_det, fd_gradient, fd_hessian, fd_jacobian, FD_STEP

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class State:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        p = np.asarray(self.p, dtype=float).ravel()
        if q.shape != p.shape:
            raise ValueError(f"q and p sizes differ: {q.size} vs {p.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "State":
        n = x.size // 2
        return cls(x[:n], x[n:])


@dataclass(frozen=True)
class SystemModel:
    """Immutable description of a mechanical system with one unactuated direction.

    ``mass_matrix_grad(q)`` returns an (n, n, n) array whose i-th slice is
    dM/dq^(i); ``annihilator_grad(q)`` likewise returns dG_perp/dq^(i)
    stacked on the first axis.  Missing derivative callbacks fall back to
    central differences.
    """

    name: str
    n: int
    m: int
    mass_matrix: ArrayFn
    potential: Callable[[np.ndarray], float]
    input_map: ArrayFn
    k: Optional[int] = None
    annihilator: Optional[ArrayFn] = None
    mass_matrix_grad: Optional[ArrayFn] = None
    potential_grad: Optional[ArrayFn] = None
    potential_hessian: Optional[ArrayFn] = None
    annihilator_grad: Optional[ArrayFn] = None
    params: dict = field(default_factory=dict, compare=False)
    constant_mass: bool = False

    def __post_init__(self):
        if self.n - self.m != 1:
            raise ModelError(f"need exactly one degree of underactuation, got n={self.n}, m={self.m}")
        if self.k is None and self.annihilator is None:
            raise ModelError("either k or an annihilator callback is required")
        if self.k is not None and not 1 <= self.k <= self.n:
            raise ModelError(f"k={self.k} out of range 1..{self.n}")

    @property
    def s(self) -> int:
        return self.n - self.m

    @property
    def has_k(self) -> bool:
        return self.k is not None

    @property
    def kidx(self) -> int:
        """0-based index of the unactuated coordinate."""
        if self.k is None:
            raise MissingIndexError(f"{self.name}: operation requires a k-type annihilator")
        return self.k - 1

    def M(self, q) -> np.ndarray:
        return np.asarray(self.mass_matrix(np.asarray(q, dtype=float)), dtype=float)

    def detM(self, q, M=None) -> float:
        if M is None:
            M = self.M(q)
        d = cofactor_det(M)
        scale = (np.trace(M) / self.n) ** self.n
        if not abs(d) >= 1e-12 * abs(scale) or scale <= 0:
            raise SingularMassError(f"{self.name}: det M = {d:.3e} is singular at q={q}")
        return d

    def Minv(self, q) -> np.ndarray:
        if self.constant_mass:
            return self._const_minv
        M = self.M(q)
        return adjugate(M) / self.detM(q, M)

    @property
    def _const_minv(self) -> np.ndarray:
        cache = self.__dict__.get("_minv_cache")
        if cache is None:
            M = self.M(np.zeros(self.n))
            cache = adjugate(M) / self.detM(np.zeros(self.n), M)
            object.__setattr__(self, "_minv_cache", cache)
        return cache

    def V(self, q) -> float:
        return float(self.potential(np.asarray(q, dtype=float)))

    def grad_V(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.potential_grad is not None:
            return np.asarray(self.potential_grad(q), dtype=float)
        return fd_gradient(self.potential, q)

    def G(self, q) -> np.ndarray:
        return np.asarray(self.input_map(np.asarray(q, dtype=float)), dtype=float).reshape(self.n, self.m)

    def Gperp(self, q) -> np.ndarray:
        if self.k is not None:
            out = np.zeros((1, self.n))
            out[0, self.k - 1] = 1.0
            return out
        return np.asarray(self.annihilator(np.asarray(q, dtype=float)), dtype=float).reshape(self.s, self.n)

    def dM(self, q) -> np.ndarray:
        """(n, n, n) stack of dM/dq^(i)."""
        q = np.asarray(q, dtype=float)
        if self.mass_matrix_grad is not None:
            return np.asarray(self.mass_matrix_grad(q), dtype=float)
        return np.array([central_diff(self.M, q, i) for i in range(self.n)])

    def dMinv(self, q) -> np.ndarray:
        """(n, n, n) stack of dM^{-1}/dq^(i)."""
        q = np.asarray(q, dtype=float)
        if self.constant_mass:
            return np.zeros((self.n, self.n, self.n))
        if self.mass_matrix_grad is not None:
            Mi = self.Minv(q)
            return np.array([-Mi @ dMi @ Mi for dMi in self.dM(q)])
        return np.array([central_diff(self.Minv, q, i) for i in range(self.n)])

    def grad_kinetic(self, q, p) -> np.ndarray:
        """grad_q (p^T M^{-1}(q) p), without the 1/2."""
        if self.constant_mass:
            return np.zeros(self.n)
        p = np.asarray(p, dtype=float)
        return np.einsum("j,ijk,k->i", p, self.dMinv(q), p)

    def unactuated_force_jacobian(self, q) -> np.ndarray:
        """d(G_perp grad V)/dq as an (s, n) array."""
        q = np.asarray(q, dtype=float)
        if self.potential_hessian is not None:
            H = np.asarray(self.potential_hessian(q), dtype=float)
        elif self.potential_grad is not None:
            H = fd_jacobian(self.grad_V, q)
        else:
            # differencing a differenced gradient amplifies rounding; go to V directly
            H = fd_hessian(self.potential, q)
        J = self.Gperp(q) @ H
        if self.k is None:
            gv = self.grad_V(q)
            if self.annihilator_grad is not None:
                dG = np.asarray(self.annihilator_grad(q), dtype=float)
            else:
                dG = np.array([central_diff(self.Gperp, q, i) for i in range(self.n)])
            J = J + np.stack([dG[i] @ gv for i in range(self.n)], axis=-1)
        return J

    def validate_at(self, q, tol: float = 1e-12) -> None:
        """Raise if the structural invariants fail at configuration ``q``."""
        M = self.M(q)
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ModelError(f"{self.name}: M(q) not symmetric at q={q}")
        if np.linalg.eigvalsh(M).min() <= 0:
            raise SingularMassError(f"{self.name}: M(q) not positive definite at q={q}")
        G = self.G(q)
        if np.linalg.matrix_rank(G) != self.m:
            raise ModelError(f"{self.name}: rank G(q) < m at q={q}")
        if np.abs(self.Gperp(q) @ G).max() > tol:
            raise ModelError(f"{self.name}: G_perp G != 0 at q={q}")


def hamiltonian(sys: SystemModel, s: State) -> float:
    """Total energy 1/2 p^T M^{-1} p + V."""
    return 0.5 * float(s.p @ sys.Minv(s.q) @ s.p) + sys.V(s.q)


@dataclass(frozen=True)
class DerivedKinetics:
    detM: float
    adjM: np.ndarray
    bbM: np.ndarray


def derived_kinetics(sys: SystemModel, q) -> DerivedKinetics:
    """det M, its adjugate, and the numerator matrix (det M)^2 dM^{-1}/dq^(k)."""
    k = sys.kidx
    q = np.asarray(q, dtype=float)
    M = sys.M(q)
    d = sys.detM(q, M)
    adj = adjugate(M)
    if sys.mass_matrix_grad is not None:
        Mi = adj / d
        dMinv_k = -Mi @ sys.dM(q)[k] @ Mi
    else:
        dMinv_k = central_diff(sys.Minv, q, k)
    return DerivedKinetics(d, adj, d**2 * dMinv_k)


@dataclass(frozen=True)
class AuditReport:
    grad_V_dev: float
    dMinv_dev: float

    @property
    def max_dev(self) -> float:
        return max(self.grad_V_dev, self.dMinv_dev)


def finite_diff_audit(sys: SystemModel, q, h: float = FD_STEP) -> AuditReport:
    """Compare analytic derivative callbacks against central differences."""
    q = np.asarray(q, dtype=float)
    gv_dev = 0.0
    if sys.potential_grad is not None:
        gv_dev = float(np.abs(sys.grad_V(q) - fd_gradient(sys.potential, q, h)).max())
    dm_dev = 0.0
    if sys.mass_matrix_grad is not None:
        fd = np.array([central_diff(sys.Minv, q, i, h) for i in range(sys.n)])
        dm_dev = float(np.abs(sys.dMinv(q) - fd).max())
    return AuditReport(gv_dev, dm_dev)
