"""IDA-PBC control law, desired energy bundles, and potential-matching candidates."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, ModelError, SingularInputError
from .matcher import _j2_matrix, _md_inv_grad
from .mdstruct import MdInvLike, StructuredMdInv, gamma_and_phis, md_inv_function
from .model import State, SystemModel, derived_kinetics
from .numerics import adjugate, cofactor_det, fd_gradient, fd_hessian

COND_LIMIT = 1e12


@dataclass
class DesiredEnergy:
    """H_d = 1/2 p^T M_d^{-1}(q) p + V_d(q) with its target equilibrium q_star."""

    md_inv: MdInvLike
    Vd: Callable[[np.ndarray], float]
    q_star: np.ndarray
    Vd_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    md_inv_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __post_init__(self):
        self.q_star = np.asarray(self.q_star, dtype=float)
        self._md_inv_fn = md_inv_function(self.md_inv)
        self._const = None
        if not callable(self.md_inv) and not isinstance(self.md_inv, StructuredMdInv):
            A = np.array(self.md_inv, dtype=float)
            self._const = (A, np.linalg.inv(A))

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    def Md_inv(self, q) -> np.ndarray:
        if self._const is not None:
            return self._const[0]
        return self._md_inv_fn(np.asarray(q, dtype=float))

    def Md(self, q) -> np.ndarray:
        if self._const is not None:
            return self._const[1]
        return np.linalg.inv(self.Md_inv(q))

    def dMd_inv(self, q) -> np.ndarray:
        return _md_inv_grad(self.md_inv, np.asarray(q, dtype=float), self.md_inv_grad)

    def V(self, q) -> float:
        return float(self.Vd(np.asarray(q, dtype=float)))

    def grad_V(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.Vd_grad is not None:
            return np.asarray(self.Vd_grad(q), dtype=float)
        return fd_gradient(self.Vd, q)

    def H(self, q, p) -> float:
        p = np.asarray(p, dtype=float)
        return 0.5 * float(p @ self.Md_inv(q) @ p) + self.V(q)

    def grad_q_H(self, q, p) -> np.ndarray:
        if self._const is not None:
            return self.grad_V(q)
        p = np.asarray(p, dtype=float)
        kin = np.einsum("j,ijk,k->i", p, self.dMd_inv(q), p)
        return 0.5 * kin + self.grad_V(q)

    def grad_p_H(self, q, p) -> np.ndarray:
        return self.Md_inv(q) @ np.asarray(p, dtype=float)

    def minimum_report(self, h: float = 1e-4) -> dict:
        """Gradient norm and Hessian eigenvalues of V_d at q_star.

        The bundle counts as shaped when the gradient vanishes (<= 1e-9) and
        the finite-difference Hessian is positive definite; a failure marks
        it "unshaped" instead of rejecting it.
        """
        g = self.grad_V(self.q_star)
        H = fd_hessian(self.Vd, self.q_star, h)
        eig = np.linalg.eigvalsh(0.5 * (H + H.T))
        shaped = bool(np.abs(g).max() <= 1e-9 and eig.min() > 0)
        return {"grad_inf": float(np.abs(g).max()), "hessian_eigs": eig.tolist(),
                "min_eig": float(eig.min()), "shaped": shaped}


@dataclass(frozen=True)
class GainConfig:
    Kv: np.ndarray

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.Kv, dtype=float))
        object.__setattr__(self, "Kv", K)
        if K.shape[0] != K.shape[1] or not np.allclose(K, K.T):
            raise ValueError("Kv must be a symmetric square matrix")

    @property
    def is_positive(self) -> bool:
        return bool(np.linalg.eigvalsh(self.Kv).min() > 0)

    @classmethod
    def diag(cls, *entries) -> "GainConfig":
        return cls(np.diag(np.asarray(entries, dtype=float)))


def _left_inverse(G: np.ndarray) -> np.ndarray:
    """(G^T G)^{-1} G^T, refusing when G^T G is numerically singular.

    The Frobenius-norm condition number bounds the 2-norm one from above
    and is cheap for the small m used here.
    """
    GtG = G.T @ G
    d = cofactor_det(GtG)
    if d <= 0:
        raise SingularInputError("G^T G is singular")
    inv = adjugate(GtG) / d
    if np.linalg.norm(GtG) * np.linalg.norm(inv) > COND_LIMIT:
        raise SingularInputError(f"G^T G is ill-conditioned (cond > {COND_LIMIT:.0e})")
    return inv @ G.T


def control_split(sys: SystemModel, de: DesiredEnergy, j2, kv: GainConfig, s: State):
    """Return (u_es, u_di)."""
    return _control_terms(sys, de, j2, kv, s.q, s.p)


def _control_terms(sys, de, j2, kv, q, p):
    G = sys.G(q)
    Minv = sys.Minv(q)
    grad_H = 0.5 * sys.grad_kinetic(q, p) + sys.grad_V(q)
    Ainv = de.Md_inv(q)
    Md = de.Md(q)
    w = grad_H - Md @ Minv @ de.grad_q_H(q, p) + _j2_matrix(j2, q, p) @ Ainv @ p
    u_es = _left_inverse(G) @ w
    u_di = -kv.Kv @ G.T @ (Ainv @ p)
    return u_es, u_di


def control_law(sys: SystemModel, de: DesiredEnergy, j2, kv: GainConfig, s: State) -> np.ndarray:
    u_es, u_di = control_split(sys, de, j2, kv, s)
    return u_es + u_di


def potential_residual(sys: SystemModel, de: DesiredEnergy, q) -> np.ndarray:
    """G_perp (grad V - M_d M^{-1} grad V_d) at q."""
    q = np.asarray(q, dtype=float)
    return sys.Gperp(q) @ (sys.grad_V(q) - de.Md(q) @ sys.Minv(q) @ de.grad_V(q))


# --- free-function presets -------------------------------------------------

@dataclass(frozen=True)
class PhiPreset:
    """A scalar function phi with derivative, selected by name in scenario files."""

    name: str
    fn: Callable[[float], float]
    d: Callable[[float], float]


def phi_preset(name: str = "quadratic", c: float = 1.0) -> PhiPreset:
    if name == "quadratic":
        return PhiPreset(name, lambda z: c * z * z, lambda z: 2.0 * c * z)
    if name == "zero":
        return PhiPreset(name, lambda z: 0.0 * z, lambda z: 0.0 * z)
    if name == "linear":
        return PhiPreset(name, lambda z: c * z, lambda z: c + 0.0 * z)
    raise KeyError(f"unknown phi preset {name!r}")


PHI_PRESETS = ("quadratic", "zero", "linear")


# --- VTOL ------------------------------------------------------------------

@dataclass(frozen=True)
class VtolVdCoeffs:
    """V_d = z1^2 + z2^2 + c_y (y - y*) + c_l ln(eps (cos th - kappa')) + Phi(z1 - z1*, z2)

    z1 = eps (y - y*) + ln(eps (cos th - kappa'))
    z2 = (x - x*)/(kappa eps) - th - c_h artanh(c_t tan(th/2))

    z1 and z2 are invariants of the homogeneous equation, so the optional
    quadratic Phi(u, v) = w1 u^2 + w2 v^2 + w12 u v keeps V_d a solution
    and leaves the gradient at the target zero.
    """

    eps: float
    kappa: float
    kappa_p: float
    c_h: float
    c_t: float
    c_y: float
    c_l: float
    x_star: float = 0.0
    y_star: float = 0.0
    w1: float = 0.0
    w2: float = 0.0
    w12: float = 0.0

    @property
    def z1_star(self) -> float:
        return float(np.log(self.eps * (1.0 - self.kappa_p)))


def vtol_vd_exact(eps: float, g: float, kappa: float, kappa_p: float,
                  x_star: float = 0.0, y_star: float = 0.0,
                  w1: float = 0.0, w2: float = 0.0, w12: float = 0.0) -> VtolVdCoeffs:
    """Coefficients for which the form above solves the potential matching equation exactly."""
    if not 0 < kappa_p < 1:
        raise ModelError("closed-form VTOL V_d needs 0 < kappa' < 1")
    z0 = np.log(eps * (1.0 - kappa_p))
    return VtolVdCoeffs(
        eps, kappa, kappa_p,
        c_h=(kappa_p - 1.0 / kappa) * 2.0 / np.sqrt(1.0 - kappa_p**2),
        c_t=np.sqrt((1.0 + kappa_p) / (1.0 - kappa_p)),
        c_y=-2.0 * eps * z0,
        c_l=-(g + 2.0 * eps * z0) / eps,
        x_star=x_star, y_star=y_star, w1=w1, w2=w2, w12=w12)


def vtol_vd_printed(eps: float, g: float, x_star: float = 0.0, y_star: float = 0.0) -> VtolVdCoeffs:
    """The published kappa = 20, kappa' = 0.1 expression, coefficients taken verbatim."""
    l09 = np.log(0.9 * eps)
    return VtolVdCoeffs(
        eps, 20.0, 0.1, c_h=0.1, c_t=1.1055,
        c_y=-2.0 * eps * l09, c_l=-(g - 2.0 * eps * l09) / (g * eps),
        x_star=x_star, y_star=y_star)


def vtol_vd(c: VtolVdCoeffs):
    """(V_d, grad V_d) for the coefficient set ``c``."""
    eps, kap, kp = c.eps, c.kappa, c.kappa_p

    def parts(q):
        x, y, th = q
        cs = np.cos(th) - kp
        if cs <= 0:
            raise DomainError(f"VTOL V_d undefined: cos(theta) <= kappa' at theta={th}")
        tn = c.c_t * np.tan(th / 2.0)
        if abs(tn) >= 1:
            raise DomainError(f"VTOL V_d undefined: artanh argument {tn} at theta={th}")
        L = np.log(eps * cs)
        z1 = eps * (y - c.y_star) + L
        z2 = (x - c.x_star) / (kap * eps) - th - c.c_h * np.arctanh(tn)
        return cs, tn, L, z1, z2

    def V(q):
        _, _, L, z1, z2 = parts(q)
        u = z1 - c.z1_star
        extra = c.w1 * u * u + c.w2 * z2 * z2 + c.w12 * u * z2
        return z1**2 + z2**2 + c.c_y * (q[1] - c.y_star) + c.c_l * L + extra

    def grad(q):
        cs, tn, L, z1, z2 = parts(q)
        th = q[2]
        dL = -np.sin(th) / cs
        dT = 0.5 * c.c_t / np.cos(th / 2.0) ** 2 / (1.0 - tn**2)
        u = z1 - c.z1_star
        d1 = 2.0 * z1 + 2.0 * c.w1 * u + c.w12 * z2
        d2 = 2.0 * z2 + 2.0 * c.w2 * z2 + c.w12 * u
        return np.array([
            d2 / (kap * eps),
            d1 * eps + c.c_y,
            d1 * dL + d2 * (-1.0 - c.c_h * dT) + c.c_l * dL,
        ])

    return V, grad


# --- pendubot --------------------------------------------------------------

@dataclass
class PendubotVd:
    """V_d = g1(q2) sin q1 + g2(q2) cos q1 + phi(z(q1, q2)), with z the homogeneous invariant."""

    g1: CubicHermiteSpline
    g2: CubicHermiteSpline
    phi: PhiPreset
    gamma1_over_gamma2: Callable[[float], float]
    z_int: CubicHermiteSpline
    domain: tuple

    def with_phi(self, phi: PhiPreset) -> "PendubotVd":
        return dataclasses.replace(self, phi=phi)

    def invariant(self, q) -> float:
        return float(self.z_int(q[1])) - q[0]

    def V(self, q) -> float:
        q1, q2 = q
        return float(self.g1(q2) * np.sin(q1) + self.g2(q2) * np.cos(q1) + self.phi.fn(self.invariant(q)))

    def grad(self, q) -> np.ndarray:
        q1, q2 = q
        if not self.domain[0] <= q2 <= self.domain[1]:
            raise DomainError(f"q2={q2} outside the V_d domain {self.domain}")
        s1, c1 = np.sin(q1), np.cos(q1)
        dphi = self.phi.d(self.invariant(q))
        dz2 = float(self.z_int(q2, 1))
        return np.array([
            self.g1(q2) * c1 - self.g2(q2) * s1 - dphi,
            self.g1(q2, 1) * s1 + self.g2(q2, 1) * c1 + dphi * dz2,
        ])


def pendubot_homogeneous_invariant(q, c1=4.0, c2=1.0, c3=1.5, a1=1.0, b1=-5.0):
    """Closed form of int gamma1/gamma2 dq2 - q1 for c = (4, 1, 1.5), a1 = 1, b1 = -5."""
    q1, q2 = q
    return -8.0 / 9.0 * np.log((1.0 + np.sin(q2)) / np.cos(q2)) + q2 / 3.0 - q1


def solve_pendubot_vd(sys: SystemModel, md: StructuredMdInv, phi: PhiPreset,
                      domain=(-1.2, 1.2), step: float = 1e-4, g0=(0.0, 0.0)) -> PendubotVd:
    """Integrate the coupled linear ODE pair for (g1, g2) outward from q2 = 0.

    With f3 = gamma^(1), f4 = gamma^(2), f1 = -c5 g cos(q2) D, f2 = -c5 g sin(q2) D
    and D = det M det M_d^{-1}:  f4 g1' = f1 + f3 g2,  f4 g2' = f2 - f3 g1.
    """
    if sys.n != 2 or sys.k != 2:
        raise ModelError("pendubot V_d construction needs a 2-DOF model with k = 2")
    c5g = sys.params["c5"] * sys.params["g"]
    gd = gamma_and_phis(md, sys)
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < 0.0 < hi:
        raise DomainError("V_d domain must contain q2 = 0")

    half = step / 2.0
    n_lo, n_hi = int(round(-lo / half)), int(round(hi / half))
    xs = np.arange(-n_lo, n_hi + 1) * half
    coef = np.empty((xs.size, 4))
    for i, x in enumerate(xs):
        q = np.array([0.0, x])
        gam = gd.gamma(q)
        D = derived_kinetics(sys, q).detM * md.det(q)
        coef[i] = (-c5g * np.cos(x) * D, -c5g * np.sin(x) * D, gam[0], gam[1])
    f4 = coef[:, 3]
    if np.abs(f4).min() < 1e-12 or np.any(np.sign(f4) != np.sign(f4[0])):
        raise DomainError(f"f4 = gamma^(2) crosses zero inside {domain}; truncate the domain")

    def rhs_at(i, g):
        f1, f2, f3, f4 = coef[i]
        return np.array([(f1 + f3 * g[1]) / f4, (f2 - f3 * g[0]) / f4])

    i0 = n_lo

    def sweep(direction):
        g = np.asarray(g0, dtype=float)
        i = i0
        out = []
        limit = n_hi + n_lo if direction > 0 else 0
        while (i < limit) if direction > 0 else (i > limit):
            h = direction * step
            k1 = rhs_at(i, g)
            k2 = rhs_at(i + direction, g + 0.5 * h * k1)
            k3 = rhs_at(i + direction, g + 0.5 * h * k2)
            k4 = rhs_at(i + 2 * direction, g + h * k3)
            g = g + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            i += 2 * direction
            out.append((i, g))
        return out

    pts = sweep(-1)[::-1] + [(i0, np.asarray(g0, dtype=float))] + sweep(+1)
    idx = np.array([i for i, _ in pts])
    G = np.array([g for _, g in pts])
    x = xs[idx]
    dG = np.array([rhs_at(i, g) for i, g in pts])
    g1 = CubicHermiteSpline(x, G[:, 0], dG[:, 0])
    g2 = CubicHermiteSpline(x, G[:, 1], dG[:, 1])

    ratio = coef[idx, 2] / coef[idx, 3]
    # cumulative Simpson over the half-step samples for int gamma1/gamma2 dq2
    r_half = coef[:, 2] / coef[:, 3]
    seg = step / 6.0 * (r_half[idx[:-1]] + 4.0 * r_half[idx[:-1] + 1] + r_half[idx[1:]])
    Z = np.concatenate([[0.0], np.cumsum(seg)])
    Z -= Z[np.searchsorted(idx, i0)]
    z_int = CubicHermiteSpline(x, Z, ratio)
    return PendubotVd(g1, g2, phi, lambda q2: float(z_int(q2, 1)), z_int, (float(x[0]), float(x[-1])))


# --- SpiderCrane -----------------------------------------------------------

def spider_vd_candidate(beta1: float, beta2: float, phi: PhiPreset):
    """The published compact-form candidate phi(b2 y - b1 cos th) + y cos th / b1 - (b1 + b2) y^2 / (2 b1^2)."""

    def V(q):
        y, th = q[1], q[2]
        return (phi.fn(beta2 * y - beta1 * np.cos(th)) + y * np.cos(th) / beta1
                - (beta1 + beta2) * y**2 / (2.0 * beta1**2))

    def grad(q):
        y, th = q[1], q[2]
        dphi = phi.d(beta2 * y - beta1 * np.cos(th))
        return np.array([
            0.0,
            dphi * beta2 + np.cos(th) / beta1 - (beta1 + beta2) * y / beta1**2,
            dphi * beta1 * np.sin(th) - y * np.sin(th) / beta1,
        ])

    return V, grad


def spider_vd_invariant(Mring: float, m: float, l3: float, g: float, q_star,
                        k1: float = 1.0, k2: float = 1.0, a0: float = 0.0):
    """V_d built on the two characteristic invariants, valid for a(q) = y - rho cos th + a0, b = 0.

    V_d = k1/2 (c1 - c1*)^2 + k2/2 (c2 - c2*)^2 + K (c2 + a0)(1 - cos th),
    c1 = x + rho sin th, c2 = y - rho cos th, rho = m l3/(M+m), K = M m^2 g l3^3/(M+m).
    The last term is a particular solution; any function of (c1, c2) is homogeneous.
    """
    Mt = Mring + m
    rho = m * l3 / Mt
    K = Mring * m**2 * g * l3**3 / Mt
    xs, ys, ts = np.asarray(q_star, dtype=float)
    c1s, c2s = xs + rho * np.sin(ts), ys - rho * np.cos(ts)

    def V(q):
        x, y, th = q
        c1 = x + rho * np.sin(th)
        c2 = y - rho * np.cos(th)
        return 0.5 * k1 * (c1 - c1s) ** 2 + 0.5 * k2 * (c2 - c2s) ** 2 + K * (c2 + a0) * (1.0 - np.cos(th))

    def grad(q):
        x, y, th = q
        s, c = np.sin(th), np.cos(th)
        c1 = x + rho * s
        c2 = y - rho * c
        e1, e2 = k1 * (c1 - c1s), k2 * (c2 - c2s)
        return np.array([
            e1,
            e2 + K * (1.0 - c),
            e1 * rho * c + e2 * rho * s + K * (rho * s * (1.0 - c) + (c2 + a0) * s),
        ])

    return V, grad
