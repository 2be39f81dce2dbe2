"""The three case-study systems with analytic derivatives, and their demo designs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError
from .model import SystemModel

G_EARTH = 9.81


@dataclass(frozen=True)
class PendubotParams:
    """Inertia/gravity constants of the 2R pendubot (first joint actuated).

    ``c5 * g = 15`` reproduces the forcing coefficient of the demo potential
    PDE; ``c4`` does not enter the potential matching and defaults to 2*c5.
    """

    c1: float = 4.0
    c2: float = 1.0
    c3: float = 1.5
    c4: float = 30.0 / G_EARTH
    c5: float = 15.0 / G_EARTH
    g: float = G_EARTH

    def __post_init__(self):
        if not self.c1 * self.c2 > self.c3**2:
            raise ModelError("pendubot needs c1*c2 > c3^2 for a positive definite inertia")


@dataclass(frozen=True)
class VtolParams:
    eps: float = 0.3
    g: float = G_EARTH
    kappa: float = 20.0
    kappa_p: float = 0.1
    q_star: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.kappa > 0 and self.kappa_p > 0 and self.kappa * self.kappa_p > 1):
            raise ModelError("VTOL design needs kappa, kappa' > 0 and kappa*kappa' > 1")

    def md(self) -> np.ndarray:
        """Constant M_d with a = kappa eps^2, b = 1, c = kappa', d = f = 0, e = eps."""
        e = self.eps
        return np.array([[self.kappa * e**2, 0.0, e],
                         [0.0, 1.0, 0.0],
                         [e, 0.0, self.kappa_p]])

    def md_inv(self) -> np.ndarray:
        return np.linalg.inv(self.md())


@dataclass(frozen=True)
class SpiderParams:
    """2D SpiderCrane: ring mass, load mass, fixed cable length and M_d constants."""

    Mring: float = 1.0
    m: float = 0.5
    l3: float = 1.0
    g: float = G_EARTH
    a1: float = 1.0
    a2: float = 1.0
    b1: float = 0.0
    b2: float = 0.0

    def __post_init__(self):
        if min(self.Mring, self.m, self.l3) <= 0:
            raise ModelError("SpiderCrane masses and cable length must be positive")

    @property
    def total(self) -> float:
        return self.Mring + self.m

    @property
    def rho(self) -> float:
        """m l3 / (M + m): the lever arm appearing in the characteristic invariants."""
        return self.m * self.l3 / self.total

    def prop1_margin(self) -> float:
        """b1 m l3 + a2 (M + m), the published sign test for the necessary condition."""
        return self.b1 * self.m * self.l3 + self.a2 * self.total


def pendubot_model(p: PendubotParams = PendubotParams()) -> SystemModel:
    c1, c2, c3, c4, c5, g = p.c1, p.c2, p.c3, p.c4, p.c5, p.g

    def M(q):
        c = np.cos(q[1])
        return np.array([[c1 + c2 + 2 * c3 * c, c2 + c3 * c], [c2 + c3 * c, c2]])

    def dM(q):
        s = np.sin(q[1])
        out = np.zeros((2, 2, 2))
        out[1] = [[-2 * c3 * s, -c3 * s], [-c3 * s, 0.0]]
        return out

    def V(q):
        return c4 * g * np.cos(q[0]) + c5 * g * np.cos(q[0] + q[1])

    def gradV(q):
        s12 = np.sin(q[0] + q[1])
        return np.array([-c4 * g * np.sin(q[0]) - c5 * g * s12, -c5 * g * s12])

    def hessV(q):
        c12 = np.cos(q[0] + q[1])
        return -g * np.array([[c4 * np.cos(q[0]) + c5 * c12, c5 * c12], [c5 * c12, c5 * c12]])

    return SystemModel(
        name="pendubot", n=2, m=1, k=2,
        mass_matrix=M, mass_matrix_grad=dM,
        potential=V, potential_grad=gradV, potential_hessian=hessV,
        input_map=lambda q: np.array([[1.0], [0.0]]),
        params={"c1": c1, "c2": c2, "c3": c3, "c4": c4, "c5": c5, "g": g},
    )


def vtol_model(p: VtolParams = VtolParams()) -> SystemModel:
    eps, g = p.eps, p.g

    def G(q):
        s, c = np.sin(q[2]), np.cos(q[2])
        return np.array([[-s, eps * c], [c, eps * s], [0.0, 1.0]])

    def Gperp(q):
        return np.array([[np.cos(q[2]), np.sin(q[2]), -eps]])

    def dGperp(q):
        out = np.zeros((3, 1, 3))
        out[2, 0] = [-np.sin(q[2]), np.cos(q[2]), 0.0]
        return out

    return SystemModel(
        name="vtol", n=3, m=2, k=None,
        mass_matrix=lambda q: np.eye(3),
        mass_matrix_grad=lambda q: np.zeros((3, 3, 3)),
        potential=lambda q: g * q[1],
        potential_grad=lambda q: np.array([0.0, g, 0.0]),
        potential_hessian=lambda q: np.zeros((3, 3)),
        input_map=G, annihilator=Gperp, annihilator_grad=dGperp,
        params={"eps": eps, "g": g}, constant_mass=True,
    )


def spider_model(p: SpiderParams = SpiderParams()) -> SystemModel:
    Mt, m, l3, g = p.total, p.m, p.l3, p.g

    def M(q):
        s, c = np.sin(q[2]), np.cos(q[2])
        return np.array([[Mt, 0.0, m * l3 * c],
                         [0.0, Mt, m * l3 * s],
                         [m * l3 * c, m * l3 * s, m * l3**2]])

    def dM(q):
        s, c = np.sin(q[2]), np.cos(q[2])
        out = np.zeros((3, 3, 3))
        out[2, 0, 2] = out[2, 2, 0] = -m * l3 * s
        out[2, 1, 2] = out[2, 2, 1] = m * l3 * c
        return out

    def V(q):
        return Mt * g * q[1] - m * g * l3 * np.cos(q[2])

    def gradV(q):
        return np.array([0.0, Mt * g, m * g * l3 * np.sin(q[2])])

    def hessV(q):
        H = np.zeros((3, 3))
        H[2, 2] = m * g * l3 * np.cos(q[2])
        return H

    return SystemModel(
        name="spider", n=3, m=2, k=3,
        mass_matrix=M, mass_matrix_grad=dM,
        potential=V, potential_grad=gradV, potential_hessian=hessV,
        input_map=lambda q: np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        params={"Mring": p.Mring, "m": m, "l3": l3, "g": g},
    )


# --- certified demo bundles -------------------------------------------------

@dataclass
class Bundle:
    """Everything needed to run one controller, plus the certificates gathered on the way."""

    name: str
    sys: SystemModel
    md: object
    j2: object
    regime: object
    de: object
    kv: object
    certificates: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    q_box: list = field(default_factory=list)

    @property
    def form(self):
        from .sim import ClosedLoopForm
        return ClosedLoopForm(self.sys, self.de, self.j2, self.kv)

    @property
    def certified(self) -> bool:
        return all(c["pass"] for c in self.certificates.values())


class _stage:
    """Context manager that re-raises library errors tagged with the pipeline stage."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        from .errors import IdaError, StageError
        if exc is not None and isinstance(exc, (IdaError, ValueError)) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _cert(value: float, tol: float, higher_is_better: bool = False) -> dict:
    ok = value > tol if higher_is_better else value <= tol
    return {"value": float(value), "tol": float(tol), "pass": bool(ok)}


def pendubot_alpha_closed_form(q2, p: PendubotParams = PendubotParams(), a1: float = 1.0, b1: float = -5.0):
    """(alpha_1, alpha_2) solving the two algebraic equations for n = 2, k = 2."""
    c1, c2, c3 = p.c1, p.c2, p.c3
    s, c = np.sin(q2), np.cos(q2)
    det = c1 * c2 - c3**2 * c**2
    m11 = -2.0 * c2 * c3**2 * s * c
    m12 = det * c3 * s + (c2 + c3 * c) * 2.0 * c3**2 * c * s
    al1 = -m11 / (2.0 * a1 * det)
    al2 = -m12 / (a1 * det) - al1 * b1 / a1
    return np.array([al1, al2])


def _match(bundle: Bundle, count: int = 200, seed: int = 0) -> float:
    from .sim import match_certificate, sample_states
    return match_certificate(bundle.form, sample_states(bundle.sys.n, count, seed, bundle.q_box))


def pendubot_bundle(p: PendubotParams = PendubotParams(), a1: float = 1.0, b1: float = -5.0,
                    lam: float = 1.0, domain=(-1.2, 1.2), phi_c: float = 10.0,
                    kv: float = 1.0, seed: int = 0) -> Bundle:
    from .control import DesiredEnergy, GainConfig, phi_preset, potential_residual, solve_pendubot_vd
    from .matcher import kinetic_residual_structured, solve_j2
    from .mdstruct import StructuredMdInv, necessary_condition
    from .pdesolve import classify, compare_with_printed, solve_ode

    sys = pendubot_model(p)
    with _stage("mdstruct"):
        md0 = StructuredMdInv(2, 2, (a1,), (b1,), lambda q: 0.0)
    with _stage("matcher"):
        j2 = solve_j2(md0, sys)
        grid = np.linspace(domain[0], domain[1], 100)
        dev = max(np.abs(j2.alphas(np.array([0.0, x]))[0] - pendubot_alpha_closed_form(x, p, a1, b1)).max()
                  for x in grid)
    with _stage("pdesolve"):
        regime = classify(sys, md0, j2, seed=seed)
        sol = solve_ode(sys, md0, j2, domain, lam=lam)
        md = sol.md
        pts = np.linspace(domain[0], domain[1], 1001)
        kin = max(np.abs(kinetic_residual_structured(md, j2, sys, np.array([0.0, x]))).max() for x in pts)
    with _stage("control"):
        vd = solve_pendubot_vd(sys, md, phi_preset("quadratic", phi_c), domain)
        de = DesiredEnergy(md, vd.V, np.zeros(2), vd.grad, name="pendubot")
        q1s = np.linspace(-np.pi, np.pi, 25)
        pot = max(abs(potential_residual(sys, de, np.array([a, b])).item())
                  for a in q1s for b in np.linspace(domain[0], domain[1], 25))
        nc = necessary_condition(md, sys, de.q_star)
        minimum = de.minimum_report()
    b = Bundle("pendubot", sys, md, j2, regime, de, GainConfig(np.array([[kv]])),
               q_box=[(-1.0, 1.0), (domain[0], domain[1])])
    b.certificates.update({
        "alpha_closed_form": _cert(dev, 1e-10),
        "kinetic_residual": _cert(kin, 1e-8),
        "potential_residual": _cert(pot, 1e-6),
        "necessary_condition": _cert(nc, 1e-9, higher_is_better=True),
    })
    with _stage("sim"):
        b.certificates["match"] = _cert(_match(b, seed=seed), 1e-8)
    b.reports.update({"regime": regime.tag, "minimum": minimum, "printed_a": compare_with_printed(sol)})
    b.extras.update({"ode": sol, "vd": vd})
    return b


VTOL_W2 = 28.0


def vtol_bundle(p: VtolParams = VtolParams(), md_inv=None, kv=(1.0, 0.5),
                w=(0.0, VTOL_W2, 0.0), vd_preset: str = "exact", seed: int = 0) -> Bundle:
    """VTOL with constant M_d and the exact closed-form V_d.

    ``w`` weights an extra quadratic in the two homogeneous invariants; the
    default maximizes the decay rate of the linearized closed loop for the
    demo gains.  ``md_inv`` overrides the design matrix (e.g. the identity).
    ``vd_preset="printed"`` swaps in the published rounded expression instead.
    """
    from .control import (DesiredEnergy, GainConfig, potential_residual, vtol_vd,
                          vtol_vd_exact, vtol_vd_printed)
    from .matcher import ZeroJ2
    from .mdstruct import necessary_condition
    from .pdesolve import classify, constant_md

    sys = vtol_model(p)
    q_star = np.asarray(p.q_star, dtype=float)
    with _stage("mdstruct"):
        A = p.md_inv() if md_inv is None else np.array(md_inv, dtype=float)
        nc = necessary_condition(A, sys, q_star)
    with _stage("matcher"):
        j2 = ZeroJ2(3)
    box = [(-5.0, 5.0), (-5.0, 5.0), (-1.0, 1.0)]
    with _stage("pdesolve"):
        regime = classify(sys, seed=seed)
        constant_md(sys, A, seed=seed, box=np.array(box).T)
    with _stage("control"):
        if vd_preset == "exact":
            co = vtol_vd_exact(p.eps, p.g, p.kappa, p.kappa_p, q_star[0], q_star[1], *w)
        elif vd_preset == "printed":
            if abs(p.kappa - 20.0) > 1e-12 or abs(p.kappa_p - 0.1) > 1e-12:
                raise ModelError("the printed V_d is only defined for kappa = 20, kappa' = 0.1")
            co = vtol_vd_printed(p.eps, p.g, q_star[0], q_star[1])
        else:
            raise ModelError(f"unknown VTOL V_d preset {vd_preset!r}")
        V, gV = vtol_vd(co)
        de = DesiredEnergy(A, V, q_star, gV, name="vtol")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(np.array(box)[:, 0], np.array(box)[:, 1], size=(200, 3))
        pot = max(np.abs(potential_residual(sys, de, q)).max() for q in pts)
        minimum = de.minimum_report()
    b = Bundle("vtol", sys, A, j2, regime, de, GainConfig.diag(*kv), q_box=box)
    b.certificates.update({
        "necessary_condition": _cert(nc, 1e-9, higher_is_better=True),
        "potential_residual": _cert(pot, 1e-8),
    })
    with _stage("sim"):
        b.certificates["match"] = _cert(_match(b, seed=seed), 1e-8)
    if abs(p.kappa - 20.0) < 1e-12 and abs(p.kappa_p - 0.1) < 1e-12:
        Vp, gVp = vtol_vd(vtol_vd_printed(p.eps, p.g, q_star[0], q_star[1]))
        dp = DesiredEnergy(A, Vp, q_star, gVp)
        b.reports["printed_vd_residual"] = max(np.abs(potential_residual(sys, dp, q)).max() for q in pts)
    b.reports.update({"regime": regime.tag, "minimum": minimum, "vd_coeffs": co})
    return b


def spider_bundle(p: SpiderParams = SpiderParams(), q_star=(0.0, 1.0, 0.0), kv=(1.0, 1.0),
                  k1: float = 1.0, k2: float = 1.0, seed: int = 0) -> Bundle:
    """SpiderCrane with a(q) = y - rho cos th and a V_d built from the characteristic invariants."""
    from .control import (DesiredEnergy, GainConfig, phi_preset, potential_residual,
                          spider_vd_candidate, spider_vd_invariant)
    from .errors import ModelError as _ModelError
    from .matcher import _rank, psi_matrix, solve_j2
    from .mdstruct import StructuredMdInv, necessary_condition
    from .pdesolve import CHARACTERISTIC, classify, verify_characteristic_solution

    sys = spider_model(p)
    rho = p.rho
    q_star = np.asarray(q_star, dtype=float)

    def a_fun(q):
        return q[1] - rho * np.cos(q[2])

    def a_grad(q):
        return np.array([0.0, 1.0, rho * np.sin(q[2])])

    with _stage("mdstruct"):
        md = StructuredMdInv(3, 3, (p.a1, p.a2), (p.b1, p.b2), a_fun, a_grad)
        if not md.det(q_star) > 0 or np.linalg.eigvalsh(md.realize(q_star)).min() <= 0:
            raise _ModelError(f"M_d^-1 not positive definite at q*={q_star}; need y* > rho={rho:.4g}")
    with _stage("matcher"):
        Psi = psi_matrix(md)
        j2 = solve_j2(md, sys)
    box = [(-1.0, 1.0), (rho + 0.2, rho + 2.0), (-1.0, 1.0)]
    grid = [np.array([x, y, t]) for x in np.linspace(*box[0], 10)
            for y in np.linspace(*box[1], 10) for t in np.linspace(*box[2], 10)]
    with _stage("pdesolve"):
        regime = classify(sys, md, j2, seed=seed, box=np.array(box).T)
        if regime.tag != CHARACTERISTIC:
            raise _ModelError(f"expected the characteristic regime, got {regime.tag}")
        invariants = {"c1": lambda q: q[0] + rho * np.sin(q[2]), "c2": lambda q: q[1] - rho * np.cos(q[2])}
        char = verify_characteristic_solution(sys, md, j2, a_fun, a_grad, grid, invariants=invariants,
                                              zero_source=p.b1 == 0 and p.b2 == 0)
    with _stage("control"):
        if p.b1 != 0 or p.b2 != 0:
            raise _ModelError("the invariant-based V_d assumes b1 = b2 = 0")
        V, gV = spider_vd_invariant(p.Mring, p.m, p.l3, p.g, q_star, k1, k2)
        de = DesiredEnergy(md, V, q_star, gV, name="spider")
        pot = max(np.abs(potential_residual(sys, de, q)).max() for q in grid)
        nc = necessary_condition(md, sys, q_star)
        minimum = de.minimum_report()
        Vc, gVc = spider_vd_candidate(1.0, 1.0, phi_preset("quadratic", 1.0))
        cand = max(np.abs(potential_residual(sys, DesiredEnergy(md, Vc, q_star, gVc), q)).max() for q in grid)
    b = Bundle("spider", sys, md, j2, regime, de, GainConfig.diag(*kv), q_box=box)
    b.certificates.update({
        "psi_rank": _cert(5 - _rank(Psi), 0),
        "pde_residual": _cert(char.max_pde_residual, 1e-10),
        "characteristic_drift": _cert(max([char.max_drift] + list(char.invariant_drift.values())), 1e-6),
        "potential_residual": _cert(pot, 1e-8),
        "necessary_condition": _cert(nc, 1e-9, higher_is_better=True),
    })
    with _stage("sim"):
        b.certificates["match"] = _cert(_match(b, seed=seed), 1e-8)
    b.reports.update({"regime": regime.tag, "minimum": minimum, "psi": Psi,
                      "printed_candidate_residual": cand, "characteristic": char})
    return b


BUNDLES = {"pendubot": pendubot_bundle, "vtol": vtol_bundle, "spider": spider_bundle}


def demo_bundle(name: str, **kwargs) -> Bundle:
    """Run the full pipeline for one of the demo systems with its published design choices."""
    try:
        return BUNDLES[name](**kwargs)
    except KeyError:
        raise ModelError(f"unknown bundle {name!r}; choose from {sorted(BUNDLES)}") from None
