"""Closed-loop simulation, matching certificates and trajectory I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .control import DesiredEnergy, GainConfig, _control_terms, control_law
from .errors import DivergenceError
from .matcher import _j2_matrix
from .model import State, SystemModel
from .numerics import parallel_map, rk4_step

DIVERGENCE_LIMIT = 1e6


@dataclass
class ClosedLoopForm:
    """Target dynamics  x' = [[0, M^-1 M_d], [-M_d M^-1, J2 - G Kv G^T]] grad H_d."""

    sys: SystemModel
    de: DesiredEnergy
    j2: object
    kv: GainConfig


def plant_field(sys: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Plant field  q' = M^-1 p,  p' = -grad_q H + G u  for a given input."""
    x = np.asarray(x, dtype=float)
    q, p = x[:sys.n], x[sys.n:]
    qdot = sys.Minv(q) @ p
    pdot = -(0.5 * sys.grad_kinetic(q, p) + sys.grad_V(q)) + sys.G(q) @ np.atleast_1d(u)
    return np.concatenate([qdot, pdot])


def vector_field_open_loop(form: ClosedLoopForm, x: np.ndarray) -> np.ndarray:
    """Plant driven by the IDA-PBC input, as a stacked (q', p') vector."""
    x = np.asarray(x, dtype=float)
    n = form.sys.n
    u_es, u_di = _control_terms(form.sys, form.de, form.j2, form.kv, x[:n], x[n:])
    return plant_field(form.sys, x, u_es + u_di)


def vector_field_target(form: ClosedLoopForm, x: np.ndarray) -> np.ndarray:
    sys, de = form.sys, form.de
    x = np.asarray(x, dtype=float)
    q, p = x[:sys.n], x[sys.n:]
    MdMi = de.Md(q) @ sys.Minv(q)
    dHp = de.grad_p_H(q, p)
    G = sys.G(q)
    qdot = MdMi.T @ dHp
    pdot = -MdMi @ de.grad_q_H(q, p) + (_j2_matrix(form.j2, q, p) - G @ form.kv.Kv @ G.T) @ dHp
    return np.concatenate([qdot, pdot])


def dissipation_rate(form: ClosedLoopForm, x: np.ndarray) -> float:
    """(G^T grad_p H_d)^T Kv (G^T grad_p H_d), the rate at which H_d must decrease."""
    x = np.asarray(x, dtype=float)
    q, p = x[:form.sys.n], x[form.sys.n:]
    y = form.sys.G(q).T @ form.de.grad_p_H(q, p)
    return float(y @ form.kv.Kv @ y)


def match_certificate(form: ClosedLoopForm, states: Sequence[np.ndarray]) -> float:
    """Max-norm gap between the controlled plant and the target field over ``states``."""
    gaps = parallel_map(
        lambda x: float(np.abs(vector_field_open_loop(form, x) - vector_field_target(form, x)).max()),
        [np.asarray(x, dtype=float) for x in states])
    return max(gaps) if gaps else 0.0


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    u: np.ndarray
    Hd: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def header(self) -> list[str]:
        return (["t"] + [f"q{i + 1}" for i in range(self.n)] + [f"p{i + 1}" for i in range(self.n)]
                + [f"u{i + 1}" for i in range(self.m)] + ["Hd"])

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.q, self.p, self.u, self.Hd])

    def to_csv(self, path) -> None:
        # repr() keeps the shortest round-tripping decimal for each float
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            head = next(r)
            data = np.array([[float(v) for v in row] for row in r])
        n = sum(1 for h in head if h.startswith("q"))
        m = sum(1 for h in head if h.startswith("u"))
        data = data.reshape(-1, len(head))
        return cls(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:1 + 2 * n],
                   data[:, 1 + 2 * n:1 + 2 * n + m], data[:, -1])

    def final_error(self, q_star) -> float:
        return float(np.abs(self.q[-1] - np.asarray(q_star, dtype=float)).max())


def integrate(form: ClosedLoopForm, q0, p0=None, dt: float = 1e-3, T: float = 10.0,
              record_every: int = 1) -> Trajectory:
    """Fixed-step RK4 of the controlled plant; the input is recomputed at every stage."""
    q0 = np.asarray(q0, dtype=float)
    p0 = np.zeros_like(q0) if p0 is None else np.asarray(p0, dtype=float)
    steps = int(round(T / dt))
    x = np.concatenate([q0, p0])
    n, m = q0.size, form.sys.m
    rhs = lambda z: vector_field_open_loop(form, z)

    def sample(z):
        s = State.from_vector(z)
        return control_law(form.sys, form.de, form.j2, form.kv, s), form.de.H(s.q, s.p)

    ts, xs, us, hs = [], [], [], []
    for i in range(steps + 1):
        if i % record_every == 0 or i == steps:
            u, h = sample(x)
            ts.append(i * dt)
            xs.append(x.copy())
            us.append(np.atleast_1d(u))
            hs.append(h)
        if i == steps:
            break
        x = rk4_step(rhs, x, dt)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > DIVERGENCE_LIMIT:
            X = np.array(xs)
            partial = Trajectory(np.array(ts), X[:, :n], X[:, n:], np.array(us).reshape(-1, m), np.array(hs))
            raise DivergenceError(f"state left |x| <= {DIVERGENCE_LIMIT:g} at t={(i + 1) * dt:g}", partial)
    X = np.array(xs)
    return Trajectory(np.array(ts), X[:, :n], X[:, n:], np.array(us).reshape(-1, m), np.array(hs),
                      meta={"dt": dt, "T": T})


@dataclass(frozen=True)
class EnergyAudit:
    max_excess: float
    total_drift: float
    max_rise: float
    dissipation_rel_err: Optional[float]

    @property
    def monotone(self) -> bool:
        return self.max_excess <= 0.0


def energy_audit(traj: Trajectory, form: Optional[ClosedLoopForm] = None) -> EnergyAudit:
    """Per-step H_d audit.

    ``max_excess`` is the largest dH_d - 1e-6 dt (1 + |H_d|) over all steps,
    so any positive value is a flagged rise.  With ``form`` the recorded
    decrease is also compared with the trapezoid-rule integral of the
    dissipation rate; the error is relative to the largest step decrease.
    """
    H = np.asarray(traj.Hd, dtype=float)
    dt = np.diff(traj.t)
    dH = np.diff(H)
    if not dH.size:
        return EnergyAudit(-np.inf, 0.0, 0.0, None)
    allow = 1e-6 * dt * (1.0 + np.abs(H[:-1]))
    excess = float((dH - allow).max())
    rel = None
    if form is not None:
        X = np.column_stack([traj.q, traj.p])
        rate = np.array(parallel_map(lambda x: dissipation_rate(form, x), list(X)))
        pred = -0.5 * dt * (rate[:-1] + rate[1:])
        scale = max(float(np.abs(pred).max()), 1e-300)
        rel = float(np.abs(dH - pred).max()) / scale
    return EnergyAudit(excess, float(H[-1] - H[0]), float(max(dH.max(), 0.0)), rel)


def sample_states(n: int, count: int, seed: int, q_box, p_box=(-1.0, 1.0)) -> list[np.ndarray]:
    """Uniform random states; ``q_box`` is a (lo, hi) pair or per-coordinate list of pairs."""
    rng = np.random.default_rng(seed)
    qb = np.asarray(q_box, dtype=float)
    if qb.ndim == 1:
        qb = np.tile(qb, (n, 1))
    out = []
    for _ in range(count):
        q = rng.uniform(qb[:, 0], qb[:, 1])
        p = rng.uniform(p_box[0], p_box[1], size=n)
        out.append(np.concatenate([q, p]))
    return out


def gnuplot_script(csv_name: str, traj: Trajectory, title: Optional[str] = None) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set xlabel 't'",
             f"set title '{title or csv_name}'", "set multiplot layout 2,1"]
    qcols = ", ".join(f"'{csv_name}' using 1:{i + 2} with lines" for i in range(traj.n))
    lines.append(f"plot {qcols}")
    lines.append(f"plot '{csv_name}' using 1:{traj.rows().shape[1]} with lines")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"
