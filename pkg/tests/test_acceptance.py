"""One test per acceptance criterion, each at its stated tolerance.

Every test records a single PASS/FAIL line (printed immediately and again
in the terminal summary) before asserting.
"""

import time

import numpy as np
import pytest

from idashaper import cases
from idashaper.control import DesiredEnergy, GainConfig, potential_residual, vtol_vd, vtol_vd_printed
from idashaper.matcher import J2Param, equation_entries, psi_matrix, scalar_pde_residual, solve_alphas, solve_j2
from idashaper.mdstruct import StructuredMdInv, gamma_and_phis, necessary_condition, passes_necessary_condition
from idashaper.numerics import adjugate, fd_gradient
from idashaper.pdesolve import compare_with_printed, solve_ode, verify_characteristic_solution
from idashaper.sim import ClosedLoopForm, energy_audit, integrate, sample_states, vector_field_open_loop, vector_field_target

import conftest
from oracles import pendubot_alphas_symbolic, spider_psi


def record(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_criterion_1_pendubot_pipeline():
    t0 = time.perf_counter()
    sysm = cases.pendubot_model()
    md0 = StructuredMdInv(2, 2, (1.0,), (-5.0,), lambda q: 0.0)
    j2 = solve_j2(md0, sysm)
    xs = np.linspace(-1.2, 1.2, 100)
    alpha_dev = max(np.abs(j2.alphas(np.array([0.0, x]))[0] - pendubot_alphas_symbolic(x, 1.0, -5.0)).max()
                    for x in xs)
    sol = solve_ode(sysm, md0, j2, (-1.2, 1.2), lam=1.0)
    res = max(abs(scalar_pde_residual(sol.md, j2, sysm, np.array([0.0, x])))
              for x in np.linspace(-1.2, 1.2, 1001))
    elapsed = time.perf_counter() - t0
    printed = compare_with_printed(sol)
    ok = alpha_dev <= 1e-10 and res <= 1e-8 and elapsed < 5.0
    record(1, ok, f"pendubot alpha dev {alpha_dev:.2e} (<=1e-10), scalar PDE residual {res:.2e} (<=1e-8), "
                  f"{elapsed:.2f}s (<5s); printed a(q2) max rel dev {printed['max_rel_dev']:.3g} "
                  f"(documented discrepancy: a(0) {printed['ours_at_0']:.4g} vs {printed['printed_at_0']:.4g})")
    assert ok


def test_criterion_2_vtol():
    t0 = time.perf_counter()
    vp = cases.VtolParams(eps=0.3, kappa=20.0, kappa_p=0.1)
    sysm = cases.vtol_model(vp)
    nc = necessary_condition(vp.md_inv(), sysm, np.zeros(3))
    nc_err = abs(nc - vp.g * vp.eps * (1 - vp.kappa_p))
    ncI = necessary_condition(np.eye(3), sysm, np.zeros(3))
    identity_fails = ncI <= 1e-12 and not passes_necessary_condition(ncI)
    V, gV = vtol_vd(vtol_vd_printed(vp.eps, vp.g))
    de = DesiredEnergy(vp.md_inv(), V, np.zeros(3), gV)
    printed_res = max(abs(potential_residual(sysm, de, np.array([0.0, y, th])).item())
                      for y in np.linspace(-5.0, 5.0, 50) for th in np.linspace(-1.3, 1.3, 52)[1:-1])
    hess_printed = de.minimum_report()
    hess_shipped = cases.vtol_bundle(vp).reports["minimum"]
    elapsed = time.perf_counter() - t0
    ok = (nc_err <= 1e-12 and identity_fails and printed_res <= 1e-8
          and hess_printed["min_eig"] > 0 and hess_shipped["min_eig"] > 0 and elapsed < 10.0)
    record(2, ok, f"VTOL necessary-condition err {nc_err:.1e} (<=1e-12), M_d=I value {ncI:.3f} fails={identity_fails}, "
                  f"printed V_d residual {printed_res:.3g} (<=1e-8), Hessian min eig printed "
                  f"{hess_printed['min_eig']:.3g} / shipped {hess_shipped['min_eig']:.3g}, {elapsed:.2f}s (<10s)")
    assert ok


def test_criterion_3_vtol_simulation(vtol_bundle):
    t0 = time.perf_counter()
    dt = 1e-3
    tr = integrate(vtol_bundle.form, [6.0, -5.0, -1.0], [0.0, 0.0, 0.0], dt=dt, T=25.0, record_every=1)
    elapsed = time.perf_counter() - t0
    err = tr.final_error(vtol_bundle.de.q_star)
    rise = float(np.diff(tr.Hd).max())
    monotone = rise <= 1e-6 * dt
    ok = err < 0.05 and monotone and elapsed < 30.0
    record(3, ok, f"VTOL |q(25)-q*|_inf {err:.4f} (<0.05), max per-step dH_d {rise:.2e} "
                  f"(<= {1e-6 * dt:.0e}), {elapsed:.2f}s (<30s)")
    assert ok


def test_criterion_4_spider():
    t0 = time.perf_counter()
    p = cases.SpiderParams()
    sysm = cases.spider_model(p)
    rho = p.rho
    a_fun = lambda q: q[1] - rho * np.cos(q[2])
    a_grad = lambda q: np.array([0.0, 1.0, rho * np.sin(q[2])])
    md = StructuredMdInv(3, 3, (p.a1, p.a2), (0.0, 0.0), a_fun, a_grad)
    Psi = psi_matrix(md)
    psi_ok = np.array_equal(Psi, spider_psi(p.a1, p.a2)) and np.linalg.matrix_rank(Psi) == 5
    j2 = solve_j2(md, sysm)
    grid = [np.array([x, y, t]) for x in np.linspace(-1, 1, 10)
            for y in np.linspace(rho + 0.2, rho + 2.0, 10) for t in np.linspace(-1, 1, 10)]
    inv = {"c1": lambda q: q[0] + rho * np.sin(q[2]), "c2": lambda q: q[1] - rho * np.cos(q[2])}
    rep = verify_characteristic_solution(sysm, md, j2, a_fun, a_grad, grid, invariants=inv, zero_source=True)
    elapsed = time.perf_counter() - t0
    drift = max(rep.invariant_drift.values())
    ok = psi_ok and drift <= 1e-6 and rep.max_pde_residual <= 1e-10 and elapsed < 10.0
    record(4, ok, f"SpiderCrane Psi printed/rank5={psi_ok}, invariant drift {drift:.2e} (<=1e-6), "
                  f"residual on 10^3 grid {rep.max_pde_residual:.2e} (<=1e-10), {elapsed:.2f}s (<10s)")
    assert ok


def test_criterion_5_matching_oracle(pendubot_bundle, vtol_bundle, spider_bundle):
    gaps = {}
    for b in (pendubot_bundle, vtol_bundle, spider_bundle):
        assert b.certified
        states = sample_states(b.sys.n, 200, 12345, b.q_box)
        gaps[b.name] = max(float(np.abs(vector_field_open_loop(b.form, x) - vector_field_target(b.form, x)).max())
                           for x in states)
    ok = all(v <= 1e-8 for v in gaps.values())
    record(5, ok, "open loop vs target field at 200 seeded states: "
                  + ", ".join(f"{k} {v:.2e}" for k, v in gaps.items()) + " (<=1e-8)")
    assert ok


def test_criterion_6_property_suites(vtol_bundle):
    rng = np.random.default_rng(2024)
    out = {}
    # gamma independence of a
    pend = cases.pendubot_model()
    dev = 0.0
    for _ in range(50):
        q = np.array([0.0, rng.uniform(-1.5, 1.5)])
        a0, a1 = rng.uniform(-50, 50, 2)
        g0 = gamma_and_phis(StructuredMdInv(2, 2, (1.0,), (-5.0,), lambda q, a=a0: a), pend).gamma(q)
        g1 = gamma_and_phis(StructuredMdInv(2, 2, (1.0,), (-5.0,), lambda q, a=a1: a), pend).gamma(q)
        dev = max(dev, float(np.abs(g1 - g0).max()))
    out["gamma"] = (dev, dev <= 1e-12)
    # J2 skew-symmetry, exact
    skew = 0.0
    for _ in range(50):
        al = rng.normal(size=(2, 3))
        J = J2Param(3, 3, lambda q, al=al: al, lambda q: 1.7).matrix(np.zeros(3), rng.normal(size=3))
        skew = max(skew, float(np.abs(J + J.T).max()))
    out["J2 skew"] = (skew, skew == 0.0)
    # adjugate identity
    adj = 0.0
    for _ in range(50):
        A = rng.normal(size=(3, 3))
        adj = max(adj, float(np.abs(A @ adjugate(A) - np.linalg.det(A) * np.eye(3)).max()))
    out["adjugate"] = (adj, adj <= 1e-10)
    # analytic vs FD derivatives of V_d
    fd = 0.0
    de = vtol_bundle.de
    for q in rng.uniform([-3, -3, -1], [3, 3, 1], size=(30, 3)):
        fd = max(fd, float(np.abs(de.grad_V(q) - fd_gradient(de.V, q)).max()) / max(1.0, np.abs(de.grad_V(q)).max()))
    out["FD audit"] = (fd, fd <= 1e-5)
    # RK4 order ratio
    form = vtol_bundle.form
    ref = integrate(form, [6.0, -5.0, -1.0], dt=0.0025, T=2.0)
    xr = np.concatenate([ref.q[-1], ref.p[-1]])
    e = [np.abs(np.concatenate([t.q[-1], t.p[-1]]) - xr).max()
         for t in (integrate(form, [6.0, -5.0, -1.0], dt=h, T=2.0) for h in (0.04, 0.02))]
    ratio = e[0] / e[1]
    out["RK4 ratio"] = (ratio, 10 <= ratio <= 24)
    # undamped energy conservation
    free = ClosedLoopForm(vtol_bundle.sys, vtol_bundle.de, vtol_bundle.j2, GainConfig.diag(0.0, 0.0))
    tr = integrate(free, [1.0, -1.0, -0.3], dt=1e-3, T=5.0)
    drift = float(np.abs(tr.Hd - tr.Hd[0]).max()) / tr.t[-1]
    out["Kv=0 drift/s"] = (drift, drift <= 1e-6)
    # equation counts
    counts = []
    for n in (2, 3):
        md = StructuredMdInv(n, n, [1.0] * (n - 1), [0.0] * (n - 1), lambda q: 1.0)
        counts.append(len(equation_entries(n, n - 1)) == n * (n + 1) // 2 - 1
                      and psi_matrix(md).shape[0] + 1 == n * (n + 1) // 2)
    out["equation count"] = (float(all(counts)), all(counts))
    ok = all(v[1] for v in out.values())
    record(6, ok, ", ".join(f"{k} {v[0]:.3g}{'' if v[1] else ' FAIL'}" for k, v in out.items()))
    assert ok
