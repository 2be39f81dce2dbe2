"""ida-shaper command-line front end: verify, solve and simulate scenario files."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import cases
from .errors import IdaError, ScenarioError
from .matcher import kinetic_residual_general, scalar_pde_residual
from .control import potential_residual
from .pdesolve import CHARACTERISTIC, CONSTANT_A, ODE_IN_QK
from .scenario import Scenario, load_scenario
from .sim import energy_audit, gnuplot_script, integrate, sample_states, vector_field_open_loop, vector_field_target

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA = 0, 1, 2

CERT_LABELS = {
    "necessary_condition": "necessary condition on the unactuated force Jacobian",
    "alpha_closed_form": "algebraic alpha vs closed form",
    "kinetic_residual": "kinetic matching residual",
    "potential_residual": "potential matching residual",
    "pde_residual": "scalar PDE residual on grid",
    "characteristic_drift": "drift along characteristics",
    "psi_rank": "Psi rank deficiency",
    "match": "closed-loop match certificate",
}


def _fmt(x: float) -> str:
    return repr(float(x))


def _params(cls, overrides: dict, extra: dict | None = None):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ScenarioError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**{**overrides, **(extra or {})})


def build_bundle(sc: Scenario) -> cases.Bundle:
    """Translate a scenario into the matching bundle builder call."""
    md, vd = sc.md, sc.vd
    if sc.system == "pendubot":
        if md["kind"] != "design":
            raise ScenarioError("pendubot only supports md.kind = 'design'")
        if sc.q_star is not None and any(sc.q_star):
            raise ScenarioError("the pendubot target is fixed at the upright position (0, 0)")
        if len(sc.kv) != 1:
            raise ScenarioError("pendubot needs one Kv entry")
        p = _params(cases.PendubotParams, sc.params)
        return cases.pendubot_bundle(p, a1=md["a"][0], b1=md["b"][0], lam=md["lam"],
                                     domain=tuple(sc.grids["domain"]), phi_c=vd.get("c", 10.0),
                                     kv=sc.kv[0], seed=sc.seed)
    if sc.system == "vtol":
        extra = {"q_star": tuple(sc.q_star)} if sc.q_star is not None else None
        p = _params(cases.VtolParams, sc.params, extra)
        if md["kind"] == "design":
            A = None
        elif md["kind"] == "identity":
            A = np.eye(3)
        else:
            A = np.linalg.inv(np.array(md["matrix"], dtype=float))
        return cases.vtol_bundle(p, md_inv=A, kv=tuple(sc.kv), w=tuple(vd.get("w", (0.0, 0.0, 0.0))),
                                 vd_preset=vd["preset"], seed=sc.seed)
    overrides = dict(sc.params)
    if "a" in md:
        overrides.update(a1=md["a"][0], a2=md["a"][1])
    if "b" in md:
        overrides.update(b1=md["b"][0], b2=md["b"][1])
    p = _params(cases.SpiderParams, overrides)
    q_star = tuple(sc.q_star) if sc.q_star is not None else (0.0, 1.0, 0.0)
    return cases.spider_bundle(p, q_star=q_star, kv=tuple(sc.kv), k1=vd.get("k1", 1.0),
                               k2=vd.get("k2", 1.0), seed=sc.seed)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _header_lines(sc: Scenario) -> list[str]:
    return [f"scenario: {sc.source}", f"system: {sc.system}", f"seed: {sc.seed}"]


def cmd_verify(sc: Scenario, out: Path) -> int:
    lines = _header_lines(sc)
    try:
        b = build_bundle(sc)
    except ScenarioError:
        raise
    except IdaError as exc:
        lines += [f"[FAIL] pipeline stopped: {exc}", "overall: FAIL"]
        (out / "report.txt").write_text("\n".join(lines) + "\n")
        return EXIT_FAIL

    lines.append(f"regime: {b.reports.get('regime', '?')}")
    for key, c in b.certificates.items():
        cmp = ">" if key == "necessary_condition" else "<="
        tag = "PASS" if c["pass"] else "FAIL"
        lines.append(f"[{tag}] {CERT_LABELS.get(key, key)}: {c['value']:.6e} (need {cmp} {c['tol']:.0e})")
    mini = b.reports.get("minimum")
    if mini is not None:
        state = "shaped" if mini["shaped"] else "unshaped"
        lines.append(f"[INFO] V_d minimum at q*: {state}, min Hessian eigenvalue {mini['min_eig']:.6e}")
    for key in ("printed_vd_residual", "printed_candidate_residual"):
        if key in b.reports:
            lines.append(f"[INFO] {key.replace('_', ' ')}: {b.reports[key]:.6e}")
    if "printed_a" in b.reports:
        lines.append(f"[INFO] max relative deviation from printed a(q2): {b.reports['printed_a']['max_rel_dev']:.6e}")

    # per-sample residuals on the scenario's seeded states
    n = b.sys.n
    states = sample_states(n, sc.grids["samples"], sc.seed, b.q_box)
    rows = []
    for x in states:
        q, p = x[:n], x[n:]
        kin = np.abs(kinetic_residual_general(b.sys, b.md, b.j2, q, p)).max()
        pot = np.abs(potential_residual(b.sys, b.de, q)).max()
        gap = np.abs(vector_field_open_loop(b.form, x) - vector_field_target(b.form, x)).max()
        rows.append(list(x) + [kin, pot, gap])
    header = [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["kinetic", "potential", "match"]
    _write_csv(out / "residuals.csv", header, rows)

    ok = b.certified
    lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(sc: Scenario, out: Path) -> int:
    b = build_bundle(sc)
    lines = _header_lines(sc) + [f"regime: {b.regime.tag}"]
    if b.regime.tag == ODE_IN_QK:
        sol = b.extras["ode"]
        k = b.sys.k
        xs = np.linspace(*sol.domain, sc.grids["points"])
        rows = []
        for x in xs:
            q = np.zeros(b.sys.n)
            q[k - 1] = x
            rows.append([x, sol.a_of_qk(x), sol.F(x), scalar_pde_residual(b.md, b.j2, b.sys, q)])
        _write_csv(out / f"a_of_q{k}.csv", [f"q{k}", "a", "F", "residual"], rows)
        worst = max(abs(r[-1]) for r in rows)
        lines += [f"domain: [{sol.domain[0]}, {sol.domain[1]}]", f"max residual: {worst:.6e}"]
    elif b.regime.tag == CONSTANT_A:
        A = np.asarray(b.md, dtype=float)
        _write_csv(out / "md_inv.csv", [f"c{j + 1}" for j in range(A.shape[1])], A)
        lines.append("constant M_d^-1 with J2 = 0 solves the kinetic matching equation")
    else:
        pts = sample_states(b.sys.n, sc.grids["samples"], sc.seed, b.q_box)
        rows = []
        for x in pts:
            q = x[:b.sys.n]
            rows.append(list(q) + [b.md.a(q), scalar_pde_residual(b.md, b.j2, b.sys, q)])
        _write_csv(out / "a_on_grid.csv", [f"q{i + 1}" for i in range(b.sys.n)] + ["a", "residual"], rows)
        ch = b.reports.get("characteristic")
        if ch is not None:
            lines += [f"max drift along characteristics: {ch.max_drift:.6e}"]
            lines += [f"invariant {k} drift: {v:.6e}" for k, v in ch.invariant_drift.items()]
        lines.append(f"max residual: {max(abs(r[-1]) for r in rows):.6e}")
    (out / "solve.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(sc: Scenario, out: Path) -> int:
    b = build_bundle(sc)
    s = sc.sim
    n = b.sys.n
    q0 = np.asarray(s["q0"], dtype=float)
    p0 = np.asarray(s["p0"], dtype=float)
    if q0.size != n or p0.size != n:
        raise ScenarioError(f"sim.q0 and sim.p0 need {n} entries")
    traj = integrate(b.form, q0, p0, dt=s["dt"], T=s["T"], record_every=s["record_every"])
    traj.to_csv(out / "trajectory.csv")
    (out / "plot.gp").write_text(gnuplot_script("trajectory.csv", traj, title=f"{sc.system} closed loop"))
    audit = energy_audit(traj)
    lines = _header_lines(sc) + [
        f"final |q - q*|_inf: {traj.final_error(b.de.q_star):.6e}",
        f"H_d drift: {audit.total_drift:.6e}",
        f"largest H_d rise between samples: {audit.max_rise:.6e}",
    ]
    (out / "simulate.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ida-shaper", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("scenario", help="TOML scenario file")
    ap.add_argument("--out", default="out", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            if args.seed < 0:
                raise ScenarioError("--seed must be non-negative")
            sc = dataclasses.replace(sc, seed=args.seed)
    except ScenarioError as exc:
        print(f"ida-shaper: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](sc, out)
    except ScenarioError as exc:
        print(f"ida-shaper: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except IdaError as exc:
        print(f"ida-shaper: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"ida-shaper {args.command}: wrote results to {out} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
