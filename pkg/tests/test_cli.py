import csv
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from idashaper.cases import VtolParams
from idashaper.cli import EXIT_FAIL, EXIT_OK, EXIT_SCHEMA, main
from idashaper.errors import ScenarioError
from idashaper.scenario import load_scenario, parse_scenario
from idashaper.sim import Trajectory

SCEN = Path(__file__).resolve().parent.parent / "scenarios"


def run(tmp_path, cmd, name, *extra):
    out = tmp_path / f"{cmd}-{Path(name).stem}"
    code = main([cmd, str(SCEN / name if not Path(name).is_absolute() else name), "--out", str(out), *extra])
    return code, out


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_verify_vtol_passes(tmp_path):
    code, out = run(tmp_path, "verify", "vtol.toml")
    assert code == EXIT_OK
    report = (out / "report.txt").read_text()
    assert "overall: PASS" in report
    assert "[PASS] necessary condition on the unactuated force Jacobian" in report
    rows = list(csv.reader(open(out / "residuals.csv")))
    assert rows[0][-3:] == ["kinetic", "potential", "match"]
    assert len(rows) == 201
    assert max(float(r[-1]) for r in rows[1:]) <= 1e-8


def test_verify_identity_md_fails(tmp_path):
    code, out = run(tmp_path, "verify", "vtol_mdI.toml")
    assert code == EXIT_FAIL
    report = (out / "report.txt").read_text()
    assert "[FAIL] necessary condition on the unactuated force Jacobian" in report
    assert "overall: FAIL" in report


def test_verify_spider_passes(tmp_path):
    code, out = run(tmp_path, "verify", "spider.toml")
    assert code == EXIT_OK
    report = (out / "report.txt").read_text()
    assert "regime: characteristic" in report
    assert "printed candidate residual" in report


@pytest.mark.parametrize("text", [
    "schema_version = 1\n[system]\nname = 'acrobot'\n",
    "schema_version = 2\n[system]\nname = 'vtol'\n",
    "schema_version = 1\n[system]\nname = 'vtol'\n[kv]\ndiag = 'one'\n",
    "schema_version = 1\n[system]\nname = 'vtol'\nparams = { mass = 2.0 }\n",
    "schema_version = 1\n[system\nname = 'vtol'\n",
])
def test_schema_errors_exit_2(tmp_path, text):
    p = write(tmp_path, text)
    assert main(["verify", str(p), "--out", str(tmp_path / "o")]) == EXIT_SCHEMA


def test_missing_file_exit_2(tmp_path):
    assert main(["verify", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")]) == EXIT_SCHEMA


def test_negative_seed_rejected(tmp_path):
    assert main(["verify", str(SCEN / "spider.toml"), "--seed", "-1", "--out", str(tmp_path)]) == EXIT_SCHEMA


def test_defaults_merged():
    sc = parse_scenario({"schema_version": 1, "system": {"name": "vtol"}, "sim": {"T": 2.0}})
    assert sc.sim["T"] == 2.0 and sc.sim["dt"] == 1e-3
    assert sc.kv == [1.0, 0.5]
    assert load_scenario(SCEN / "pendubot.toml").md["b"] == [-5.0]
    with pytest.raises(ScenarioError):
        parse_scenario({"schema_version": 1})


def test_solve_pendubot_residuals(tmp_path):
    code, out = run(tmp_path, "solve", "pendubot.toml")
    assert code == EXIT_OK
    rows = list(csv.reader(open(out / "a_of_q2.csv")))
    assert rows[0] == ["q2", "a", "F", "residual"]
    res = np.array([float(r[3]) for r in rows[1:]])
    assert len(res) == 241 and np.abs(res).max() <= 1e-8
    q2 = np.array([float(r[0]) for r in rows[1:]])
    assert q2[0] == pytest.approx(-1.2) and q2[-1] == pytest.approx(1.2)


def test_solve_vtol_constant(tmp_path):
    code, out = run(tmp_path, "solve", "vtol.toml")
    assert code == EXIT_OK
    A = np.loadtxt(out / "md_inv.csv", delimiter=",", skiprows=1)
    assert np.allclose(np.linalg.inv(A), VtolParams().md(), rtol=1e-12)


def test_simulate_spider_deterministic(tmp_path):
    text = (SCEN / "spider.toml").read_text().replace("T = 10.0", "T = 1.0")
    p = write(tmp_path, text)
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["simulate", str(p), "--out", str(a)]) == EXIT_OK
    env = dict(os.environ, IDA_SHAPER_THREADS="3")
    subprocess.run([sys.executable, "-m", "idashaper.cli", "simulate", str(p), "--out", str(b)],
                   check=True, env=env, capture_output=True)
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert (a / "plot.gp").exists()
    tr = Trajectory.from_csv(a / "trajectory.csv")
    assert tr.t[-1] == pytest.approx(1.0)
    assert np.all(np.diff(tr.Hd) <= 1e-9)


def test_verify_deterministic_with_seed(tmp_path):
    outs = []
    for tag in ("x", "y"):
        out = tmp_path / tag
        assert main(["verify", str(SCEN / "spider.toml"), "--seed", "7", "--out", str(out)]) == EXIT_OK
        outs.append((out / "residuals.csv").read_bytes())
    assert outs[0] == outs[1]
    other = tmp_path / "z"
    main(["verify", str(SCEN / "spider.toml"), "--seed", "8", "--out", str(other)])
    assert (other / "residuals.csv").read_bytes() != outs[0]


def test_simulate_undamped_conserves(tmp_path):
    text = (SCEN / "vtol.toml").read_text().replace("diag = [1.0, 0.5]", "diag = [0.0, 0.0]")
    text = text.replace("T = 30.0", "T = 3.0").replace("q0 = [6.0, -5.0, -1.0]", "q0 = [1.0, -1.0, -0.3]")
    p = write(tmp_path, text)
    out = tmp_path / "o"
    assert main(["simulate", str(p), "--out", str(out)]) == EXIT_OK
    tr = Trajectory.from_csv(out / "trajectory.csv")
    assert np.abs(tr.Hd - tr.Hd[0]).max() <= 1e-6


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "idashaper.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "verify" in r.stdout and "--seed" in r.stdout
