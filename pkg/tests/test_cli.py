import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import GOLDEN, MODELS, model_path
from smech.cli import main
from smech.modelio import read_trajectory


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.parametrize("name,extra", [
    ("dirac", ()),
    ("n2", ()),
    ("supersphere", ()),
    ("freeparticle", ()),
    ("constrained", ("--constrained",)),
])
def test_tulczyjew_golden(name, extra, tmp_path, capsys):
    out = tmp_path / f"{name}.txt"
    assert run("tulczyjew", model_path(name), *extra, "--out", out) == 0
    got = out.read_text()
    want = (GOLDEN / f"{name}.tulczyjew.txt").read_text()
    assert got == want


def test_tulczyjew_stdout(capsys):
    assert run("tulczyjew", model_path("dirac")) == 0
    out = capsys.readouterr().out
    assert "p_psi_p = -0.5*psi_p" in out
    assert "dp_psi_m = m*psi_p + 0.5*dpsi_m" in out


def test_el_reports_normal_form(capsys):
    assert run("el", model_path("supersphere")) == 0
    out = capsys.readouterr().out
    assert "ddth = dph^2*cos(th)*sin(th)" in out


def test_el_constrained(capsys):
    assert run("el", model_path("constrained"), "--constrained") == 0
    out = capsys.readouterr().out
    assert "dpsi_m = 0" in out
    assert "normal form:" in out


def test_reparam_target_q_flag(tmp_path):
    out = tmp_path / "r.json"
    assert run("solve", model_path("rotation"), "--field", "rot", "--q", 2,
               "--t1", 1, "--dt", "1e-2", "--init", "th_p=z1",
               "--out", out, "--format", "json", "--tol", "1e-6") == 0
    mp = tmp_path / "emb.rp"
    mp.write_text("reparam { z1 = z1, z2 = z2 }\n")
    out2 = tmp_path / "r4.json"
    assert run("reparam", out, "--map", mp, "--target-q", 4, "--out", out2) == 0
    assert read_trajectory(out2).q == 4


def test_solve_json_meta(tmp_path):
    out = tmp_path / "m.json"
    assert run("solve", model_path("dirac"), "--q", 2, "--t1", 1, "--dt", "1e-2",
               "--init", "psi_p=z1", "--out", out, "--format", "json",
               "--tol", "1e-6") == 0
    import json

    payload = json.loads(out.read_text())
    meta = payload["meta"]
    assert meta["q"] == 2
    assert meta["dt"] == pytest.approx(1e-2)
    assert len(meta["model"]) == 16  # content hash of the rendered model


def test_el_reports_implicit(tmp_path, capsys):
    bad = tmp_path / "zero.sm"
    bad.write_text("model zero coords { x: even } lagrangian: 0\n")
    assert run("el", bad) == 0
    assert "implicit" in capsys.readouterr().out


def test_parse_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.sm"
    bad.write_text("model bad coords { psi: odd } lagrangian: psi\n")
    assert run("tulczyjew", bad) == 2
    err = capsys.readouterr().err
    assert "odd" in err
    assert run("tulczyjew", tmp_path / "missing.sm") == 2


def test_usage_error_exits_2(capsys):
    assert run("nonsense") == 2


def test_solve_writes_and_verifies(tmp_path, capsys):
    out = tmp_path / "dirac.csv"
    code = run("solve", model_path("dirac"), "--q", 2, "--t0", 0, "--t1", 5,
               "--dt", "1e-3", "--init", "psi_p=z1", "--init", "psi_m=z2",
               "--out", out, "--tol", "1e-8", "--constant", "psi_p*psi_m")
    assert code == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "constant psi_p*psi_m" in text
    traj = read_trajectory(out)
    assert traj.q == 2 and traj.n_samples == 5001


def test_solve_outputs_are_byte_identical(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        assert run("solve", model_path("dirac"), "--q", 2, "--t1", 2,
                   "--dt", "1e-2", "--init", "psi_p=z1", "--init", "psi_m=z2",
                   "--out", out, "--tol", "1e-6") == 0
    assert a.read_bytes() == b.read_bytes()


def test_solve_then_verify_roundtrip(tmp_path, capsys):
    out = tmp_path / "t.json"
    assert run("solve", model_path("dirac"), "--q", 2, "--t1", 5, "--dt", "1e-3",
               "--init", "psi_p=z1", "--init", "psi_m=z2",
               "--out", out, "--format", "json", "--tol", "1e-8") == 0
    assert run("verify", model_path("dirac"), out, "--tol", "1e-5") == 0
    assert run("verify", model_path("dirac"), out, "--tol", "1e-5",
               "--diff-order", 4) == 0


def test_verify_corrupted_trajectory_fails(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert run("solve", model_path("dirac"), "--q", 2, "--t1", 5, "--dt", "1e-3",
               "--init", "psi_p=z1", "--init", "psi_m=z2",
               "--out", out, "--tol", "1e-8") == 0
    traj = read_trajectory(out)
    data = traj.data.copy()
    data[:, 0] *= 1.05
    from smech.modelio import write_trajectory
    from smech.trajectory import Trajectory

    bad = tmp_path / "bad.csv"
    write_trajectory(Trajectory(traj.q, traj.colspec, traj.times, data), bad)
    assert run("verify", model_path("dirac"), bad, "--tol", "1e-6") == 1


def test_solve_field_rotation(tmp_path, capsys):
    out = tmp_path / "rot.csv"
    assert run("solve", model_path("rotation"), "--field", "rot", "--q", 3,
               "--t1", 5, "--dt", "1e-3", "--init", "th_p=z1+2*z1^z2^z3",
               "--init", "th_m=z2", "--out", out, "--tol", "1e-8") == 0
    assert run("verify", model_path("rotation"), out, "--field", "rot",
               "--tol", "1e-4") == 0


def test_solve_implicit_model_suggests_verify(tmp_path, capsys):
    bad = tmp_path / "zero.sm"
    bad.write_text("model zero coords { x: even } lagrangian: 0\n")
    assert run("solve", bad, "--q", 0) == 2
    assert "verify" in capsys.readouterr().err


def test_solve_divergence_exits_1(tmp_path, capsys):
    m = tmp_path / "blow.sm"
    m.write_text(
        "model blow coords { x: even } lagrangian: (1/2)*dx^2 + (1/3)*x^3\n")
    out = tmp_path / "blow.csv"
    code = run("solve", m, "--q", 0, "--t1", 3, "--dt", "1e-3",
               "--init", "x=1", "--init", "dx=1", "--out", out)
    assert code == 1
    assert "diverged" in capsys.readouterr().err
    assert out.exists()  # partial trajectory is still written


def test_symcheck_pass_and_fail(capsys):
    assert run("symcheck", model_path("dirac"), "--field", "rot") == 0
    assert "PASS" in capsys.readouterr().out
    assert run("symcheck", model_path("n2"), "--field", "X1") == 0
    assert run("symcheck", model_path("n2"), "--field", "X2") == 0
    assert run("symcheck", model_path("n2_harmonic"), "--field", "Xtrans") == 1
    assert "FAIL" in capsys.readouterr().out


def test_symcheck_with_numeric_advisory(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert run("solve", model_path("n2_harmonic"), "--q", 2, "--t1", 3,
               "--dt", "1e-3", "--init", "x=0.4", "--init", "dx=0.2",
               "--init", "psi_p=z1", "--init", "psi_m=z2",
               "--out", out, "--tol", "1e-6") == 0
    assert run("symcheck", model_path("n2_harmonic"), "--field", "X1",
               "--traj", out) == 0
    assert "numeric (advisory)" in capsys.readouterr().out


def test_reparam_pipeline(tmp_path, capsys):
    out = tmp_path / "rot3.json"
    assert run("solve", model_path("rotation"), "--field", "rot", "--q", 3,
               "--t1", 5, "--dt", "1e-3",
               "--init", "th_p=z1+0.5*z3", "--init", "th_m=z2",
               "--out", out, "--format", "json", "--tol", "1e-8") == 0
    out2 = tmp_path / "rot2.json"
    assert run("reparam", out, "--map", MODELS / "proj32.rp", "--out", out2) == 0
    traj2 = read_trajectory(out2)
    assert traj2.q == 2
    assert run("verify", model_path("rotation"), out2, "--field", "rot",
               "--tol", "1e-4") == 0


def test_constants_subcommand(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert run("solve", model_path("dirac"), "--q", 2, "--t1", 5, "--dt", "1e-3",
               "--init", "psi_p=z1", "--init", "psi_m=z2",
               "--out", out, "--tol", "1e-8") == 0
    assert run("constants", model_path("dirac"), out,
               "--expr", "psi_p*psi_m", "--tol", "1e-9") == 0
    # psi_p itself oscillates, so it must fail
    assert run("constants", model_path("dirac"), out,
               "--expr", "psi_p", "--tol", "1e-3") == 1


def test_solve_q0_is_classical_body(tmp_path, capsys):
    out = tmp_path / "free.csv"
    assert run("solve", model_path("freeparticle"), "--q", 0, "--t1", 2,
               "--dt", "1e-2", "--init", "x=1", "--init", "dx=0.5",
               "--out", out, "--tol", "1e-10") == 0
    traj = read_trajectory(out)
    masks, xs = traj.series("x")
    assert masks == [0]
    assert np.max(np.abs(xs[:, 0] - (1.0 + 0.5 * traj.times))) < 1e-12


def test_cli_module_entrypoint():
    env = dict(os.environ)
    src = str(MODELS.parents[1])
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    proc = subprocess.run(
        [sys.executable, "-m", "smech.cli", "tulczyjew", str(model_path("dirac"))],
        capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert "p_psi_p = -0.5*psi_p" in proc.stdout


def test_solve_field_with_parameter(tmp_path):
    # a declared field may reference model parameters; solve and verify must
    # bind them on the field route too
    m = tmp_path / "wrot.sm"
    m.write_text(
        "model wrot\n"
        "coords { th_p: odd  th_m: odd }\n"
        "params { w = 2.0 }\n"
        "field rot { th_p = w*th_m  th_m = -w*th_p }\n")
    out = tmp_path / "w.csv"
    assert run("solve", m, "--field", "rot", "--q", 2, "--t1", 2,
               "--dt", "1e-3", "--init", "th_p=z1", "--init", "th_m=z2",
               "--out", out, "--tol", "1e-6") == 0
    assert run("verify", m, out, "--field", "rot", "--tol", "1e-4") == 0
    traj = read_trajectory(out)
    _, tp = traj.series("th_p")
    assert tp[-1, 0] == pytest.approx(np.cos(2.0 * 2.0), abs=1e-8)


def test_solve_field_constant_requires_lagrangian(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = run("solve", model_path("rotation"), "--field", "rot", "--q", 2,
               "--t1", 1, "--dt", "1e-2", "--init", "th_p=z1", "--out", out,
               "--constant", "th_p*th_m", "--tol", "1e-6")
    assert code == 2
    assert "lagrangian" in capsys.readouterr().err
