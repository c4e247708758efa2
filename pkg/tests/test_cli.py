import json
import os

import numpy as np
import pytest

from collapse_lab import cli, config
from collapse_lab.config import ConfigError, parse_config

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def cfg_path(name):
    return os.path.join(CONFIG_DIR, name)


def run_cli(*argv):
    return cli.main(list(argv))


def test_parse_config_roundtrip():
    cfg = parse_config("problem.gamma = 0.5\n"
                       "problem.mass = 1.0\n"
                       "problem.n = 3\n"
                       "init.positions = -1, 0, 1  # spread\n")
    p = cfg.params()
    assert p.gamma == 0.5 and p.h == 0.25
    state, _ = cfg.initial_state()
    np.testing.assert_array_equal(state.x, [-1.0, 0.0, 1.0])


def test_parse_config_diagnostics():
    with pytest.raises(ConfigError, match=r":1: unknown key 'problem.gama'"):
        parse_config("problem.gama = 0.5\n")
    with pytest.raises(ConfigError, match=r":2: bad value"):
        parse_config("problem.gamma = 0.5\nproblem.n = three\n")
    with pytest.raises(ConfigError, match=r":3: duplicate"):
        parse_config("problem.gamma = 0.5\nproblem.n = 3\nproblem.n = 4\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("problem.gamma 0.5\n")


def test_exactly_one_init_variant():
    base = "problem.gamma = 0.5\nproblem.mass = 1\nproblem.n = 3\n"
    with pytest.raises(ConfigError, match="exactly one init"):
        parse_config(base).initial_state()
    with pytest.raises(ConfigError, match="exactly one init"):
        parse_config(base + "init.positions = -1,0,1\ninit.u = 0.1\n"
                     "init.v = 0.1\n").initial_state()
    state, _ = parse_config(base + "init.u = 0.2\ninit.v = 0.3\n").initial_state()
    assert abs(np.sum(state.x)) < 1e-15


def test_position_count_mismatch_is_config_error():
    with pytest.raises(ConfigError, match="entries"):
        parse_config("problem.gamma = 0.5\nproblem.mass = 1\nproblem.n = 4\n"
                     "init.positions = -1, 0, 1\n").initial_state()


def test_simulate_gamma0_rate(tmp_path):
    code = run_cli("simulate", "--config", cfg_path("gamma0_rate.cfg"),
                   "--out", str(tmp_path), "--quiet")
    assert code == 0
    csv_file = tmp_path / "gamma0_rate.csv"
    rows = csv_file.read_text().splitlines()
    header = rows[0].split(",")
    assert header == ["t", "x_1", "x_2", "x_3", "G", "U", "W", "phi", "I2",
                      "com", "min_gap", "virial_residual"]
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    t, i2 = data[:, 0], data[:, header.index("I2")]
    slope = np.polyfit(t, i2, 1)[0]
    assert slope == pytest.approx(0.625, rel=1e-6)
    summary = json.loads((tmp_path / "gamma0_rate.json").read_text())
    assert summary["classification"] == "GlobalObserved"
    assert summary["inconsistent"] is False
    assert (tmp_path / "gamma0_rate.gp").exists()
    assert (tmp_path / "gamma0_rate.png").exists()


def test_trajectory_csv_17_digit_roundtrip(tmp_path):
    run_cli("simulate", "--config", cfg_path("ge_demo.cfg"),
            "--out", str(tmp_path), "--quiet")
    path = tmp_path / "ge_demo.csv"
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    rebuilt = [lines[0]]
    for line in lines[1:]:
        rebuilt.append(",".join("%.17g" % float(v) for v in line.split(",")))
    assert "\n".join(rebuilt) + "\n" == raw.decode()


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_cli("simulate", "--config", cfg_path("bu_demo.cfg"),
                "--out", str(out), "--quiet")
    assert (a / "bu_demo.csv").read_bytes() == (b / "bu_demo.csv").read_bytes()


def test_bu_demo_summary(tmp_path):
    code = run_cli("simulate", "--config", cfg_path("bu_demo.cfg"),
                   "--out", str(tmp_path), "--quiet")
    assert code == 0
    summary = json.loads((tmp_path / "bu_demo.json").read_text())
    assert summary["certificate"]["verdict"] == "BlowupCertified"
    assert summary["classification"] == "BlowupObserved"
    assert summary["outcome"]["kind"] == "Collision"
    assert summary["outcome"]["t_star"] > 0.0
    assert summary["inconsistent"] is False


def test_criteria_subcommand(capsys):
    code = run_cli("criteria", "--config", cfg_path("ge_demo.cfg"))
    assert code == 0
    out = capsys.readouterr().out
    assert "verdict: GlobalCertified" in out
    assert "GE_4_8: threshold 1 measured 0.5" in out


def test_malformed_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("problem.gamma = maybe\n")
    assert run_cli("criteria", "--config", str(bad)) == 2
    assert "bad value" in capsys.readouterr().err


def test_phase_plane_outputs_and_job_determinism(tmp_path):
    outs = []
    for jobs, sub in (("1", "j1"), ("2", "j2")):
        out = tmp_path / sub
        code = run_cli("phase-plane", "--config", cfg_path("phase_smoke.cfg"),
                       "--out", str(out), "--jobs", jobs, "--quiet")
        assert code == 0
        outs.append(out)
    names = ["grid.csv", "critical_curve.csv", "bu_w_curve.csv",
             "bu_c_curve.csv", "ge_curve.csv", "separatrix.csv"]
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert (outs[0] / "phase_plane.gp").exists()
    assert (outs[0] / "phase_plane.png").exists()
    grid = (outs[0] / "grid.csv").read_text().splitlines()
    assert grid[0] == "u,v,class"
    assert len(grid) == 1 + 8 * 8


def test_cn_subcommand(tmp_path):
    code = run_cli("cn", "--n-min", "3", "--n-max", "6", "--out", str(tmp_path),
                   "--quiet")
    assert code == 0
    rows = (tmp_path / "cn.csv").read_text().splitlines()
    assert rows[0] == "N,C(N),C(N)/N,gauss_lower,lambda1_upper"
    first = [float(v) for v in rows[1].split(",")]
    assert first[0] == 3 and first[1] == pytest.approx(0.5, abs=1e-9)
    assert first[2] == pytest.approx(1.0 / 6.0, abs=1e-9)
    for row in rows[1:]:
        n, cn, _, lower, upper = (float(v) for v in row.split(","))
        assert lower <= cn * (1.0 + 1e-12) and cn <= upper * (1.0 + 1e-12)


def test_converge_subcommand(tmp_path):
    code = run_cli("converge", "--config", cfg_path("converge_gaussian.cfg"),
                   "--out", str(tmp_path), "--quiet")
    assert code == 0
    rows = (tmp_path / "converge.csv").read_text().splitlines()
    assert rows[0].startswith("n,h,discrete_i2")
    assert len(rows) == 6


def test_critical_point_subcommand(capsys):
    code = run_cli("critical-point", "--config", cfg_path("phase_smoke.cfg"))
    assert code == 0
    out = capsys.readouterr().out
    assert "0.1145066" in out
    assert "kind: Max" in out
