from __future__ import annotations

import re

import pytest
from conftest import write_config

from contactsim.cli import main
from contactsim.config import ConfigError, build_config, config_keys, load_config, parse_text
from contactsim.geometry import generate_rect_mesh, save_mesh


def ledger(text: str) -> dict:
    return {m.group(1): float(m.group(2)) for m in re.finditer(r"^(\w+) = (\S+)$", text, re.M)}


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown key 'material.viscosity'"):
        parse_text("material.viscosity = 1\n")


def test_parse_rejects_duplicates_and_bad_values():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_text("grid.T = 1\ngrid.T = 2\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_text("# c\ngrid.n_steps = many\n")
    with pytest.raises(ConfigError, match="two components"):
        parse_text("load.f0 = 1, 2, 3\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_text("grid.T 1\n")


def test_parse_values():
    v = parse_text("load.f0 = 1.5, -2  # comment\noutput.stress_steps = 0, 4\nmaterial.kernel.kind = constant\n")
    assert v == {"load.f0": (1.5, -2.0), "output.stress_steps": [0, 4], "material.kernel.kind": "constant"}
    assert "material.kernel.damage_coupling" in config_keys()


def test_build_config_defaults_and_errors(tmp_path):
    cfg = build_config({})
    assert cfg.grid.n_steps == 32 and cfg.stress_steps == [0, 16, 32]
    with pytest.raises(ConfigError, match="stress_steps"):
        build_config({"output.stress_steps": [40]})
    with pytest.raises(ConfigError):
        build_config({"material.kernel.kind": "weird"})
    with pytest.raises(ConfigError, match="not found"):
        build_config({"mesh.file": "missing.mesh"}, tmp_path)


def test_mesh_file_relative_to_config(tmp_path):
    save_mesh(generate_rect_mesh(3, 2, {"left": "Gamma2", "right": "Gamma2", "bottom": "Gamma3", "top": "Gamma1"}),
              tmp_path / "m.mesh")
    p = tmp_path / "c.cfg"
    p.write_text("mesh.file = m.mesh\ngrid.n_steps = 4\n")
    cfg = load_config(p)
    assert cfg.mesh.n_triangles == 12


def test_run_demo(demo_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(demo_path), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["eta.csv", "report.txt", "stress_k0.csv", "stress_k16.csv", "stress_k32.csv", "u.csv",
                     "wear.csv", "xi.csv"]
    report = (out / "report.txt").read_text()
    assert "m > m_0: " in report and "m > beta: " in report
    assert "VI certificate passed: True" in report
    assert "converged" in capsys.readouterr().out


def test_run_negative_kappa(tmp_path, capsys):
    cfg = write_config(tmp_path, {"material.kappa": "-1.0"})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "kappa" in capsys.readouterr().err


def test_run_unwritable_output(demo_path, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--config", str(demo_path), "--out", str(blocker / "sub")]) == 1
    assert "not writable" in capsys.readouterr().err


def test_run_bad_thread_setting(demo_path, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CONTACTSIM_THREADS", "lots")
    assert main(["run", "--config", str(demo_path), "--out", str(tmp_path)]) == 1
    assert "CONTACTSIM_THREADS" in capsys.readouterr().err


def test_run_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_verify_bogus(capsys):
    assert main(["verify", "--suite", "bogus"]) == 1
    assert "unknown suite" in capsys.readouterr().err


def test_verify_heat(capsys):
    assert main(["verify", "--suite", "heat"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2


def test_estimate_demo(demo_path, capsys):
    assert main(["estimate", "--config", str(demo_path)]) == 0
    out = capsys.readouterr().out
    assert re.search(r"^m > m_0: (true|false)$", out, re.M)
    vals = ledger(out)
    assert vals["m"] == 2.0


def test_estimate_without_pressure(tmp_path, capsys):
    cfg = write_config(tmp_path, {"material.p_star": "0.0", "material.L_p": "0.0"})
    assert main(["estimate", "--config", str(cfg)]) == 0
    vals = ledger(capsys.readouterr().out)
    assert vals["alpha"] == vals["beta"] == vals["gamma"] == 0.0


def test_estimate_verdict_flips(demo_path, tmp_path, capsys):
    main(["estimate", "--config", str(demo_path)])
    base = capsys.readouterr().out
    cfg = write_config(tmp_path, {"material.theta_A": "100.0"})
    main(["estimate", "--config", str(cfg)])
    stiff = capsys.readouterr().out
    assert "m > m_0: false" in base and "m > m_0: true" in stiff
    assert ledger(stiff)["m"] == 100 * ledger(base)["m"]


def test_mesh_info(tmp_path, capsys):
    p = tmp_path / "m.mesh"
    save_mesh(generate_rect_mesh(4, 2, {"left": "Gamma1", "right": "Gamma2", "bottom": "Gamma3", "top": "Gamma2"}), p)
    assert main(["mesh-info", "--mesh", str(p)]) == 0
    out = capsys.readouterr().out
    assert "triangles: 16" in out and "contact curve: 5 nodes, open" in out


def test_mesh_info_missing(tmp_path, capsys):
    assert main(["mesh-info", "--mesh", str(tmp_path / "nope")]) == 1
    assert "cannot read mesh" in capsys.readouterr().err
