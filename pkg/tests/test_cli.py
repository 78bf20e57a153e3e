import json
import os
import subprocess
import sys

import pytest

from dcnls.cli import run_command


def _run(args, cwd):
    return run_command(args + ["--out", os.path.join(cwd, "runs")])


def test_groundstate_smoke(tmp_path):
    code = _run(["groundstate", "--mu", "0.05", "--grid-n", "256"], str(tmp_path))
    assert code == 0
    run_dir = tmp_path / "runs" / "groundstate-mu0.05-n256"
    assert (run_dir / "Q_mu.csv").exists()
    assert (run_dir / "functional_report.csv").exists()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "OK"
    assert "Q_mu.csv" in manifest["files"]
    header = (run_dir / "Q_mu.csv").read_text().splitlines()[0]
    assert header == "r[length],Re,Im"


def test_spectrum_smoke(tmp_path):
    code = _run(["spectrum", "--mu", "0.02", "--grid-n", "256", "--lmax", "2",
                 "--k", "3"], str(tmp_path))
    assert code == 0
    run_dir = tmp_path / "runs" / "spectrum-mu0.02-n256"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["summary"]["status"] == "PASSED"


def test_unknown_flag_exits_2(tmp_path, capsys):
    assert run_command(["groundstate", "--bogus", "1"]) == 2


def test_unknown_command_exits_2():
    assert run_command(["frobnicate"]) == 2


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mu = 0.03\ngrid_n = 512\n")
    code = run_command(["groundstate", "--config", str(cfg), "--grid-n", "256",
                        "--out", str(tmp_path / "runs")])
    assert code == 0
    # CLI overrides the file; the file overrides defaults
    assert (tmp_path / "runs" / "groundstate-mu0.03-n256").exists()


def test_bad_config_key_exits_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense = 1\n")
    assert run_command(["groundstate", "--config", str(cfg)]) == 2


def test_out_of_range_coupling_exits_2(tmp_path):
    code = _run(["groundstate", "--mu", "0.3", "--grid-n", "256"], str(tmp_path))
    assert code == 2
    run_dir = tmp_path / "runs" / "groundstate-mu0.3-n256"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"].startswith("FAILED (configuration)")


def test_numerical_failure_exits_1(tmp_path, monkeypatch):
    import dcnls.cli as cli

    def boom(cfg, run_dir):
        raise RuntimeError("synthetic solver breakdown")

    monkeypatch.setitem(cli._COMMANDS, "groundstate", boom)
    code = _run(["groundstate", "--grid-n", "256"], str(tmp_path))
    assert code == 1
    run_dir = tmp_path / "runs" / "groundstate-mu0-n256"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"].startswith("FAILED (numerical)")


def test_determinism_byte_identical(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    for out in (out1, out2):
        code = run_command(["groundstate", "--mu", "0.01", "--grid-n", "256",
                            "--threads", "1", "--out", str(out)])
        assert code == 0
    f1 = (out1 / "groundstate-mu0.01-n256" / "Q_mu.csv").read_bytes()
    f2 = (out2 / "groundstate-mu0.01-n256" / "Q_mu.csv").read_bytes()
    assert f1 == f2
    r1 = (out1 / "groundstate-mu0.01-n256" / "functional_report.csv").read_bytes()
    r2 = (out2 / "groundstate-mu0.01-n256" / "functional_report.csv").read_bytes()
    assert r1 == r2


def test_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "dcnls.cli"],
        input="", capture_output=True, text=True,
    )
    assert proc.returncode == 2   # missing required subcommand
