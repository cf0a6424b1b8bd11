import json
import subprocess
import sys

import pytest

from skewflow import __version__
from skewflow.cli import ExperimentConfig, build_parser, config_from_args, main, read_config_file, run


def test_shuffle_verify_exit_zero(tmp_path, capsys):
    assert main(["shuffle-verify", "--mmax", "3", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "shuffle-verify.json").read_text())
    assert doc["passed"] and doc["version"] == __version__
    assert doc["config"]["params"]["mmax"] == 3
    rows = (tmp_path / "shuffle-verify.csv").read_text().splitlines()
    assert rows[0] == "case,m,n,k,terms,residual,pass"
    assert all(line.endswith(",1") for line in rows[1:])
    assert "PASS" in capsys.readouterr().out


def test_malformed_flag_gives_usage(capsys):
    assert main(["thresholds", "--bogus"]) != 0
    assert "usage:" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert main(["nope"]) != 0
    assert "usage:" in capsys.readouterr().err


def test_bad_value_is_reported(tmp_path, capsys):
    assert main(["frac-check", "--alpha", "0.1,zz", "--out", str(tmp_path)]) == 2
    assert "alpha" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# thresholds run\nd = 1,2\nk_max = 2\nseed = 5\n")
    ns = build_parser().parse_args(["thresholds", "--config", str(cfg), "--k-max", "4"])
    c = config_from_args(ns)
    assert c.params["d"] == (1, 2) and c.params["k_max"] == 4 and c.seed == 5


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign here\n")
    with pytest.raises(ValueError):
        read_config_file(bad)
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("colour = blue\n")
    assert main(["thresholds", "--config", str(unknown), "--out", str(tmp_path)]) == 2


def test_thresholds_table(tmp_path):
    assert main(["thresholds", "--d", "1", "--k-max", "3", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "thresholds.csv").read_text().splitlines()
    assert "1,flow-k1,1/4,0.25" in lines
    assert "1,existence,1/6,0.16666666666666666" in lines
    assert "1,flow-k3,1/12,0.08333333333333333" in lines


def test_bound_scan_exit_status_tracks_gate(tmp_path):
    assert main(["bound-scan", "--d", "1", "--k", "2", "--out", str(tmp_path)]) == 0
    assert main(["bound-scan", "--d", "1", "--k", "1", "--out", str(tmp_path)]) == 1


def test_csv_bytes_identical_across_workers(tmp_path):
    args = ["fbm-check", "--h", "0.3", "--n", "8", "--count", "3000", "--method", "circulant"]
    for w in (1, 3):
        assert main(args + ["--workers", str(w), "--out", str(tmp_path / f"w{w}")]) == 0
    a = (tmp_path / "w1" / "fbm-check.csv").read_bytes()
    b = (tmp_path / "w3" / "fbm-check.csv").read_bytes()
    assert a == b and b"\r" not in a


def test_run_api():
    rep = run(ExperimentConfig("thresholds", {"d": (2,), "k_max": 1}))
    assert rep.passed and [r["name"] for r in rep.rows][-1] == "flow-k1"
    with pytest.raises(ValueError):
        run(ExperimentConfig("nope", {}))


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "skewflow", "thresholds", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and (tmp_path / "thresholds.json").exists()
