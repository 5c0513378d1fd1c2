import csv
import json
import math
import os
import subprocess
import sys

import pytest

from flrwdust.cli import SWEEP_HEADER, run_config

BASE = """schema = 1
seed = 3
[scale_factor]
{scale}
[initial_data]
{data}
"""


def write(tmp_path, scale='kind = "power"\nl = 0.5', data='n = 1\nv0 = "-arctan"\nepsilon = 0.1', extra=""):
    p = tmp_path / "cfg.toml"
    p.write_text(BASE.format(scale=scale, data=data) + extra)
    return str(p)


def test_zero_data_thresholds(tmp_path):
    cfg = write(tmp_path, data='n = 2\nv0 = "zero"')
    out = tmp_path / "out"
    assert run_config(["thresholds", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "thresholds.json").read_text())
    assert rep["analytic_bound"] == "inf" and rep["M0"] == 0.0
    assert (out / "summary.txt").exists()


def test_blowup_report(tmp_path):
    cfg = write(tmp_path, extra="[blowup]\nt_max = 1e6\n")
    out = tmp_path / "out"
    assert run_config(["blowup", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "blowup.json").read_text())
    assert rep["verdict"] == "blowup"
    assert rep["t_blow"] == pytest.approx(math.expm1(10.0), rel=1e-6)
    assert rep["epsilon_threshold"]["name"] == "eps3"
    assert "eps3" in (out / "summary.txt").read_text()
    rows = list(csv.reader((out / "trace.csv").open()))
    assert rows[0] == ["t", "min_det"]


def test_malformed_config_leaves_no_output(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("schema = 1\n[scale_factor\nkind=")
    out = tmp_path / "out"
    assert run_config(["blowup", "--config", str(p), "--out", str(out)]) == 2
    assert not out.exists() or not any(out.iterdir())


def test_wrong_schema_version(tmp_path):
    cfg = write(tmp_path).replace("", "")
    text = open(cfg).read().replace("schema = 1", "schema = 2")
    open(cfg, "w").write(text)
    assert run_config(["thresholds", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_unknown_key_rejected(tmp_path):
    cfg = write(tmp_path, extra="[sweep]\nepsilon = [0.1]\n")
    assert run_config(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_sweep_amplitude_ceiling(tmp_path):
    # arctan data: eps_max = 0.9 / (pi/2 + 1 + 3 sqrt(3)/8) ~ 0.28
    cfg = write(tmp_path, extra="[sweep]\nepsilons = [0.1, 0.3]\n")
    assert run_config(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_empty_sweep(tmp_path):
    cfg = write(tmp_path, extra="[sweep]\nepsilons = []\n")
    assert run_config(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_expanding_sweep_has_no_blowup(tmp_path):
    cfg = write(tmp_path, scale='kind = "exp"\nH = 1.0', extra="[sweep]\nepsilons = [0.05, 0.01]\nt_max = 1e4\n")
    out = tmp_path / "out"
    assert run_config(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert list(rows[0]) == SWEEP_HEADER
    assert all(r["t_blow"] == "none" and r["analytic_bound"] == "inf" and r["regime"] == "H1" for r in rows)


def test_sweep_deterministic_across_workers(tmp_path):
    extra = "[sweep]\nepsilons = [0.25, 0.2, 0.1]\nt_max = 1e5\n"
    cfg = write(tmp_path, scale='kind = "power"\nl = 0.25', extra=extra)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_config(["sweep", "--config", cfg, "--out", str(a), "--jobs", "1"]) == 0
    assert run_config(["sweep", "--config", cfg, "--out", str(b), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "sweep.json", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = list(csv.DictReader((a / "sweep.csv").open()))
    assert float(rows[1]["t_blow"]) == pytest.approx(11.25, rel=1e-8)


def test_unwritable_output(tmp_path):
    cfg = write(tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_config(["thresholds", "--config", cfg, "--out", str(blocker / "sub")]) == 3


def test_out_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path)
    monkeypatch.setenv("FLRWDUST_OUT", str(tmp_path / "env"))
    assert run_config(["thresholds", "--config", cfg]) == 0
    assert (tmp_path / "env" / "thresholds.json").exists()


def test_simulate_and_spherical(tmp_path):
    cfg = write(tmp_path, data='n = 1\nv0 = "-arctan"\nepsilon = 0.2\nrho0 = "gaussian"',
                extra='[simulate]\ntimes = [0.0, 2.0]\nalpha_grid = [-1.0, 1.0, 3]\n'
                      '[spherical]\nalphas = [0.5]\n')
    out = tmp_path / "out"
    assert run_config(["simulate", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "density.csv").open()))
    assert len(rows) == 6 and float(rows[0]["x0"]) == -1.0
    assert run_config(["spherical", "--config", cfg, "--out", str(out)]) == 0
    fit = json.loads((out / "spherical.json").read_text())["fits"][0]
    assert fit["exponents"]["v_r"] == pytest.approx(-1.0, abs=0.05)


def test_oracle_compare(tmp_path):
    cfg = write(tmp_path, scale='kind = "power"\nl = 0.9', data='n = 1\nv0 = "gaussian"\nepsilon = 0.3',
                extra="[oracle]\nN = [100, 200]\nt_end = 1.0\nsnapshots = 2\n")
    out = tmp_path / "out"
    assert run_config(["oracle-compare", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "oracle.json").read_text())
    assert [lv["N"] for lv in rep["levels"]] == [100, 200]
    assert 1.5 < rep["linf_v_ratios"][0] < 2.5


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path)
    out = tmp_path / "out"
    res = subprocess.run([sys.executable, "-m", "flrwdust.cli", "thresholds", "--config", cfg, "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (out / "thresholds.json").exists()
