import os
import subprocess
import sys

import numpy as np
import pytest

from doublephase.cli import run
from doublephase.config import ConfigError, parse_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

SMALL = """# small reference problem
[grid]
nodes = 17, 17

[exponents]
p = 1.8
q = 2.2

[weight]
mu = x1

[nonlinearity]
family = pure-power
r = 4

[solver]
seed = 3

[geometry]
samples = 20
doublings = 12

[fibering]
field = {field}
"""


@pytest.fixture
def small(tmp_path):
    def make(field="bump", extra=""):
        path = tmp_path / "run.ini"
        path.write_text(SMALL.format(field=field) + extra)
        return str(path)
    return make


def read(path):
    with open(path) as fh:
        return fh.read()


def test_check_log_example(tmp_path):
    out = tmp_path / "chk"
    assert run(["check", "--config", os.path.join(CONFIGS, "log-example.ini"),
                "--out", str(out)]) == 0
    text = read(out / "report.txt")
    assert "verdict=fail" not in text and "hypothesis=f7" in text


def test_solve_writes_outputs(small, tmp_path):
    out = tmp_path / "solve"
    cfg = small()
    assert run(["solve", "--config", cfg, "--out", str(out)]) == 0
    assert read(out / "config.ini") == read(cfg)
    report = read(out / "report.txt")
    for name in ("[u0]", "[v0]", "[w0]", "kind=sign-changing", "status=ok", "seed=3"):
        assert name in report
    assert "H1.p_range" in read(out / "hypotheses.txt")
    u0 = np.loadtxt(out / "u0.csv", delimiter=",", skiprows=1)
    assert u0.shape[0] == 17 * 17


def test_solve_is_reproducible(small, tmp_path):
    cfg = small()
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["solve", "--config", cfg, "--out", str(a)]) == 0
    assert run(["solve", "--config", cfg, "--out", str(b)]) == 0
    assert read(a / "report.txt") == read(b / "report.txt")


def test_solve_refuses_without_force(tmp_path):
    cfg = os.path.join(CONFIGS, "nonmonotone.ini")
    out = tmp_path / "ref"
    assert run(["solve", "--config", cfg, "--out", str(out)]) == 1
    assert "status=refused" in read(out / "report.txt")


def test_fibering(small, tmp_path):
    out = tmp_path / "fib"
    assert run(["fibering", "--config", small(), "--out", str(out)]) == 0
    rows = np.loadtxt(out / "profile.csv", delimiter=",", skiprows=1)
    assert rows.shape == (201, 3)
    assert "t_u=" in read(out / "report.txt")
    assert run(["fibering", "--config", small("zero"), "--out", str(tmp_path / "z")]) == 1


def test_geometry(small, tmp_path):
    out = tmp_path / "geo"
    assert run(["geometry", "--config", small(), "--out", str(out)]) == 0
    assert "sphere_min_phi=" in read(out / "report.txt")


def test_sweep(tmp_path):
    out = tmp_path / "sweep"
    text = read(os.path.join(CONFIGS, "sweep-q.ini")).replace("33, 33", "13, 13")
    cfg = tmp_path / "sweep.ini"
    cfg.write_text(text)
    assert run(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    summary = read(out / "report.txt")
    assert summary.count("status=ok") == 3
    assert os.path.exists(out / "point_002" / "report.txt")


def test_malformed_config_reports_line(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(SMALL.format(field="bump").replace("q = 2.2", "q = 0.5"))
    assert run(["check", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:7:" in err


@pytest.mark.parametrize("text, line", [
    ("p = 1.8\n", 1),
    ("[grid]\nnodes = 9, 9\n[bogus]\n", 3),
    (SMALL.format(field="bump").replace("17, 17", "nine"), 3),
])
def test_config_errors(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "x.ini")
    assert err.value.line == line


def test_unknown_key_rejected():
    text = SMALL.format(field="bump").replace("r = 4", "r = 4\nspeed = 2")
    with pytest.raises(ConfigError, match="speed"):
        parse_config(text)


def test_bad_command_line():
    assert run(["solve"]) == 2
    assert run(["frobnicate", "--config", "x"]) == 2
    assert run(["check", "--config", "/nonexistent.ini", "--out", "/tmp/dp_none"]) == 2


def test_console_script_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "doublephase.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "check" in res.stdout
