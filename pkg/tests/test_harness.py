import configparser

import numpy as np
import pytest

from shearlab import cli
from shearlab.harness import cmd_simulate
from shearlab.config import RunConfig
from shearlab.solver import TrajectoryRecord

from conftest import CONFIGS

SMALL_COUETTE = """
[run]
regime = monotone

[domain]
kind = truncated_line
n = 256
half_width = 10

[flow]
family = couette

[physics]
nu = 0.1
k = 1

[initial]
preset = {preset}

[time]
dt = 5e-3
t_end_sat = 4
sample_every = 4

[validation]
c = 1
time_samples = 5
"""

SMALL_TAYLOR = """
[run]
regime = taylor

[domain]
kind = channel
n = 65

[flow]
family = parabola

[physics]
nu = 0.1
k = {k}

[initial]
preset = sine_mode
m = 1

[time]
t_end = 4
sample_every = 5

[validation]
g2 = 1
g3 = 0.5
m0 = 1
r0 = 0.5
time_samples = 5
"""

SMALL_NONDEGENERATE = """
[run]
regime = nondegenerate

[domain]
kind = torus
n = 64

[flow]
family = decaying_sine

[reference]
family = static_sine

[physics]
nu = 1e-2
k = 1

[initial]
preset = sine_mode
m = 1

[time]
t_end = 20

[validation]
g0 = 8
g1 = 8
r = 1
time_samples = 11

[sweep]
axis = nu
values = {values}

[spectral]
eps = 1e-2, 1e-3
n = 64
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def _manifest(path):
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str
    p.read(path)
    return p


@pytest.mark.parametrize("name", ["couette_oracle.ini", "nondegenerate.ini", "taylor.ini"])
def test_validate_shipped_configs(name, tmp_path):
    assert cli.run(["validate", "--config", str(CONFIGS / name), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "validation.json").exists()
    assert _manifest(tmp_path / "manifest.ini").get("manifest", "status") == "passed"


def test_taylor_wavenumber_gate(tmp_path, capsys):
    cfg = _write(tmp_path, "t.ini", SMALL_TAYLOR.format(k=0.2))
    assert cli.run(["validate", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 2
    assert "taylor_wavenumber_gate" in capsys.readouterr().out
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
    assert _manifest(tmp_path / "s" / "manifest.ini").get("manifest", "status") == \
        "validation_failed"


def test_force_is_recorded(tmp_path):
    cfg = _write(tmp_path, "t.ini", SMALL_TAYLOR.format(k=0.2))
    out = tmp_path / "s"
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(out), "--force",
                    "--no-plots"]) == 0
    man = _manifest(out / "manifest.ini")
    assert man.get("manifest", "force") == "true"
    assert man.get("params", "status") == "forced"


@pytest.mark.parametrize("text", [
    "[run]\nregime = monotone\n",                               # missing sections
    SMALL_COUETTE.format(preset="gaussian_bump").replace("nu = 0.1", "nu = -1"),
    SMALL_COUETTE.format(preset="gaussian_bump").replace("regime = monotone", "regime = taylor"),
    "not an ini file",
])
def test_malformed_config_exit_code(tmp_path, text):
    cfg = _write(tmp_path, "bad.ini", text)
    assert cli.run(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_missing_config_file(tmp_path):
    assert cli.run(["validate", "--config", str(tmp_path / "nope.ini"),
                    "--out", str(tmp_path / "o")]) == 4


def test_simulate_zero_data(tmp_path):
    cfg = _write(tmp_path, "z.ini", SMALL_COUETTE.format(preset="zero"))
    out = tmp_path / "run"
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(out), "--no-plots"]) == 0
    rec = TrajectoryRecord.read_csv(out / "trajectory.csv")
    for col in ("l2sq", "h1sq", "cross_term", "functional", "boundary_mass"):
        assert np.all(rec[col] == 0.0)
    assert "insufficient decay" in _manifest(out / "manifest.ini").get("results", "fit_status")


def test_simulate_writes_artifacts(tmp_path):
    cfg = RunConfig.from_string(SMALL_COUETTE.format(preset="gaussian_bump"))
    res = cmd_simulate(cfg, tmp_path)
    for name in ("trajectory.csv", "trajectory.svg", "validation.txt", "validation.json",
                 "manifest.ini"):
        assert (tmp_path / name).exists()
    man = _manifest(tmp_path / "manifest.ini")
    assert man.get("manifest", "status") == "complete"
    assert man.has_option("files", "trajectory.csv")
    assert res.summary["certificate_pass"] == "true"
    assert float(man.get("results", "delta_hat")) == res.summary["delta_hat"]


def test_refit_reproduces_rate(tmp_path, capsys):
    cfg = _write(tmp_path, "c.ini", SMALL_COUETTE.format(preset="gaussian_bump"))
    out = tmp_path / "run"
    assert cli.run(["simulate", "--config", str(cfg), "--out", str(out), "--no-plots"]) == 0
    delta = float(_manifest(out / "manifest.ini").get("results", "delta_hat"))
    capsys.readouterr()
    assert cli.run(["fit", str(out)]) == 0
    assert f"delta_hat = {delta!r}" in capsys.readouterr().out
    assert (out / "fit.txt").exists()
    # a window too narrow for two e-folds is refused
    assert cli.run(["fit", str(out), "--lo", "5", "--hi", "5.5"]) == 3


def test_refit_without_trajectory(tmp_path):
    assert cli.run(["fit", str(tmp_path)]) == 4


def test_sweep_needs_four_points(tmp_path):
    cfg = _write(tmp_path, "n.ini", SMALL_NONDEGENERATE.format(values="1e-2"))
    assert cli.run(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 4


def test_sweep_small(tmp_path, monkeypatch):
    monkeypatch.setenv("SHEARLAB_THREADS", "1")
    cfg = _write(tmp_path, "n.ini", SMALL_COUETTE.format(preset="gaussian_bump") +
                 "\n[sweep]\naxis = nu\nvalues = 0.1, 0.03, 0.01, 0.001\n")
    out = tmp_path / "s"
    assert cli.run(["sweep", "--config", str(cfg), "--out", str(out), "--no-plots"]) == 0
    lines = (out / "rates.csv").read_text().splitlines()
    assert lines[0] == "nu,k,delta_hat,r_squared,window_lo,window_hi"
    nus = [float(line.split(",")[0]) for line in lines[1:]]
    assert nus == sorted(nus) and len(nus) == 4
    assert all((out / f"point_{i:02d}" / "trajectory.csv").exists() for i in range(4))


def test_spectral_csv(tmp_path):
    cfg = _write(tmp_path, "n.ini", SMALL_NONDEGENERATE.format(values="1e-2"))
    out = tmp_path / "sp"
    assert cli.run(["spectral", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "spectral.csv").read_text().splitlines()
    assert lines[0] == "eps,n,constant,converged"
    assert len(lines) == 3
    for line in lines[1:]:
        eps, n, constant, converged = line.split(",")
        assert int(n) == 64 and float(constant) >= 1.0 and converged in ("true", "false")
    assert (out / "spectral.svg").exists()


def test_spectral_rejects_monotone(tmp_path):
    cfg = _write(tmp_path, "c.ini", SMALL_COUETTE.format(preset="gaussian_bump"))
    assert cli.run(["spectral", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_module_entry_point():
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "shearlab", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
