"""Config parsing, the experiment driver and its file outputs."""

import csv
import os

import numpy as np
import pytest

from geomflow.cli import (CSV_HEADER, EXIT_CONFIG, EXIT_DEGENERACY, EXIT_OK,
                          load_config, main, run_eoc, run_single,
                          validate_config)
from geomflow.errors import ConfigError


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


MINIMAL = """
[geometry]
shape = circle
segments = 16

[scheme]
flow = mcf
degree = 1
tau = 1e-3

[run]
n_steps = 3
"""


# -- config loading ---------------------------------------------------------------


def test_defaults_resolved(tmp_path):
    config = load_config(write(tmp_path, MINIMAL))
    assert config.scheme.variant == "bgn_quadrature"
    assert config.scheme.picard_tol == 1e-12
    assert config.snapshots == 10
    # default quadrature order for degree 1 is 10 * degree
    assert config.raw["scheme"]["quad_order"] == "10"


def test_unknown_key_and_section_listed(tmp_path):
    bad = MINIMAL + "\nstepsize = 2\n\n[outputs]\nkind = vtk\n"
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, bad))
    text = "\n".join(err.value.problems)
    assert "stepsize" in text
    assert "[outputs]" in text


def test_all_problems_reported_at_once(tmp_path):
    bad = """
[geometry]
shape = dodecahedron
segments = 2

[scheme]
flow = levelset
tau = -1

[run]
n_steps = 1
"""
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, bad))
    assert len(err.value.problems) >= 3


def test_final_time_and_n_steps_exclusive(tmp_path):
    bad = MINIMAL.replace("n_steps = 3", "n_steps = 3\nfinal_time = 0.1")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, bad))
    neither = MINIMAL.replace("n_steps = 3", "")
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, neither))


def test_final_time_adjusts_tau(tmp_path):
    text = MINIMAL.replace("n_steps = 3", "final_time = 0.0025")
    config = load_config(write(tmp_path, text))
    # T/tau = 2.5 -> 3 steps of the reduced tau
    assert config.n_steps == 3
    assert config.scheme.tau == pytest.approx(0.0025 / 3, rel=1e-15)
    assert config.tau_adjusted
    assert config.final_time == pytest.approx(0.0025, rel=1e-15)


def test_final_time_exact_multiple_keeps_tau(tmp_path):
    text = MINIMAL.replace("n_steps = 3", "final_time = 0.004")
    config = load_config(write(tmp_path, text))
    assert config.n_steps == 4
    assert not config.tau_adjusted


def test_sp_with_weak_quadrature_rejected(tmp_path):
    bad = """
[geometry]
shape = ellipse
a = 2
b = 1

[scheme]
flow = sd
variant = sp
degree = 3
quad_order = 3

[run]
n_steps = 1
"""
    with pytest.raises(ConfigError) as err:
        load_config(write(tmp_path, bad))
    assert any("quad" in p.lower() for p in err.value.problems)


def test_big_r_maps_to_shape_param(tmp_path):
    text = """
[geometry]
shape = torus
big_r = 3
r = 0.5

[scheme]
flow = mcf

[run]
n_steps = 1
"""
    config = load_config(write(tmp_path, text))
    shape = config.make_shape()
    assert shape.R == 3.0 and shape.r == 0.5


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/exp.ini")


def test_validate_echo(tmp_path):
    echo = validate_config(write(tmp_path, MINIMAL))
    assert "[scheme]" in echo
    assert "quad_order = 10" in echo
    assert "picard_tol = 1e-12" in echo
    assert "n_steps = 3" in echo


# -- run driver --------------------------------------------------------------------


def test_run_writes_csv_and_snapshots(tmp_path):
    config = load_config(write(tmp_path, MINIMAL))
    out = tmp_path / "out"
    final, records = run_single(config, str(out), quiet=True)
    rows = (out / "diagnostics.csv").read_text().splitlines()
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + config.n_steps + 1  # header + initial + steps
    snaps = sorted(p.name for p in out.iterdir() if p.suffix == ".txt")
    assert "snapshot_000000.txt" in snaps
    assert f"snapshot_{config.n_steps:06d}.txt" in snaps


def test_zero_steps_csv(tmp_path):
    text = MINIMAL.replace("n_steps = 3", "n_steps = 0")
    config = load_config(write(tmp_path, text))
    out = tmp_path / "out0"
    run_single(config, str(out), quiet=True)
    rows = (out / "diagnostics.csv").read_text().splitlines()
    assert len(rows) == 2
    first = rows[1].split(",")
    assert first[0] == "0"
    assert float(first[3]) == 1.0  # normalized energy starts at 1


def test_runs_are_deterministic(tmp_path):
    config = load_config(write(tmp_path, MINIMAL))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_single(config, str(out1), quiet=True)
    run_single(config, str(out2), quiet=True)
    assert (out1 / "diagnostics.csv").read_bytes() == \
        (out2 / "diagnostics.csv").read_bytes()


def test_csv_full_precision(tmp_path):
    config = load_config(write(tmp_path, MINIMAL))
    out = tmp_path / "prec"
    _, records = run_single(config, str(out), quiet=True)
    with open(out / "diagnostics.csv") as f:
        rows = list(csv.DictReader(f))
    # round-tripping through the file is exact at 17 significant digits
    for row, rec in zip(rows, records):
        assert float(row["energy"]) == rec.energy
        assert float(row["enclosed"]) == rec.enclosed


# -- eoc driver --------------------------------------------------------------------


def test_eoc_mcf_circle(tmp_path):
    text = """
[geometry]
shape = circle
segments = 32

[scheme]
flow = mcf
variant = bgn_quadrature
degree = 1
tau = 1e-3

[run]
final_time = 0.01

[eoc]
levels = 3
"""
    config = load_config(write(tmp_path, text))
    out = tmp_path / "eoc"
    rows = run_eoc(config, str(out), quiet=True)
    assert len(rows) == 3
    assert rows[0]["order"] == "n/a"
    assert float(rows[-1]["order"]) > 1.7
    header = (out / "eoc.csv").read_text().splitlines()[0]
    assert header == "level,h,tau,error,order"


def test_eoc_mcf_requires_exact_solution(tmp_path):
    text = MINIMAL.replace("shape = circle", "shape = ellipse\na = 2\nb = 1")
    config = load_config(write(tmp_path, text))
    with pytest.raises(ConfigError):
        run_eoc(config, quiet=True)


def test_eoc_rejects_past_extinction(tmp_path):
    text = MINIMAL.replace("n_steps = 3", "final_time = 0.9").replace(
        "tau = 1e-3", "tau = 0.01")
    config = load_config(write(tmp_path, text))
    with pytest.raises(ConfigError):
        run_eoc(config, quiet=True)  # extinction at r0^2 / 2 = 0.5


def test_eoc_thread_env(tmp_path, monkeypatch):
    text = """
[geometry]
shape = circle
segments = 16

[scheme]
flow = mcf
degree = 1
tau = 1e-3

[run]
n_steps = 2

[eoc]
levels = 2
"""
    config = load_config(write(tmp_path, text))
    serial = run_eoc(config, quiet=True)
    monkeypatch.setenv("GEOMFLOW_THREADS", "2")
    threaded = run_eoc(config, quiet=True)
    assert [r["error"] for r in serial] == [r["error"] for r in threaded]


# -- entry point -------------------------------------------------------------------


def test_main_validate_ok(tmp_path, capsys):
    assert main(["validate", "--config", write(tmp_path, MINIMAL)]) == EXIT_OK
    assert "quad_order" in capsys.readouterr().out


def test_main_config_error_exit(tmp_path, capsys):
    bad = write(tmp_path, MINIMAL + "\nbogus = 1\n")
    assert main(["validate", "--config", bad]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_main_run_and_degeneracy_exit(tmp_path, capsys):
    text = """
[geometry]
shape = circle
segments = 8
r = 0.05

[scheme]
flow = mcf
degree = 1
tau = 0.5

[run]
n_steps = 5
"""
    # a giant step past extinction collapses the curve
    code = main(["run", "--config", write(tmp_path, text), "--quiet"])
    assert code == EXIT_DEGENERACY
    err = capsys.readouterr().err
    assert "degeneracy" in err and "at step" in err


def test_main_run_ok(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--config", write(tmp_path, MINIMAL),
                 "--output", str(out), "--quiet"])
    assert code == EXIT_OK
    assert (out / "diagnostics.csv").exists()
