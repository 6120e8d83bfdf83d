import csv
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from freeporous import cli, suites
from freeporous.config import SUITES, ConfigError, load_config
from freeporous.solver import IllPosedError

CHANNEL = """
[mesh]
nx = 4

[interface]
law = bjs
alpha = 1.0

[run]
levels = 4, 8
trials = 5
directions = 5
"""

ENCLOSED = """
[mesh]
nx = 4
[interface]
law = bj
[boundary]
plan = enclosed
[loads]
b_free = 1.0, 0.0
[run]
trials = 5
directions = 5
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    return header, list(csv.reader(ln for ln in lines if not ln.startswith("#")))


def _vtk_sections(path):
    lines = path.read_text().splitlines()
    n_pts = int(next(ln for ln in lines if ln.startswith("POINTS")).split()[1])
    i = next(i for i, ln in enumerate(lines) if ln.startswith("POINTS"))
    pts = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n_pts]])
    j = next(i for i, ln in enumerate(lines) if ln.startswith("CELLS"))
    n_cells = int(lines[j].split()[1])
    cells = np.array([[int(v) for v in ln.split()] for ln in lines[j + 1:j + 1 + n_cells]])
    return lines, pts, cells


def test_solve_smoke(tmp_path, capsys):
    cfg = _write(tmp_path, CHANNEL)
    out = tmp_path / "out"
    assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    lines, pts, cells = _vtk_sections(out / "solution.vtk")
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert np.all(cells[:, 0] == 6) and cells[:, 1:].max() < len(pts)
    assert "VECTORS velocity double" in lines and "SCALARS pressure double 1" in lines
    header, rows = _read_csv(out / "interface_residuals.csv")
    assert header[0].startswith("# freeporous config_sha256=")
    assert header[1] == "# seed=0"
    assert rows[0] == ["edge", "x_mid", "r1", "r2", "r3", "r4"] and len(rows) == 5
    _, power = _read_csv(out / "power.csv")
    assert [r[0] for r in power[1:]] == ["phi_free", "phi_por", "psi_interface", "external_work", "total"]
    assert float(power[-1][1]) < 0
    _, profile = _read_csv(out / "profile.csv")
    assert profile[0] == ["y", "u", "region"]
    assert (out / "profile.svg").read_text().lstrip().startswith("<?xml")
    assert "residual_norm=" in capsys.readouterr().out


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, CHANNEL)
    for name in ("a", "b"):
        assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
        assert cli.main(["verify", "--config", str(cfg), "--suite", "minpower",
                         "--out", str(tmp_path / name), "--threads", "2"]) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_psd_violation_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, """
        [mesh]
        nx = 8

        [interface]
        law = explicit
        a11 = 1.0
        a12 = 2.0
        a22 = 1.0
        """)
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert f"{cfg}:8: [interface] a12:" in err
    assert "semi-definite" in err


@pytest.mark.parametrize("text, where", [
    ("[mesh]\nnx = abc\n", ":2: [mesh] nx: cannot parse"),
    ("[mesh]\nnx = 4\n[bogus]\n", ":3: unknown section [bogus]"),
    ("[mesh]\nnx = 4\n[boundary]\ntop = por_v\n", ":4: [boundary] top:"),
    ("[mesh]\nnx = 4\nsize = 3\n", ":3: [mesh] size: unknown key"),
    ("[run]\nlevels = 16, 8\n", ":2: [run] levels:"),
    ("[porous]\nk = -1\n", ":2: [porous] k:"),
])
def test_config_errors_name_the_line(tmp_path, text, where):
    cfg = _write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        load_config(cfg)
    assert where in str(info.value)


def test_missing_config_file(tmp_path, capsys):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err


@pytest.mark.parametrize("suite", SUITES)
def test_every_suite_passes_and_writes_csv(tmp_path, suite):
    text = ENCLOSED if suite == "uniqueness" else CHANNEL
    cfg = _write(tmp_path, text)
    out = tmp_path / "out"
    assert cli.main(["verify", "--config", str(cfg), "--suite", suite, "--out", str(out)]) == 0
    header, rows = _read_csv(out / f"{suite}_checks.csv")
    assert any(h.startswith("# tolerances:") for h in header)
    assert rows[0] == ["suite", "check", "value", "tolerance", "passed", "detail"]
    assert all(r[4] == "pass" for r in rows[1:])


def test_failed_check_exits_1(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(suites, "GATEAUX_TOL", 0.0)
    cfg = _write(tmp_path, CHANNEL)
    assert cli.main(["verify", "--config", str(cfg), "--suite", "gradient",
                     "--out", str(tmp_path / "o")]) == cli.EXIT_FAIL
    assert "FAIL gradient.max_gateaux_derivative" in capsys.readouterr().out
    _, rows = _read_csv(tmp_path / "o" / "gradient_checks.csv")
    assert ["fail"] == [r[4] for r in rows[1:] if r[1] == "max_gateaux_derivative"]


def test_solver_failure_exits_3(tmp_path, monkeypatch, capsys):
    def broken(system, permutation=None):
        raise IllPosedError("ill-posed configuration: test")

    monkeypatch.setattr("freeporous.problems.solve", broken)
    cfg = _write(tmp_path, CHANNEL)
    assert cli.main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER
    assert "solver error: ill-posed configuration" in capsys.readouterr().err


def test_channel_suite_needs_channel_plan(tmp_path, capsys):
    cfg = _write(tmp_path, ENCLOSED)
    assert cli.main(["verify", "--config", str(cfg), "--suite", "channel",
                     "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "channel boundary plan" in capsys.readouterr().err


def test_output_directory_precedence(tmp_path, monkeypatch):
    cfg = _write(tmp_path, CHANNEL + "out = from_config\n")
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FREEPOROUS_OUT", str(tmp_path / "from_env"))
    assert cli.main(["verify", "--config", str(cfg), "--suite", "jump"]) == 0
    assert (tmp_path / "from_env" / "jump_checks.csv").exists()
    assert cli.main(["verify", "--config", str(cfg), "--suite", "jump", "--out", "flag"]) == 0
    assert (tmp_path / "flag" / "jump_checks.csv").exists()
    monkeypatch.delenv("FREEPOROUS_OUT")
    assert cli.main(["verify", "--config", str(cfg), "--suite", "jump"]) == 0
    assert (tmp_path / "from_config" / "jump_checks.csv").exists()


def test_bad_thread_count(tmp_path):
    cfg = _write(tmp_path, CHANNEL)
    assert cli.main(["verify", "--config", str(cfg), "--suite", "jump", "--threads", "0"]) == 2


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, CHANNEL)
    proc = subprocess.run([sys.executable, "-m", "freeporous", "verify", "--config", str(cfg),
                           "--suite", "jump", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "jump: pass" in proc.stdout


def test_library_and_cli_agree(tmp_path):
    cfg = _write(tmp_path, CHANNEL)
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", str(cfg), "--suite", "gradient", "--seed", "7",
                     "--out", str(out)]) == 0
    lib = suites.run_gradient(load_config(cfg), seed=7)
    _, rows = _read_csv(out / "gradient_gateaux.csv")
    np.testing.assert_array_equal([float(r[1]) for r in rows[1:]], lib.extras["report"].derivatives)
    _, checks = _read_csv(out / "gradient_checks.csv")
    assert [(r[1], float(r[2])) for r in checks[1:]] == [(c.name, c.value) for c in lib.checks]
