"""Golden-file and exit-status tests for the command-line tool.

Set LBTRANSPORT_REGEN_GOLDEN=1 to rewrite the golden files after an
intentional output change.
"""
import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from lbtransport.cli import COMMANDS, main
from lbtransport.config import ConfigError, load_config, parse_grid

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"
REGEN = os.environ.get("LBTRANSPORT_REGEN_GOLDEN") == "1"

SHIPPED = ("friedrichs", "three_terminal_ab", "bound_state")
CASES = [(cfg, cmd) for cfg in SHIPPED for cmd in COMMANDS]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def warn_lines(err):
    return [line for line in err.splitlines() if line.startswith("WARN:")]


def run_case(capsys, tmp_path, cfg, cmd, tag=""):
    out = tmp_path / f"{cfg}.{cmd}{tag}.csv"
    code, _, err = run(capsys, cmd, "--config", CONFIGS / f"{cfg}.toml", "--out", out, "-q")
    files = {"csv": out.read_text(encoding="utf-8") if out.exists() else ""}
    summary = Path(str(out) + ".summary.json")
    if summary.exists():
        files["summary"] = summary.read_text(encoding="utf-8")
    return code, files, warn_lines(err)


def assert_numeric_csv_close(got, want, rtol=1e-8, atol=1e-12):
    rows_g = list(csv.reader(got.splitlines()))
    rows_w = list(csv.reader(want.splitlines()))
    assert rows_g[0] == rows_w[0]
    assert len(rows_g) == len(rows_w)
    a = np.array(rows_g[1:], dtype=float)
    b = np.array(rows_w[1:], dtype=float)
    np.testing.assert_allclose(a, b, rtol=rtol, atol=atol)


@pytest.mark.parametrize("cfg,cmd", CASES, ids=[f"{c}-{m}" for c, m in CASES])
def test_golden(capsys, tmp_path, cfg, cmd):
    code, files, warns = run_case(capsys, tmp_path, cfg, cmd)
    path = lambda ext: GOLDEN / f"{cfg}.{cmd}.{ext}"  # noqa: E731
    meta_path = path("meta.json")
    if REGEN:
        path("csv").write_text(files["csv"], encoding="utf-8")
        if "summary" in files:
            path("summary.json").write_text(files["summary"], encoding="utf-8")
        meta_path.write_text(json.dumps({"exit": code, "warnings": warns}, indent=2) + "\n", encoding="utf-8")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    assert code == meta["exit"]
    assert [w.split(" ")[0:2] for w in warns] == [w.split(" ")[0:2] for w in meta["warnings"]]
    want = path("csv").read_text(encoding="utf-8")
    if cmd == "quench":
        # dense diagonalization: compare numerically, determinism is tested separately
        assert_numeric_csv_close(files["csv"], want)
        got_s = json.loads(files["summary"])
        want_s = json.loads(path("summary.json").read_text(encoding="utf-8"))
        assert got_s["bound_states"] == pytest.approx(want_s["bound_states"], abs=1e-9)
        assert got_s["warnings"] == want_s["warnings"]
    else:
        assert files["csv"] == want


@pytest.mark.parametrize("cmd", ["tmatrix", "currents", "entropy", "verify", "quench"])
def test_two_runs_are_byte_identical(capsys, tmp_path, cmd):
    first = run_case(capsys, tmp_path, "bound_state", cmd, ".a")
    second = run_case(capsys, tmp_path, "bound_state", cmd, ".b")
    assert first == second


def test_stdout_when_no_out(capsys, tmp_path):
    code, out, _ = run(capsys, "bands", "--config", CONFIGS / "friedrichs.toml", "-q")
    assert code == 0
    assert out == (GOLDEN / "friedrichs.bands.csv").read_text(encoding="utf-8")


def test_defaults_logged_at_info(capsys):
    code, _, err = run(capsys, "validate", "--config", CONFIGS / "friedrichs.toml")
    assert code == 0
    assert "INFO: config key=tol_quad value=1e-08 source=default" in err


def test_verify_friedrichs_lists_residuals(capsys, tmp_path):
    out = tmp_path / "v.csv"
    code, _, _ = run(capsys, "verify", "--config", CONFIGS / "friedrichs.toml", "--out", out, "-q")
    assert code == 0
    rows = {r[0]: r for r in csv.reader(out.read_text().splitlines()[1:])}
    for name in (
        "optical_residual",
        "unitarity_residual",
        "normality_residual",
        "rowcol_residual",
        "charge_conservation",
        "energy_conservation",
    ):
        assert rows[name][3] == "pass"


# -- exit-status contract ---------------------------------------------------

FRIEDRICHS_TEXT = (CONFIGS / "friedrichs.toml").read_text()


def write_cfg(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_tmatrix_outside_bands_is_empty(capsys, tmp_path):
    out = tmp_path / "t.csv"
    code, _, err = run(capsys, "tmatrix", "--config", CONFIGS / "friedrichs.toml", "--grid", "3:5:11", "--out", out)
    assert code == 0
    assert len(out.read_text().splitlines()) == 1
    assert any("no_open_channels" in w for w in warn_lines(err))


def test_quench_past_echo_exits_1(capsys, tmp_path):
    code, _, err = run(
        capsys, "quench", "--config", CONFIGS / "friedrichs.toml", "--lead-length", "200", "--window", "40:100",
        "--out", tmp_path / "q.csv",
    )
    assert code == 1
    assert "echo bound 80" in err


def test_invalid_model_exits_1(capsys, tmp_path):
    bad = FRIEDRICHS_TEXT.replace("matrix = [[[0.25, 0.0]]]", "matrix = [[0, 1], [0, 0]]")
    bad = bad.replace('scatterer_vector = [[1.0, 0.0]]', 'scatterer_vector = [1.0, 0.0]')
    code, _, err = run(capsys, "validate", "--config", write_cfg(tmp_path, bad))
    assert code == 1
    assert "ERROR: scatterer not self-adjoint" in err


def test_unknown_reservoir_lead_exits_1(capsys, tmp_path):
    bad = FRIEDRICHS_TEXT.replace("lead = 2\nbeta", "lead = 7\nbeta")
    code, _, err = run(capsys, "currents", "--config", write_cfg(tmp_path, bad))
    assert code == 1
    assert "reservoirs[1].lead: unknown lead 7" in err


def test_missing_config_exits_1(capsys, tmp_path):
    code, _, err = run(capsys, "bands", "--config", tmp_path / "nope.toml")
    assert code == 1
    assert "cannot read" in err


def test_quadrature_failure_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "currents", "--config", CONFIGS / "friedrichs.toml", "--tol-quad", "1e-300", "-q")
    assert code == 2
    assert "quadrature failed to converge" in err


def test_failed_verification_exits_3(capsys, tmp_path):
    out = tmp_path / "v.csv"
    code, _, err = run(capsys, "verify", "--config", CONFIGS / "friedrichs.toml", "--tol-scatter", "1e-30", "--out", out, "-q")
    assert code == 3
    assert "FAIL" in out.read_text()
    assert any("verification_failed" in w for w in warn_lines(err))


def test_entropy_warns_on_broken_time_reversal(capsys, tmp_path):
    code, _, err = run(capsys, "entropy", "--config", CONFIGS / "three_terminal_ab.toml", "--out", tmp_path / "e.csv", "-q")
    assert code == 0
    assert any("time_reversal_breaking" in w for w in warn_lines(err))


def test_currents_footer(capsys, tmp_path):
    out = tmp_path / "c.csv"
    assert run(capsys, "currents", "--config", CONFIGS / "friedrichs.toml", "--out", out, "-q")[0] == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "lead,beta,mu,charge_current,energy_current,particle_current"
    assert len(lines) == 4 and lines[-1].startswith("#sigma,from_currents=")


# -- config parsing ----------------------------------------------------------

MINIMAL = """
[scatterer]
matrix = [[0.0]]
[[leads]]
id = 1
onsite = 0.0
hopping = 1.0
[[leads]]
id = 2
onsite = 0.0
hopping = 1.0
[[couplings]]
lead = 1
strength = 0.5
scatterer_vector = [1.0]
lead_vector = { "1" = 1.0 }
[[couplings]]
lead = 2
strength = 0.5
scatterer_vector = [1.0]
lead_vector = { "1" = 1.0 }
"""


def test_minimal_config_gets_defaults(tmp_path):
    cfg = load_config(write_cfg(tmp_path, MINIMAL))
    assert cfg.tol_quad == 1e-8
    assert cfg.lead_length == 600
    assert cfg.states == []


def test_config_unknown_lead(tmp_path):
    text = MINIMAL + "[[reservoirs]]\nlead = 7\nbeta = 1.0\nmu = 0.0\n"
    with pytest.raises(ConfigError, match=r"reservoirs\[0\]\.lead"):
        load_config(write_cfg(tmp_path, text))


def test_config_negative_beta(tmp_path):
    text = MINIMAL + "[[reservoirs]]\nlead = 1\nbeta = -1.0\n[[reservoirs]]\nlead = 2\nbeta = 1.0\n"
    with pytest.raises(ConfigError, match="beta must be positive"):
        load_config(write_cfg(tmp_path, text))


@pytest.mark.parametrize("extra", ['[run]\ntol_quad = -1.0\n', '[run]\ngrid = "2:1:5"\n', "[run]\nbogus = 1\n"])
def test_config_rejects_bad_run_options(tmp_path, extra):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, MINIMAL + extra))


def test_cli_flags_override_file(tmp_path):
    cfg = load_config(CONFIGS / "friedrichs.toml", {"lead_length": 200, "grid": "-1:1:3"})
    assert cfg.lead_length == 200
    np.testing.assert_allclose(cfg.energies, [-1, 0, 1])
    assert parse_grid([0, 1, 2]) == (0.0, 1.0, 2)
