import csv
import json
import subprocess
import sys

import pytest

from conftest import CONFIGS
from kreincount.analysis import SPECTRA_COLUMNS
from kreincount.cli import SWEEP_COUNTERS, UsageError, main, parse_dims

REPORT_KEYS = {"inputs", "profile", "operator_inertia", "constrained_indices", "counters",
               "verifications", "spectra_files", "pass"}


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- analyze

def test_analyze_nls_cubic(tmp_path, capsys):
    assert main(["analyze", str(CONFIGS / "nls_cubic.toml"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "nls_cubic_report.json").read_text())
    assert set(rep) == REPORT_KEYS and rep["pass"] is True
    c = rep["counters"]["main"]
    assert c["N_real"] == 0 and c["N_comp"] == 0 and c["Np_zero"] == 1
    spec = _rows(rep["spectra_files"]["main"])
    assert spec and list(spec[0]) == list(SPECTRA_COLUMNS)
    assert "all verifications passed" in capsys.readouterr().out


def test_analyze_synthetic_jordan(tmp_path):
    assert main(["analyze", str(CONFIGS / "synthetic_jordan.toml"), "--out", str(tmp_path)]) == 0
    c = json.loads((tmp_path / "synthetic_jordan_report.json").read_text())["counters"]["main"]
    assert (c["Np_zero"], c["Nn_zero"]) == (1, 1)


def test_analyze_verification_failure(tmp_path, monkeypatch):
    # a zero band this wide swallows the isolated gamma of the out-of-phase pair
    monkeypatch.setenv("KC_TOL_ZERO", "0.5")
    rc = main(["analyze", str(CONFIGS / "dnls_outphase.toml"), "--out", str(tmp_path)])
    assert rc == 1
    assert json.loads((tmp_path / "dnls_outphase_report.json").read_text())["pass"] is False


def test_analyze_numerical_failure(tmp_path):
    cfg = _write(tmp_path, "u.toml", '[model]\nname = "synthetic"\n'
                 'A = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]\n'
                 'K = [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]\n')
    assert main(["analyze", cfg, "--out", str(tmp_path)]) == 3


def test_analyze_malformed_config(tmp_path):
    cfg = _write(tmp_path, "bad.toml", "[model\n")
    assert main(["analyze", cfg, "--out", str(tmp_path)]) == 2


def test_analyze_missing_config(tmp_path):
    assert main(["analyze", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2


def test_analyze_bad_delta(tmp_path):
    cfg = _write(tmp_path, "d.toml", '[model]\nname = "synthetic"\n'
                 'A = [[-1.0, 0.0], [0.0, 1.0]]\nK = [[1.0, 0.0], [0.0, -1.0]]\n')
    assert main(["analyze", cfg, "--out", str(tmp_path), "--delta", "2.5"]) == 2


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("KC_OUT", str(tmp_path / "envout"))
    assert main(["analyze", str(CONFIGS / "synthetic_jordan.toml")]) == 0
    assert (tmp_path / "envout" / "synthetic_jordan_report.json").exists()


def test_report_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["analyze", str(CONFIGS / "dnls_inphase.toml"), "--out", str(d)]) == 0
    ra = json.loads((a / "dnls_inphase_report.json").read_text())
    rb = json.loads((b / "dnls_inphase_report.json").read_text())
    assert ra["counters"] == rb["counters"] and ra["verifications"] == rb["verifications"]


# ---------------------------------------------------------------- random-verify

def test_random_verify_small(tmp_path, capsys):
    assert main(["random-verify", "--trials", "40", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert "40/40 pass" in capsys.readouterr().out
    assert json.loads((tmp_path / "random_verify.json").read_text())["failed"] == 0


def test_random_verify_deterministic(capsys):
    main(["random-verify", "--trials", "25", "--seed", "5", "--no-pontryagin"])
    first = capsys.readouterr().out
    main(["random-verify", "--trials", "25", "--seed", "5", "--no-pontryagin"])
    assert capsys.readouterr().out == first


@pytest.mark.parametrize("argv", [
    ["random-verify", "--trials", "0"],
    ["random-verify", "--dims", "1..4"],
    ["random-verify", "--dims", "five"],
    ["transmogrify"],
    [],
])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_parse_dims():
    assert parse_dims("2..10") == (2, 10)
    with pytest.raises(UsageError):
        parse_dims("10..2")


# ---------------------------------------------------------------- sweep

def test_dnls_sweep_counters_constant(tmp_path):
    assert main(["sweep", str(CONFIGS / "dnls_outphase_sweep.toml"), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "dnls_outphase_sweep_sweep.csv")
    assert len(rows) == 10
    # N_n+ = n(L-) = 1 along the whole branch
    assert all(r["Nn_pos"] == "1" and r["pass"] == "True" and not r["error"] for r in rows)


def test_nls_omega_sweep_counters_constant(tmp_path):
    assert main(["sweep", str(CONFIGS / "nls_omega_sweep.toml"), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "nls_omega_sweep_sweep.csv")
    assert [float(r["omega"]) for r in rows] == [0.5, 1.0, 2.0]
    assert len({tuple(r[k] for k in SWEEP_COUNTERS) for r in rows}) == 1


def test_sweep_empty_range(tmp_path):
    cfg = _write(tmp_path, "e.toml", '[model]\nname = "nls"\nsigma = 1\nomega = 1.0\n'
                 '[sweep]\nparameter = "omega"\nvalues = []\n')
    assert main(["sweep", cfg, "--out", str(tmp_path)]) == 2


def test_sweep_without_table(tmp_path):
    assert main(["sweep", str(CONFIGS / "synthetic_jordan.toml"), "--out", str(tmp_path)]) == 2


def test_sweep_records_row_errors(tmp_path):
    cfg = _write(tmp_path, "k.toml", '[model]\nname = "kdv"\na2 = 1.0\na3 = 0.1\nb1 = -1.0\n'
                 'c = 1.0\n[grid]\nn_points = 64\nL = 20.0\n'
                 '[sweep]\nparameter = "a1"\nvalues = [0.0, -5.0]\n')
    rc = main(["sweep", cfg, "--out", str(tmp_path)])
    rows = _rows(tmp_path / "k_sweep.csv")
    assert rc == 1
    assert rows[-1]["a1"] == "-5.0" and rows[-1]["error"].startswith("WaveSpeedError")


# ---------------------------------------------------------------- entry points

def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "kreincount", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "random-verify" in out.stdout
