import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from qmmw.cli import main, parse_schedule, CLIError
from qmmw.fixtures import computational_pvm, get_fixture
from qmmw.game import QuantumGame
from qmmw.io import save_game


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- validate


def test_validate_builtin():
    code, out = run_cli("validate", "--game", "matching-pennies")
    assert code == 0 and "pass" in out


def test_validate_non_hermitian_file(tmp_path):
    w = np.zeros((2, 4, 4), dtype=complex)
    w[0, 0, 1] = 1.0
    w[1] = -w[0]
    path = tmp_path / "bad.json"
    save_game(QuantumGame.from_observables((2, 2), w), path)
    code, out = run_cli("validate", "--game", str(path))
    assert code == 1 and "hermiticity" in out and "W_1" in out


def test_validate_incomplete_povm(tmp_path):
    path = tmp_path / "short.json"
    save_game(QuantumGame.from_povm((2, 2), 0.9 * computational_pvm((2, 2)), np.zeros((4, 2))),
              path)
    code, out = run_cli("validate", "--game", str(path))
    assert code == 1 and "completeness 0.1" in out


def test_unknown_game(capsys):
    code, _ = run_cli("validate", "--game", "no-such-game")
    assert code == 1


# ---------------------------------------------------------------- run


def test_mmw_run_outputs(tmp_path):
    out_dir = tmp_path / "mmw"
    code, _ = run_cli("run", "--game", "matching-pennies", "--algo", "mmw", "--T", "1000",
                      "--out", str(out_dir))
    assert code == 0
    names = sorted(os.listdir(out_dir))
    assert names == ["manifest.json", "rate_fit.csv", "seed_0000.csv", "summary.csv"]
    rows = read_csv(out_dir / "seed_0000.csv")
    assert list(rows[0]) == ["t", "gap", "bregman", "payoff_1", "payoff_2", "energy_residual",
                             "delta_t", "gamma_t"]
    assert len(rows) == 1000
    gap = np.array([float(r["gap"]) for r in rows])
    assert np.all(np.diff(gap) <= 1e-12)
    assert min(float(r["energy_residual"]) for r in rows) >= -1e-8
    summary = read_csv(out_dir / "summary.csv")
    assert len(summary) == 1000 and "bound" in summary[0]
    man = json.loads((out_dir / "manifest.json").read_text())
    assert man["config"]["algo"] == "mmw" and len(man["config_hash"]) == 64
    assert man["seeds"][0]["file"] == "seed_0000.csv"


def test_numbers_have_full_precision(tmp_path):
    out_dir = tmp_path / "p"
    run_cli("run", "--game", "skewed-pennies", "--algo", "3mw-2pe", "--T", "50", "--out",
            str(out_dir))
    rows = read_csv(out_dir / "seed_0000.csv")
    g = rows[-1]["gamma_t"]
    assert len(g.replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_same_config_twice_is_byte_identical(tmp_path):
    args = ["run", "--game", "skewed-pennies", "--algo", "3mw-1pe", "--T", "3000", "--seeds",
            "2"]
    run_cli(*args, "--out", str(tmp_path / "a"))
    run_cli(*args, "--out", str(tmp_path / "b"), "--workers", "2")
    for name in ("seed_0000.csv", "seed_0001.csv", "summary.csv", "rate_fit.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_replay(tmp_path):
    run_cli("run", "--game", "dominant", "--algo", "3mw-2pe", "--T", "400", "--seeds", "2",
            "--base-seed", "9", "--stride", "3", "--out", str(tmp_path / "a"))
    code, _ = run_cli("run", "--manifest", str(tmp_path / "a" / "manifest.json"), "--out",
                      str(tmp_path / "b"))
    assert code == 0
    for name in ("seed_0000.csv", "seed_0001.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = read_csv(tmp_path / "a" / "seed_0000.csv")
    assert rows[0]["gap"] == "nan"
    assert [int(r["t"]) for r in rows[:3]] == [1, 3, 6]


def test_bandit_on_observable_game(tmp_path, capsys):
    w = np.array([np.kron(np.diag([1, -1]), np.diag([1, -1]))] * 2, dtype=complex)
    w[1] *= -1
    path = tmp_path / "obs.json"
    save_game(QuantumGame.from_observables((2, 2), w, zero_sum=True), path)
    code, _ = run_cli("run", "--game", str(path), "--algo", "3mw-1pe", "--T", "10",
                      "--out", str(tmp_path / "o"))
    assert code == 2
    assert "bandit mode requires POVM form" in capsys.readouterr().err


def test_infeasible_schedule(tmp_path, capsys):
    pvm = np.array([np.eye(4) / 2, np.eye(4) / 2])
    path = tmp_path / "lop.json"
    save_game(QuantumGame.from_povm((2, 2), pvm, [[100.0, 100.0], [-99.0, -99.0]]), path)
    code, _ = run_cli("run", "--game", str(path), "--algo", "3mw-1pe", "--T", "10",
                      "--out", str(tmp_path / "x"))
    assert code == 2
    assert "minimal feasible T" in capsys.readouterr().err
    code, _ = run_cli("run", "--game", "matching-pennies", "--algo", "3mw-2pe",
                      "--schedule", "constant:0.1,0.9", "--T", "10", "--out", str(tmp_path / "y"))
    assert code == 2


def test_parse_schedule():
    assert parse_schedule("theorem") == {"kind": "theorem"}
    assert parse_schedule("constant:0.1")["delta0"] == 0.0
    assert parse_schedule("power:0.1,0.9,0.5,0.2") == {"kind": "power", "gamma0": 0.1, "p": 0.9,
                                                        "delta0": 0.5, "q": 0.2}
    with pytest.raises(CLIError):
        parse_schedule("power:1,2")


# ---------------------------------------------------------------- estimator-stats


def test_estimator_stats_sweep(tmp_path):
    path = tmp_path / "m.csv"
    code, _ = run_cli("estimator-stats", "--game", "skewed-pennies", "--algo", "3mw-2pe",
                      "--deltas", "0.2,0.1,0.05", "--n-mc", "20000", "--out", str(path))
    assert code == 0
    rows = read_csv(path)
    assert [float(r["delta"]) for r in rows] == [0.2, 0.1, 0.05]
    assert all(r["bias_pass"] == "True" and r["second_pass"] == "True" for r in rows)


def test_estimator_stats_constant_game():
    code, out = run_cli("estimator-stats", "--game", "constant", "--deltas", "0.2,0.1",
                        "--n-mc", "10000")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert all(float(r["bias"]) < 1e-12 for r in rows)


def test_estimator_stats_rejects_small_n(capsys):
    code, _ = run_cli("estimator-stats", "--game", "matching-pennies", "--n-mc", "9999")
    assert code == 2


# ---------------------------------------------------------------- vs


def test_vs_invalid_schedule(capsys):
    code, out = run_cli("vs", "--game", "dominant", "--schedule", "power:0.1,0.5,0.5,0.2")
    assert code == 2
    assert "sum gamma^2/delta^2 diverges" in capsys.readouterr().err
    assert "FAILS" in out


def test_vs_small_run():
    code, out = run_cli("vs", "--game", "dominant", "--schedule", "power:0.1,0.9,0.7,0.2",
                        "--T", "500", "--seeds", "3", "--cert-samples", "500")
    assert code == 0
    assert "plausible" in out and "success fraction" in out
    assert out.count("final bregman") == 3


def test_vs_warns_on_failing_certificate():
    code, out = run_cli("vs", "--game", "matching-pennies", "--schedule",
                        "power:0.1,0.9,0.5,0.2", "--T", "100", "--cert-samples", "200")
    assert code == 0 and "warning" in out


# ---------------------------------------------------------------- report and entry point


def test_report(tmp_path):
    d = tmp_path / "r"
    run_cli("run", "--game", "skewed-pennies", "--algo", "mmw", "--T", "200", "--out", str(d))
    code, out = run_cli("report", "--out", str(d))
    assert code == 0 and "tail slope" in out and "final mean gap" in out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "qmmw.cli", "validate", "--game",
                          "skewed-pennies"], capture_output=True, text=True)
    assert res.returncode == 0 and "pass" in res.stdout
    assert get_fixture("skewed-pennies").zero_sum
