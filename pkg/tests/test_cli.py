import json
import subprocess
import sys

import pytest

from dbound.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_json(capsys):
    code, out, _ = run(capsys, "simulate", "--protocol", "swiss-knife", "--n", "16", "--trials", "50", "--json")
    assert code == 0
    d = json.loads(out)
    assert d["acceptance_rate"] == 1.0 and d["mean_err_c"] == 0 and d["trials"] == 50


def test_simulate_noisy_text(capsys):
    code, out, _ = run(capsys, "simulate", "--protocol", "reid", "--n", "16", "--ber", "0.05", "--tau", "4", "--trials", "100")
    assert code == 0 and "acceptance_rate:" in out and "protocol: reid-split" in out


def test_attack_ideal_writes_reports(capsys, tmp_path):
    out_file = tmp_path / "r" / "reports.json"
    code, out, _ = run(capsys, "attack", "ideal", "--n", "10", "--trials", "5", "--out", str(out_file))
    assert code == 0 and "successes: 5" in out
    reports = json.loads(out_file.read_text())
    assert len(reports) == 5 and all(r["success"] and r["bits_correct"] == 10 for r in reports)


def test_attack_noisy_and_hitomi(capsys):
    code, out, _ = run(capsys, "attack", "noisy", "--n", "8", "--ber", "0.01", "--p", "0.9", "--trials", "3")
    assert code == 0 and "mean_sessions" in out
    code, out, _ = run(capsys, "attack", "hitomi", "--n", "8", "--nonce-bits", "3", "--cap", "3000", "--trials", "3")
    assert code == 0 and "accuracy" in out


def test_fraud(capsys):
    code, out, _ = run(capsys, "fraud", "mafia", "--protocol", "reid-split", "--n", "8", "--trials", "100000", "--json")
    d = json.loads(out)
    assert code == 0 and abs(d["p_hat"] - 0.75**8) < 0.01 and d["theorem_bound"] == 0.75**8
    code, out, _ = run(capsys, "fraud", "terrorist", "--protocol", "swiss-knife", "--n", "16", "--v", "4", "--trials", "50000", "--json")
    assert code == 0 and abs(json.loads(out)["p_hat"] - 0.3164) < 0.02


def test_threshold_single(capsys):
    code, out, _ = run(capsys, "threshold", "--n", "40", "--omega", "0.01", "--rho", "1")
    assert code == 0
    assert "tau (real): 10.5" in out and "tau (integer, ceiling): 11" in out and "-> ok" in out
    assert "false-accept bound" in out


def test_threshold_grid_csv(capsys):
    code, out, _ = run(capsys, "threshold", "--n", "20,40", "--omega", "0.01,0.02", "--rho", "1,10", "--grid")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("n,omega,rho,tau") and len(lines) == 9


def test_experiment(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('kind = "threshold_grid"\nn_values = [10, 20]\nseed = 5\n')
    code, out, _ = run(capsys, "experiment", "--config", str(cfg), "--out", str(tmp_path / "o"), "--workers", "2")
    assert code == 0
    assert (tmp_path / "o" / "threshold_grid_5.csv").exists() and (tmp_path / "o" / "threshold_grid_5.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--protocol", "swiss-knife", "--n", "8", "--trials", "0"],
        ["simulate", "--protocol", "swiss-knife", "--n", "8", "--ber", "0.9"],
        ["simulate", "--protocol", "swiss-knife", "--n", "0"],
        ["fraud", "distance", "--protocol", "swiss-knife", "--n", "8", "--v", "2"],
        ["fraud", "terrorist", "--protocol", "swiss-knife", "--n", "8", "--v", "9"],
        ["threshold", "--n", "40", "--omega", "0.4"],
        ["attack", "ideal", "--n", "8", "--protocol", "hitomi"],
    ],
)
def test_bad_values_exit_1(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1 and "error" in err


def test_bad_config_exits_1(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('kind = "nope"\n')
    code, _, err = run(capsys, "experiment", "--config", str(cfg))
    assert code == 1 and "unknown experiment kind" in err


def test_runtime_failure_exits_2(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "attack", "ideal", "--n", "6", "--trials", "1", "--out", str(blocker / "r.json"))
    assert code == 2 and "runtime failure" in err


@pytest.mark.parametrize("argv", [["frobnicate"], ["simulate", "--n", "8"], ["threshold", "--n", "x", "--omega", "0.1"], []])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dbound", "threshold", "--n", "40", "--omega", "0.03", "--rho", "10"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "tau (real)" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "dbound", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 1
